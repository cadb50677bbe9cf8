"""
Non-dominated sorting and crowding
==================================

Rank a handful of (cost, error) points into fronts, look at crowding inside
the first front and keep the best half.
"""
from kernelevo.nsga import crowding_distance, nondominated_sort, rank, select_best

fits = [(100, 0.0), (90, 0.004), (80, 0.01), (95, 0.0), (120, 0.0), (85, 0.02), (90, 0.01)]
fronts = nondominated_sort(fits)
for n, f in enumerate(fronts):
    print(f"front {n}:", [fits[i] for i in f])

f0 = [fits[i] for i in fronts[0]]
print("crowding in front 0:", crowding_distance(f0))

names = [f"v{i}" for i in range(len(fits))]
print("survivors:", select_best(names, rank(fits), 4))
