"""NSGA-II selection: dominance, non-dominated sorting, crowding, tournaments.

Fitness vectors are sequences of objectives to minimize.  Functions that
take a population work on ``Individual``-like objects with a ``fitness``
attribute; ranking results are plain lists indexed like the population.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def dominates(a, b) -> bool:
    """True if ``a`` is no worse than ``b`` everywhere and better somewhere."""
    better = False
    for x, y in zip(a, b):
        if x > y:
            return False
        if x < y:
            better = True
    return better


def nondominated_sort(fitnesses) -> list:
    """Partition indices into fronts F0, F1, ... (fast non-dominated sort)."""
    n = len(fitnesses)
    dominated_by = [[] for _ in range(n)]   # i dominates these
    count = [0] * n                          # how many dominate i
    for i in range(n):
        fi = fitnesses[i]
        for j in range(i + 1, n):
            fj = fitnesses[j]
            if dominates(fi, fj):
                dominated_by[i].append(j)
                count[j] += 1
            elif dominates(fj, fi):
                dominated_by[j].append(i)
                count[i] += 1
    fronts = []
    current = [i for i in range(n) if count[i] == 0]
    while current:
        fronts.append(current)
        nxt = []
        for i in current:
            for j in dominated_by[i]:
                count[j] -= 1
                if count[j] == 0:
                    nxt.append(j)
        current = sorted(nxt)
    return fronts


def crowding_distance(front) -> list:
    """Normalized neighbour-gap sum per point; boundary points get +inf.

    When several points share an extreme value only the lowest-indexed one
    counts as the boundary, so truncation keeps one copy of each extreme
    before any duplicate.
    """
    n = len(front)
    if n == 0:
        return []
    if n <= 2:
        return [math.inf] * n
    dist = [0.0] * n
    for m in range(len(front[0])):
        order = sorted(range(n), key=lambda i: (front[i][m], i))
        lo, hi = front[order[0]][m], front[order[-1]][m]
        first_hi = min(i for i in range(n) if front[i][m] == hi)
        dist[order[0]] = math.inf
        dist[first_hi] = math.inf
        span = hi - lo
        if span <= 0 or not math.isfinite(span):
            continue
        for r, i in enumerate(order):
            if dist[i] == math.inf:
                continue
            up = front[order[min(r + 1, n - 1)]][m]
            down = front[order[max(r - 1, 0)]][m]
            dist[i] += (up - down) / span
    return dist


@dataclass
class Ranking:
    """Per-individual front index and crowding, indexed like the population."""

    front: list
    crowding: list
    fronts: list


def rank(fitnesses) -> Ranking:
    fronts = nondominated_sort(fitnesses)
    front_of = [0] * len(fitnesses)
    crowd = [0.0] * len(fitnesses)
    for fi, members in enumerate(fronts):
        d = crowding_distance([fitnesses[i] for i in members])
        for i, c in zip(members, d):
            front_of[i] = fi
            crowd[i] = c
    return Ranking(front_of, crowd, fronts)


def _better(r: Ranking, i: int, j: int) -> int | None:
    if r.front[i] != r.front[j]:
        return i if r.front[i] < r.front[j] else j
    if r.crowding[i] != r.crowding[j]:
        return i if r.crowding[i] > r.crowding[j] else j
    return None


def tournament_select(pop, r: Ranking, k: int, rng) -> list:
    """``k`` binary tournaments with replacement."""
    n = len(pop)
    if n == 0:
        raise ValueError("tournament on an empty population")
    picks = rng.integers(n, size=(k, 2))
    coins = rng.random(k)
    out = []
    for (i, j), coin in zip(picks.tolist(), coins.tolist()):
        w = _better(r, i, j)
        if w is None:
            w = i if coin < 0.5 else j
        out.append(pop[w])
    return out


def select_best_indices(r: Ranking, n: int) -> list:
    assert 0 <= n <= len(r.front), "cannot select more individuals than exist"
    chosen = []
    for members in r.fronts:
        if len(chosen) + len(members) <= n:
            chosen.extend(members)
            if len(chosen) == n:
                break
            continue
        rest = sorted(members, key=lambda i: (-r.crowding[i], i))
        chosen.extend(rest[:n - len(chosen)])
        break
    return chosen


def select_best(pop, r: Ranking, n: int) -> list:
    """Whole fronts in order, the last one cut by descending crowding."""
    return [pop[i] for i in select_best_indices(r, n)]
