"""
What a barrier costs
====================

The nw-sync benchmark carries three barriers, two of them redundant.  Removing
the planted pair keeps outputs identical and saves two barriers per thread.
"""
from kernelevo import corpus
from kernelevo.vm import compute_error, execute

b = corpus.load_benchmark("nw-sync")
print(b.description)
t = corpus.generate_tests(b, 1, 0)[0]

before = execute(b.kernel, t)
after = execute(b.improved, t)
print("patch:", [f"{e.kind} #{e.uid}" for e in b.patch])
print("cost", before.cost, "->", after.cost, "error", compute_error(after, t.oracle))

# the third barrier is load-bearing
from kernelevo.genome import Delete, apply_patch

syncs = [i.uid for i in b.kernel.instructions() if i.op == "sync"]
k, _ = apply_patch(b.kernel, [Delete(u) for u in syncs])
r = execute(k, t)
print("without any barrier: error", compute_error(r, t.oracle))
