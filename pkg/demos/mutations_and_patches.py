"""
Mutations as patches
====================

Every variant is the original kernel plus an ordered list of edits.  Draw a
few random mutations, keep those that still validate, and round-trip the
resulting patch through JSON.
"""
import numpy as np

from kernelevo import corpus
from kernelevo.genome import Inapplicable, apply_edit, apply_patch, dumps_patch, loads_patch
from kernelevo.ir import print_kernel, structural_key, validate
from kernelevo.operators import MutationContext, NoCandidate, random_mutation

b = corpus.load_benchmark("hot-mini")
rng = np.random.default_rng(0)
k, patch = b.kernel, []
while len(patch) < 3:
    try:
        e = random_mutation(MutationContext(k, rng, counter=len(patch)))
        k2 = apply_edit(k, e)
    except (NoCandidate, Inapplicable):
        continue
    if validate(k2):
        continue
    print("applied", e)
    k, patch = k2, patch + [e]

text = dumps_patch(patch)
print(text)
replayed, applied = apply_patch(b.kernel, loads_patch(text))
print("replay matches:", structural_key(replayed) == structural_key(k))
print(print_kernel(replayed))
