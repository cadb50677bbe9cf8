import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kernelevo import corpus, operators
from kernelevo.genome import Copy, Delete, ReplaceOperand, Swap, apply_edit
from kernelevo.ir import F32, I32, Imm, compute_dominators, parse_kernel, validate
from kernelevo.operators import (
    FALLBACK, OPERATORS, MutationContext, NoCandidate, crossover_messy, fresh_literals,
    mutate_copy, mutate_delete, mutate_move, mutate_replace, mutate_swap, random_mutation,
    repair_operands, size_hint,
)
from kernelevo.vm import TestCase, compute_error, execute

from conftest import CHAIN_SPEC

STRAIGHT = """\
kernel s(x: ptr<global> f32, out: ptr<global> f32) threads=2
{
entry:
  %t = call i32 tid
  %a = load f32 x, %t
  %b = fadd f32 %a, 1.0
  %c = fmul f32 %b, %a
  %i = add i32 %t, 1
  %d = load f32 x, %i
  %e = fsub f32 %c, %d
  %f = fmul f32 %e, 0.5
  store out[%t], %f
  ret
}
"""


def rng(seed=0):
    return np.random.default_rng(seed)


def test_fallback_when_no_value_of_the_type(chain):
    # copy the first mul in front of the first load: the only values there
    # are i32 (tid and tid+1), so its float operand falls back to 1.0
    raw = Copy(4, 2, 99)
    k2 = apply_edit(chain, raw, rebinds=False)
    at = k2.locate()[99]
    ins = k2.blocks[0].instrs[at[1]]
    for seed in range(20):
        assert repair_operands(k2, ins, at, compute_dominators(k2), rng(seed)) == \
            ((0, Imm(F32, 1.0)),)


def test_mutate_copy_rebuilds_dependency(chain):
    found = 0
    for seed in range(400):
        ctx = MutationContext(chain, rng(seed))
        e = mutate_copy(ctx)
        if (e.src_uid, e.insert_before_uid) != (4, 2):
            continue
        found += 1
        assert e.rebinds == ((0, Imm(F32, 1.0)),)
        assert e.rewire is not None
        k2 = apply_edit(chain, e)
        assert validate(k2) == []
        target, idx = e.rewire
        assert k2.instr_map()[target].operands[idx] == e.new_uid
    assert found


def test_no_rebind_when_operand_still_dominated(chain):
    k2 = apply_edit(chain, Copy(5, 7, 99), rebinds=False)
    at = k2.locate()[99]
    ins = k2.blocks[0].instrs[at[1]]
    assert repair_operands(k2, ins, at, compute_dominators(k2), rng()) == ()


def test_repair_exhaustive_straight_line():
    k = parse_kernel(STRAIGHT)
    movable = operators.mutable_instructions(k)
    anchors = operators.anchor_instructions(k)
    for src in movable:
        for anchor in anchors:
            for seed in range(3):
                raw = Copy(src.uid, anchor.uid, 999)
                k2 = apply_edit(k, raw, rebinds=False)
                at = k2.locate()[999]
                ins = k2.blocks[0].instrs[at[1]]
                rebinds = repair_operands(k2, ins, at, compute_dominators(k2), rng(seed))
                k3 = apply_edit(k, Copy(src.uid, anchor.uid, 999, rebinds))
                assert validate(k3) == [], (src.uid, anchor.uid, rebinds)


def test_candidates_are_earlier_same_type_defs():
    k = parse_kernel(STRAIGHT)
    dom = compute_dominators(k)
    ins = list(k.instructions())
    pool = operators.candidates(k, dom, F32, 0, 6)
    assert pool == [ins[1].uid, ins[2].uid, ins[3].uid, ins[5].uid]


def test_copy_of_store_has_no_rewire(chain):
    for seed in range(300):
        e = mutate_copy(MutationContext(chain, rng(seed)))
        if e.src_uid == 7:
            assert e.rewire is None
            return
    pytest.fail("no store copy sampled")


def test_delete_conservative_sync(benchmarks):
    b = benchmarks["nw-sync"]
    k2 = apply_edit(b.kernel, Delete(4))
    assert validate(k2) == []
    for t in corpus.generate_tests(b, 2, 1):
        r0, r1 = execute(b.kernel, t), execute(k2, t)
        assert compute_error(r1, t.oracle) == 0.0
        assert r1.cost < r0.cost


def test_loop_bound_made_one(benchmarks):
    b = benchmarks["lud-unroll"]
    k2 = apply_edit(b.kernel, ReplaceOperand(24, 1, Imm(I32, 1)))
    assert validate(k2) == []
    t = corpus.generate_tests(b, 1, 0)[0]
    assert execute(k2, t).cost < execute(b.kernel, t).cost


def test_swap_independent_adds():
    k = parse_kernel(STRAIGHT)
    ins = list(k.instructions())
    # %c = fmul and %i = add do not depend on each other
    k2 = apply_edit(k, Swap(ins[3].uid, ins[4].uid))
    assert validate(k2) == []
    x = np.array([0.25, 0.5, 0.75], dtype=np.float32)
    t = TestCase({"x": x, "out": np.zeros(2, dtype=np.float32)})
    assert execute(k2, t).outputs["out"].tolist() == execute(k, t).outputs["out"].tolist()


def test_operators_frequencies_uniform(monkeypatch, mini):
    monkeypatch.setattr(operators, "_DISPATCH", {op: (lambda ctx, op=op: op) for op in OPERATORS})
    ctx = MutationContext(mini.kernel, rng(123))
    n = 100_000
    counts = Counter(random_mutation(ctx) for _ in range(n))
    for op in OPERATORS:
        assert abs(counts[op] / n - 0.2) < 0.01


def test_mutation_sequence_is_seeded(benchmarks):
    k = benchmarks["bfs-load"].kernel

    def draws(seed):
        ctx = MutationContext(k, rng(seed))
        out = []
        for _ in range(50):
            try:
                out.append(random_mutation(ctx))
            except NoCandidate:
                out.append(None)
        return out

    assert draws(5) == draws(5)
    assert draws(5) != draws(6)


def test_empty_body_has_no_candidate():
    k = parse_kernel("kernel e(out: ptr<global> f32) { entry: ret }")
    for op in (None,) + OPERATORS:
        with pytest.raises(NoCandidate):
            random_mutation(MutationContext(k, rng()), op)


def test_each_operator_produces_its_kind(chain):
    kinds = {mutate_delete: {"delete"}, mutate_move: {"move"}, mutate_swap: {"swap"},
             mutate_copy: {"copy"}, mutate_replace: {"replace-instr", "replace-operand"}}
    for fn, allowed in kinds.items():
        seen = set()
        for seed in range(60):
            try:
                seen.add(fn(MutationContext(chain, rng(seed))).kind)
            except NoCandidate:
                pass
        assert seen == allowed


def test_replace_operand_can_target_branch_conditions(benchmarks):
    k = benchmarks["hot-branch"].kernel
    hits = set()
    for seed in range(3000):
        try:
            e = operators._replace_operand(MutationContext(k, rng(seed)))
        except NoCandidate:
            continue
        hits.add(k.instr_map()[e.uid].op)
    assert {"br", "phi"} <= hits


def test_literal_sets(benchmarks):
    assert [x.value for x in fresh_literals(I32, 64)] == [0, 1, 2, 32, 63]
    assert [x.value for x in fresh_literals(I32, 2)] == [0, 1, 2]
    assert sorted(x.value for x in fresh_literals(F32, 8)) == [0.0, 0.5, 1.0, 2.0]
    assert FALLBACK[F32] == Imm(F32, 1.0) and FALLBACK[I32] == Imm(I32, 1)
    assert size_hint(benchmarks["lud-unroll"].kernel) >= 64
    assert size_hint(parse_kernel("kernel e(out: ptr<global> f32) threads=8 { entry: ret }")) == 8


# -- fuzz -------------------------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.sampled_from(corpus.BENCHMARKS), st.integers(0, 2**32 - 1))
def test_generated_edits_apply(name, seed):
    k = corpus.load_benchmark(name).kernel
    ctx = MutationContext(k, rng(seed))
    try:
        e = random_mutation(ctx)
    except NoCandidate:
        return
    k2 = apply_edit(k, e)      # never Inapplicable on the kernel it was drawn for
    assert k2.num_instructions() in (k.num_instructions() - 1, k.num_instructions(),
                                     k.num_instructions() + 1)


def test_copy_fuzz_sanity_implies_validate(benchmarks):
    from kernelevo.engine import Evaluator, search_exec_config
    from kernelevo.vm import FitnessVector
    checked = 0
    for name, b in benchmarks.items():
        tests = corpus.generate_tests(b, 1, 0)
        ev = Evaluator(tests, 0.01, search_exec_config(b.kernel, tests))
        for seed in range(170):
            e = mutate_copy(MutationContext(b.kernel, rng(seed)))
            k2 = apply_edit(b.kernel, e)
            if isinstance(ev.check(k2), FitnessVector):
                assert validate(k2) == []
            checked += 1
    assert checked >= 1000


# -- crossover ----------------------------------------------------------------

def test_crossover_conserves_edits():
    e1, e2, e3 = Delete(1), Delete(2), Delete(3)
    for seed in range(50):
        a, b = crossover_messy((e1, e2), (e3,), rng(seed))
        assert Counter(a + b) == Counter((e1, e2, e3))


def test_crossover_empty():
    assert crossover_messy((), (), rng()) == ((), ())


def test_crossover_split_distribution():
    edits = tuple(Delete(i) for i in range(4))
    n = 10_000
    r = rng(42)
    in_first = Counter()
    sizes = Counter()
    for _ in range(n):
        a, b = crossover_messy(edits[:2], edits[2:], r)
        sizes[len(a)] += 1
        in_first.update(a)
    sigma = math.sqrt(0.25 / n)
    for e in edits:
        assert abs(in_first[e] / n - 0.5) < 3 * sigma
    # cut point uniform over 0..4
    p = 1 / 5
    for s in range(5):
        assert abs(sizes[s] / n - p) < 3 * math.sqrt(p * (1 - p) / n)


def test_chain_spec_runs(chain):
    tests = corpus.generate_tests_for(chain, CHAIN_SPEC, 2, 0)
    assert all(t.oracle["out"].shape == (4,) for t in tests)
