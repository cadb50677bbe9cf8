import pytest
from hypothesis import given, strategies as st

from kernelevo.genome import (
    Copy, Delete, Inapplicable, Individual, Move, ReplaceInstr, ReplaceOperand, Swap, apply_edit,
    apply_patch, dumps_patch, edit_from_json, edit_to_json, fresh_uid, loads_patch,
)
from kernelevo.ir import BOOL, F32, I32, Imm, parse_kernel, print_kernel, validate

FRESH = fresh_uid(4, 2, 0)

CHAIN_AFTER_COPY = f"""\
kernel chain(a: ptr<global> f32, out: ptr<global> f32) threads=4
{{
entry:
  %0 = call i32 tid  #uid=0
  %1 = add i32 %0, 1  #uid=1
  %n = fmul f32 1.0, 2.0  #uid={FRESH}
  %2 = load f32 a, %0  #uid=2
  %3 = load f32 a, %1  #uid=3
  %4 = fmul f32 %3, 2.0  #uid=4
  %5 = fadd f32 %4, %2  #uid=5
  %6 = fmul f32 %5, %n  #uid=6
  store out[%0], %6  #uid=7
  ret  #uid=8
}}
"""


def uids(k):
    return [i.uid for i in k.instructions()]


def test_delete_redundant_store(benchmarks):
    k = benchmarks["lud-store"].kernel
    k2 = apply_edit(k, Delete(11))
    assert uids(k2) == [u for u in uids(k) if u != 11]
    before = k.instr_map()
    for ins in k2.instructions():
        assert ins == before[ins.uid]


def test_copy_with_fallback_and_rewire(chain):
    e = Copy(4, 2, FRESH, rebinds=((0, Imm(F32, 1.0)),), rewire=(6, 1))
    k2 = apply_edit(chain, e)
    assert k2 == parse_kernel(CHAIN_AFTER_COPY)
    assert validate(k2) == []


def test_missing_uid_is_inapplicable(chain):
    with pytest.raises(Inapplicable):
        apply_edit(chain, Delete(9999))


@pytest.mark.parametrize("edit", [
    Delete(8),                         # terminator
    Copy(8, 2, FRESH),                 # copy of a terminator
    Copy(4, 2, 3),                     # new uid already used
    Copy(7, 2, FRESH, rewire=(6, 0)),  # rewire of a store
    Move(4, 4),                        # onto itself
    Move(4, 9999),
    ReplaceOperand(4, 2, Imm(F32, 1.0)),
    ReplaceInstr(4, 8),
    Swap(4, 4),
    Swap(4, 8),
])
def test_inapplicable_edits(chain, edit):
    with pytest.raises(Inapplicable):
        apply_edit(chain, edit)


def test_phi_anchor_is_inapplicable(benchmarks):
    k = benchmarks["nw-sync"].kernel
    phi = next(i for i in k.instructions() if i.is_phi)
    with pytest.raises(Inapplicable):
        apply_edit(k, Move(5, phi.uid))
    with pytest.raises(Inapplicable):
        apply_edit(k, Move(phi.uid, 5))


def test_move_and_swap(chain):
    k2 = apply_edit(chain, Swap(2, 3))
    assert uids(k2)[:5] == [0, 1, 3, 2, 4]
    k3 = apply_edit(chain, Move(1, 7))
    assert uids(k3) == [0, 2, 3, 4, 5, 6, 1, 7, 8]
    assert validate(k3)        # %3 now reads %1 before it is defined
    k4 = apply_edit(chain, Move(1, 7, rebinds=(), rewire=None))
    assert k4 == k3


def test_replace_instr_keeps_victim_uid(chain):
    k2 = apply_edit(chain, ReplaceInstr(6, 5))
    ins = k2.instr_map()[6]
    assert ins.op == "fadd" and ins.operands == (4, 2)


def test_rebinds_are_applied(chain):
    k2 = apply_edit(chain, Move(5, 2, rebinds=((0, Imm(F32, 0.5)), (1, Imm(F32, 2.0)))))
    assert k2.instr_map()[5].operands == (Imm(F32, 0.5), Imm(F32, 2.0))
    assert validate(k2) == []


def test_empty_patch(chain):
    k, applied = apply_patch(chain, ())
    assert k == chain and applied == ()


def test_orphaned_edit_is_dropped(chain):
    patch = (Delete(5), ReplaceOperand(5, 0, Imm(F32, 1.0)))
    k, applied = apply_patch(chain, patch)
    assert applied == (Delete(5),)
    assert k == apply_edit(chain, Delete(5))


def test_patch_application_is_deterministic(mini):
    a, _ = apply_patch(mini.kernel, mini.patch)
    b, _ = apply_patch(mini.kernel, mini.patch)
    assert a == b == mini.improved
    assert print_kernel(a) == print_kernel(b)


def test_individual_coherence(mini):
    ind = Individual(mini.improved, mini.patch)
    assert ind.coherent(mini.kernel)
    assert not Individual(mini.kernel, mini.patch).coherent(mini.kernel)


def test_fresh_uid_is_stable_and_high():
    assert fresh_uid(4, 2, 0) == fresh_uid(4, 2, 0)
    assert fresh_uid(4, 2, 0) != fresh_uid(4, 2, 1)
    assert fresh_uid(1, 1, 1) >= 1 << 20


bindings = st.one_of(
    st.integers(-5, 5000),
    st.floats(-4, 4, width=32).map(lambda v: Imm(F32, float(v))),
    st.integers(-100, 100).map(lambda v: Imm(I32, v)),
    st.booleans().map(lambda v: Imm(BOOL, v)),
)
rebind_lists = st.lists(st.tuples(st.integers(0, 2), bindings), max_size=2).map(tuple)
uid = st.integers(0, 2000)
rewires = st.one_of(st.none(), st.tuples(uid, st.integers(0, 2)))
edits = st.one_of(
    st.builds(Copy, uid, uid, uid, rebind_lists, rewires),
    st.builds(Delete, uid),
    st.builds(Move, uid, uid, rebind_lists, rewires),
    st.builds(ReplaceInstr, uid, uid, rebind_lists),
    st.builds(ReplaceOperand, uid, st.integers(0, 2), bindings),
    st.builds(Swap, uid, uid, rebind_lists, rebind_lists),
)


@given(st.lists(edits, max_size=6))
def test_patch_json_round_trip(patch):
    patch = tuple(patch)
    assert loads_patch(dumps_patch(patch)) == patch
    for e in patch:
        assert edit_from_json(edit_to_json(e)) == e


def test_binding_json_format():
    e = ReplaceOperand(3, 1, Imm(F32, 1.0))
    assert edit_to_json(e) == {"kind": "replace-operand", "uid": 3, "operand_index": 1,
                               "new": {"lit": 1.0, "type": "f32"}}
    assert edit_to_json(ReplaceOperand(3, 1, 7))["new"] == {"ref": 7}
