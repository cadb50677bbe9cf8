"""Mutation operators with SSA repair, and messy crossover.

Every operator returns a single :class:`~kernelevo.genome.Edit`.  Operands
that would no longer be dominated by their definition at the new site are
rebound to a uniformly chosen value of the same type that is available there,
or to a neutral literal when no such value exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .genome import (
    Copy, Delete, Inapplicable, Move, ReplaceInstr, ReplaceOperand, Swap, apply_edit, fresh_uid,
)
from .ir.core import BOOL, F32, I32, Block, Imm, Kernel
from .ir.dominators import DomTree

OPERATORS = ("copy", "delete", "move", "replace", "swap")

FALLBACK = {F32: Imm(F32, 1.0), I32: Imm(I32, 1), BOOL: Imm(BOOL, True)}
FRESH_LITERAL_PROB = 0.25
MOVE_REWIRE_PROB = 0.5
F32_LITERALS = (0.0, 0.5, 1.0, 2.0)


class NoCandidate(Exception):
    """The operator has nothing to act on in this kernel."""


def size_hint(k: Kernel) -> int:
    """Largest positive i32 literal in the kernel, or the thread count if larger."""
    n = k.threads
    for ins in k.instructions():
        for o in ins.operands:
            if isinstance(o, Imm) and o.type == I32 and o.value > n:
                n = o.value
    return n


def fresh_literals(ty, n: int) -> list:
    if ty == I32:
        return [Imm(I32, v) for v in dict.fromkeys((0, 1, 2, n // 2, n - 1))]
    if ty == F32:
        return [Imm(F32, v) for v in F32_LITERALS]
    if ty == BOOL:
        return [Imm(BOOL, True), Imm(BOOL, False)]
    return []


@dataclass
class MutationContext:
    kernel: Kernel
    rng: np.random.Generator
    dom: DomTree | None = None
    counter: int = 0          # number of edits already in the individual's patch
    size: int | None = None

    def __post_init__(self):
        if self.dom is None:
            self.dom = DomTree(self.kernel)
        if self.size is None:
            self.size = size_hint(self.kernel)


def mutable_instructions(k: Kernel) -> list:
    return [ins for ins in k.instructions() if not ins.is_phi and not ins.is_terminator]


def anchor_instructions(k: Kernel) -> list:
    """Instructions a new instruction may be inserted in front of."""
    return [ins for ins in k.instructions() if not ins.is_phi]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def candidates(k: Kernel, dom: DomTree, ty, block_idx: int, pos: int, types=None,
               exclude=()) -> list:
    """Values of type ``ty`` whose definition strictly precedes ``(block_idx, pos)``."""
    types = types if types is not None else k.value_types()
    out = [p.vid for p in k.param_values() if p.type == ty and p.vid not in exclude]
    out += [v for v in dom.available_at(block_idx, pos) if types[v] == ty and v not in exclude]
    return out


def repair_operands(k: Kernel, inst, at: tuple, dom: DomTree, rng) -> tuple:
    """Choose rebinds for the operands of ``inst`` placed at ``at`` in ``k``.

    ``k`` already contains ``inst`` at ``at = (block index, position)`` and
    ``dom`` is its dominator tree.  Returns ``((operand index, binding), ...)``
    for every operand whose definition does not reach the site.
    """
    bi, pos = at
    types = k.value_types()
    rebinds = []
    for idx, o in enumerate(inst.operands):
        if isinstance(o, Imm) or dom.value_available_at(o, bi, pos):
            continue
        ty = types.get(o)
        if ty is None:
            continue
        pool = candidates(k, dom, ty, bi, pos, types)
        if pool:
            rebinds.append((idx, _pick(rng, pool)))
        elif ty in FALLBACK:
            rebinds.append((idx, FALLBACK[ty]))
        # a pointer with nothing to bind to is left for the sanity check
    return tuple(rebinds)


def _placed(k: Kernel, uid: int) -> tuple:
    return k.locate()[uid]


def _rewire_slots(k: Kernel, dom: DomTree, value_uid: int) -> list:
    """Later non-phi operand slots of matching type dominated by ``value_uid``."""
    types = k.value_types()
    ty = types[value_uid]
    slots = []
    for ins in k.instructions():
        if ins.is_phi or ins.op == "const" or ins.uid == value_uid:
            continue
        if not dom.strictly_dominates(value_uid, ins.uid):
            continue
        for idx, o in enumerate(ins.operands):
            if o == value_uid:
                continue
            ot = o.type if isinstance(o, Imm) else types.get(o)
            if ot == ty:
                slots.append((ins.uid, idx))
    return slots


def _placement(k: Kernel, raw_edit, uid: int, rng):
    """Apply ``raw_edit`` without repairs and compute repairs for ``uid`` in place."""
    try:
        k2 = apply_edit(k, raw_edit, rebinds=False)
    except Inapplicable as e:
        raise NoCandidate(str(e)) from None
    dom2 = DomTree(k2)
    at = _placed(k2, uid)
    ins = k2.blocks[at[0]].instrs[at[1]]
    return k2, dom2, repair_operands(k2, ins, at, dom2, rng)


def _choose_rewire(k2: Kernel, rebinds, uid: int, rng):
    """Pick a rewire slot for the value ``uid`` after applying ``rebinds``."""
    bi, pos = _placed(k2, uid)
    ins = k2.blocks[bi].instrs[pos]
    if not ins.has_result:
        return None
    for idx, b in rebinds:
        ins = ins.with_operand(idx, b)
    blocks = list(k2.blocks)
    instrs = list(blocks[bi].instrs)
    instrs[pos] = ins
    blocks[bi] = Block(blocks[bi].label, tuple(instrs))
    k3 = k2.with_blocks(blocks)
    slots = _rewire_slots(k3, DomTree(k3), uid)
    if not slots:
        return None
    return _pick(rng, slots)


def _require_mutable(ctx):
    pool = mutable_instructions(ctx.kernel)
    if not pool:
        raise NoCandidate("no mutable instruction")
    return pool


def mutate_copy(ctx: MutationContext) -> Copy:
    pool = _require_mutable(ctx)
    src = _pick(ctx.rng, pool)
    anchor = _pick(ctx.rng, anchor_instructions(ctx.kernel))
    new_uid = fresh_uid(src.uid, anchor.uid, ctx.counter)
    raw = Copy(src.uid, anchor.uid, new_uid)
    k2, _, rebinds = _placement(ctx.kernel, raw, new_uid, ctx.rng)
    rewire = _choose_rewire(k2, rebinds, new_uid, ctx.rng)
    return Copy(src.uid, anchor.uid, new_uid, rebinds, rewire)


def mutate_delete(ctx: MutationContext) -> Delete:
    return Delete(_pick(ctx.rng, _require_mutable(ctx)).uid)


def mutate_move(ctx: MutationContext) -> Move:
    pool = _require_mutable(ctx)
    ins = _pick(ctx.rng, pool)
    anchors = [a for a in anchor_instructions(ctx.kernel) if a.uid != ins.uid]
    if not anchors:
        raise NoCandidate("nowhere to move to")
    anchor = _pick(ctx.rng, anchors)
    raw = Move(ins.uid, anchor.uid)
    k2, _, rebinds = _placement(ctx.kernel, raw, ins.uid, ctx.rng)
    rewire = None
    if ctx.rng.random() < MOVE_REWIRE_PROB:
        rewire = _choose_rewire(k2, rebinds, ins.uid, ctx.rng)
    return Move(ins.uid, anchor.uid, rebinds, rewire)


def mutate_replace(ctx: MutationContext):
    if ctx.rng.random() < 0.5:
        return _replace_instruction(ctx)
    return _replace_operand(ctx)


def _replace_instruction(ctx) -> ReplaceInstr:
    pool = _require_mutable(ctx)
    victim = _pick(ctx.rng, pool)
    donors = [d for d in pool if d.uid != victim.uid and d.result_type == victim.result_type]
    if not donors:
        raise NoCandidate(f"no donor with result type {victim.result_type}")
    donor = _pick(ctx.rng, donors)
    raw = ReplaceInstr(victim.uid, donor.uid)
    _, _, rebinds = _placement(ctx.kernel, raw, victim.uid, ctx.rng)
    return ReplaceInstr(victim.uid, donor.uid, rebinds)


def _replace_operand(ctx) -> ReplaceOperand:
    k, dom, rng = ctx.kernel, ctx.dom, ctx.rng
    pool = [ins for ins in k.instructions() if ins.operands]
    if not pool:
        raise NoCandidate("no instruction has operands")
    ins = _pick(rng, pool)
    idx = int(rng.integers(len(ins.operands)))
    cur = ins.operands[idx]
    types = k.value_types()
    ty = cur.type if isinstance(cur, Imm) else types.get(cur)
    literals = [lit for lit in fresh_literals(ty, ctx.size) if lit != cur]
    if ins.op == "const":
        if not literals:
            raise NoCandidate("no alternative literal")
        return ReplaceOperand(ins.uid, idx, _pick(rng, literals))
    if literals and rng.random() < FRESH_LITERAL_PROB:
        return ReplaceOperand(ins.uid, idx, _pick(rng, literals))
    if ins.is_phi:
        pred = k.block(ins.labels[idx])
        bi = dom.block_index[pred.label]
        site = (bi, len(pred.instrs))
    else:
        site = k.locate()[ins.uid]
    pool = candidates(k, dom, ty, site[0], site[1], types, exclude=(cur,))
    if pool:
        return ReplaceOperand(ins.uid, idx, _pick(rng, pool))
    if ty in FALLBACK and FALLBACK[ty] != cur:
        return ReplaceOperand(ins.uid, idx, FALLBACK[ty])
    raise NoCandidate(f"no replacement for operand {idx} of uid {ins.uid}")


def mutate_swap(ctx: MutationContext) -> Swap:
    pool = _require_mutable(ctx)
    if len(pool) < 2:
        raise NoCandidate("swap needs two mutable instructions")
    i, j = ctx.rng.choice(len(pool), size=2, replace=False)
    a, b = pool[int(i)], pool[int(j)]
    raw = Swap(a.uid, b.uid)
    try:
        k2 = apply_edit(ctx.kernel, raw, rebinds=False)
    except Inapplicable as e:
        raise NoCandidate(str(e)) from None
    dom2 = DomTree(k2)
    at_a, at_b = _placed(k2, a.uid), _placed(k2, b.uid)
    ra = repair_operands(k2, a, at_a, dom2, ctx.rng)
    rb = repair_operands(k2, b, at_b, dom2, ctx.rng)
    return Swap(a.uid, b.uid, ra, rb)


_DISPATCH = {
    "copy": mutate_copy, "delete": mutate_delete, "move": mutate_move,
    "replace": mutate_replace, "swap": mutate_swap,
}


def choose_operator(rng) -> str:
    return OPERATORS[int(rng.integers(len(OPERATORS)))]


def random_mutation(ctx: MutationContext, operator: str | None = None):
    """One edit from an operator drawn with equal probability (or the one given)."""
    _require_mutable(ctx)
    op = operator or choose_operator(ctx.rng)
    return _DISPATCH[op](ctx)


def crossover_messy(pa, pb, rng) -> tuple:
    """Concatenate, shuffle and cut at a uniform point in ``[0, len]``."""
    pool = list(pa) + list(pb)
    order = rng.permutation(len(pool))
    shuffled = [pool[i] for i in order]
    cut = int(rng.integers(len(shuffled) + 1))
    return tuple(shuffled[:cut]), tuple(shuffled[cut:])
