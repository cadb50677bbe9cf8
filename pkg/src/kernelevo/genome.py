"""Edits, patches and individuals.

A variant is the original kernel plus an ordered list of edits.  Edits name
instructions by their stable uid, never by position, so a patch can be
re-applied to the original after crossover has reshuffled it.  An edit whose
anchors are gone is *inapplicable*; :func:`apply_patch` drops it and carries
on with the rest.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Union

from .ir.core import Block, Imm, Instruction, Kernel, type_from_str

# A binding is either a value id (instruction uid or parameter id) or a literal.
Binding = Union[int, Imm]

FRESH_UID_BASE = 1 << 20


class Inapplicable(Exception):
    """The edit cannot be realized on this kernel (missing or unusable anchor)."""


@dataclass(frozen=True)
class Copy:
    src_uid: int
    insert_before_uid: int
    new_uid: int
    rebinds: tuple = ()
    rewire: tuple | None = None  # (target uid, operand index)
    kind = "copy"


@dataclass(frozen=True)
class Delete:
    uid: int
    kind = "delete"


@dataclass(frozen=True)
class Move:
    uid: int
    insert_before_uid: int
    rebinds: tuple = ()
    rewire: tuple | None = None
    kind = "move"


@dataclass(frozen=True)
class ReplaceInstr:
    victim_uid: int
    donor_uid: int
    rebinds: tuple = ()
    kind = "replace-instr"


@dataclass(frozen=True)
class ReplaceOperand:
    uid: int
    operand_index: int
    new: Binding
    kind = "replace-operand"


@dataclass(frozen=True)
class Swap:
    uid_a: int
    uid_b: int
    rebinds_a: tuple = ()
    rebinds_b: tuple = ()
    kind = "swap"


Edit = Union[Copy, Delete, Move, ReplaceInstr, ReplaceOperand, Swap]
EDIT_TYPES = {cls.kind: cls for cls in (Copy, Delete, Move, ReplaceInstr, ReplaceOperand, Swap)}


def fresh_uid(src_uid: int, anchor_uid: int, counter: int) -> int:
    """Deterministic uid for a copied instruction.

    Derived from the source, the insertion anchor and the position of the edit
    within its patch, and placed above the original uid space.
    """
    h = hashlib.blake2b(f"{src_uid}:{anchor_uid}:{counter}".encode(), digest_size=4)
    return FRESH_UID_BASE + int.from_bytes(h.digest(), "little") % (1 << 30)


# -- application -----------------------------------------------------------

class _Body:
    """Mutable working copy of a kernel's blocks."""

    def __init__(self, k: Kernel):
        self.kernel = k
        self.blocks = [[b.label, list(b.instrs)] for b in k.blocks]

    def find(self, uid):
        for bi, (_, instrs) in enumerate(self.blocks):
            for pos, ins in enumerate(instrs):
                if ins.uid == uid:
                    return bi, pos, ins
        raise Inapplicable(f"no instruction with uid {uid}")

    def has(self, uid) -> bool:
        return any(ins.uid == uid for _, instrs in self.blocks for ins in instrs)

    def set(self, bi, pos, ins):
        self.blocks[bi][1][pos] = ins

    def insert_before(self, anchor_uid, ins):
        bi, pos, anchor = self.find(anchor_uid)
        if anchor.is_phi:
            raise Inapplicable(f"cannot insert before phi {anchor_uid}")
        self.blocks[bi][1].insert(pos, ins)

    def remove(self, uid):
        bi, pos, ins = self.find(uid)
        del self.blocks[bi][1][pos]
        return ins

    def build(self) -> Kernel:
        return self.kernel.with_blocks(Block(lbl, tuple(instrs)) for lbl, instrs in self.blocks)


def _movable(ins, what):
    if ins.is_phi or ins.is_terminator:
        raise Inapplicable(f"{what} {ins.uid} is a {ins.op}, which edits may not relocate")


def _rebind(ins: Instruction, rebinds) -> Instruction:
    for idx, b in rebinds:
        if not 0 <= idx < len(ins.operands):
            raise Inapplicable(f"operand index {idx} out of range for uid {ins.uid}")
        ins = ins.with_operand(idx, b)
    return ins


def _rewire(body: _Body, rewire, value_uid):
    if rewire is None:
        return
    target_uid, idx = rewire
    bi, pos, target = body.find(target_uid)
    if not 0 <= idx < len(target.operands):
        raise Inapplicable(f"operand index {idx} out of range for uid {target_uid}")
    body.set(bi, pos, target.with_operand(idx, value_uid))


def apply_edit(k: Kernel, e: Edit, rebinds: bool = True) -> Kernel:
    """Realize one edit; raises :class:`Inapplicable` when it cannot be.

    The result is not validated.  ``rebinds=False`` skips operand rebinding
    and rewiring, which the mutation operators use to look at the raw
    placement before choosing repairs.
    """
    body = _Body(k)
    if isinstance(e, Copy):
        _, _, src = body.find(e.src_uid)
        _movable(src, "copy source")
        if body.has(e.new_uid):
            raise Inapplicable(f"uid {e.new_uid} already in use")
        new = src.replace(uid=e.new_uid)
        if rebinds:
            new = _rebind(new, e.rebinds)
        body.insert_before(e.insert_before_uid, new)
        if rebinds and e.rewire is not None:
            if not new.has_result:
                raise Inapplicable("rewire of an instruction without a result")
            _rewire(body, e.rewire, e.new_uid)
    elif isinstance(e, Delete):
        bi, pos, ins = body.find(e.uid)
        if ins.is_terminator:
            raise Inapplicable(f"cannot delete terminator {e.uid}")
        del body.blocks[bi][1][pos]
    elif isinstance(e, Move):
        if e.uid == e.insert_before_uid:
            raise Inapplicable("move anchored on itself")
        _, _, ins = body.find(e.uid)
        _movable(ins, "moved instruction")
        body.find(e.insert_before_uid)
        body.remove(e.uid)
        if rebinds:
            ins = _rebind(ins, e.rebinds)
        body.insert_before(e.insert_before_uid, ins)
        if rebinds and e.rewire is not None:
            if not ins.has_result:
                raise Inapplicable("rewire of an instruction without a result")
            _rewire(body, e.rewire, ins.uid)
    elif isinstance(e, ReplaceInstr):
        bi, pos, victim = body.find(e.victim_uid)
        _, _, donor = body.find(e.donor_uid)
        _movable(victim, "replaced instruction")
        _movable(donor, "donor")
        new = donor.replace(uid=victim.uid)
        if rebinds:
            new = _rebind(new, e.rebinds)
        body.set(bi, pos, new)
    elif isinstance(e, ReplaceOperand):
        bi, pos, ins = body.find(e.uid)
        if not 0 <= e.operand_index < len(ins.operands):
            raise Inapplicable(f"operand index {e.operand_index} out of range for uid {e.uid}")
        body.set(bi, pos, ins.with_operand(e.operand_index, e.new))
    elif isinstance(e, Swap):
        if e.uid_a == e.uid_b:
            raise Inapplicable("swap of an instruction with itself")
        ba, pa, a = body.find(e.uid_a)
        bb, pb, b = body.find(e.uid_b)
        _movable(a, "swapped instruction")
        _movable(b, "swapped instruction")
        if rebinds:
            a = _rebind(a, e.rebinds_a)
            b = _rebind(b, e.rebinds_b)
        body.set(ba, pa, b)
        body.set(bb, pb, a)
    else:
        raise TypeError(f"not an edit: {e!r}")
    return body.build()


def apply_patch(original: Kernel, patch) -> tuple:
    """Fold :func:`apply_edit` over ``patch``; returns ``(kernel, applied)``."""
    k = original
    applied = []
    for e in patch:
        try:
            k = apply_edit(k, e)
        except Inapplicable:
            continue
        applied.append(e)
    return k, tuple(applied)


# -- individuals -------------------------------------------------------------

@dataclass
class Individual:
    kernel: Kernel
    patch: tuple = ()
    fitness: object = None  # FitnessVector once evaluated
    front: int | None = None
    crowding: float | None = None

    def coherent(self, original: Kernel) -> bool:
        """Does replaying the patch on ``original`` give back this kernel?"""
        k, _ = apply_patch(original, self.patch)
        return k == self.kernel

    def copy(self) -> "Individual":
        return Individual(self.kernel, self.patch, self.fitness)


# -- serialization -----------------------------------------------------------

def binding_to_json(b: Binding):
    if isinstance(b, Imm):
        return {"lit": b.value, "type": str(b.type)}
    return {"ref": int(b)}


def binding_from_json(d) -> Binding:
    if "ref" in d:
        return int(d["ref"])
    return Imm(type_from_str(d["type"]), d["lit"])


def _rebinds_to_json(rb):
    return [[i, binding_to_json(b)] for i, b in rb]


def _rebinds_from_json(rb):
    return tuple((int(i), binding_from_json(b)) for i, b in rb)


def edit_to_json(e: Edit) -> dict:
    d = {"kind": e.kind}
    for name, value in e.__dict__.items():
        if name in ("rebinds", "rebinds_a", "rebinds_b"):
            value = _rebinds_to_json(value)
        elif name == "new":
            value = binding_to_json(value)
        elif name == "rewire" and value is not None:
            value = list(value)
        d[name] = value
    return d


def edit_from_json(d: dict) -> Edit:
    try:
        cls = EDIT_TYPES[d["kind"]]
    except KeyError:
        raise ValueError(f"unknown edit kind {d.get('kind')!r}") from None
    kw = {}
    for name in cls.__dataclass_fields__:
        if name not in d:
            continue
        value = d[name]
        if name in ("rebinds", "rebinds_a", "rebinds_b"):
            value = _rebinds_from_json(value)
        elif name == "new":
            value = binding_from_json(value)
        elif name == "rewire":
            value = None if value is None else (int(value[0]), int(value[1]))
        else:
            value = int(value)
        kw[name] = value
    return cls(**kw)


def patch_to_json(patch) -> list:
    return [edit_to_json(e) for e in patch]


def patch_from_json(doc) -> tuple:
    if not isinstance(doc, list):
        raise ValueError("a patch is a JSON array of edit records")
    return tuple(edit_from_json(d) for d in doc)


def dumps_patch(patch) -> str:
    return json.dumps(patch_to_json(patch), indent=1) + "\n"


def loads_patch(text: str) -> tuple:
    return patch_from_json(json.loads(text))
