"""Core data model of the SSA mini-IR.

Values are identified by integers. An instruction that produces a value
defines the value whose id equals the instruction's uid, so a reference to a
value is also a reference to the instruction that defines it. Kernel
parameters (and the implicit shared-memory base pointer) use negative ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union

import numpy as np


class Space(Enum):
    GLOBAL = "global"
    SHARED = "shared"


@dataclass(frozen=True)
class Type:
    """Scalar or pointer type. ``space`` is set only for pointers."""

    kind: str
    space: Space | None = None

    def __post_init__(self):
        if self.kind not in ("i32", "f32", "bool", "ptr"):
            raise ValueError(f"unknown type kind {self.kind!r}")
        if (self.kind == "ptr") != (self.space is not None):
            raise ValueError("pointer types carry exactly one memory space")

    @property
    def is_ptr(self) -> bool:
        return self.kind == "ptr"

    def __str__(self) -> str:
        if self.kind == "ptr":
            return f"ptr<{self.space.value}>"
        return self.kind


I32 = Type("i32")
F32 = Type("f32")
BOOL = Type("bool")
PTR_GLOBAL = Type("ptr", Space.GLOBAL)
PTR_SHARED = Type("ptr", Space.SHARED)

SCALAR_TYPES = {"i32": I32, "f32": F32, "bool": BOOL}


def type_from_str(text: str) -> Type:
    if text in SCALAR_TYPES:
        return SCALAR_TYPES[text]
    if text == "ptr<global>":
        return PTR_GLOBAL
    if text == "ptr<shared>":
        return PTR_SHARED
    raise ValueError(f"unknown type {text!r}")


@dataclass(frozen=True)
class Imm:
    """An immediate literal operand. f32 values are stored already rounded."""

    type: Type
    value: Union[int, float, bool]

    def __post_init__(self):
        if self.type == F32:
            object.__setattr__(self, "value", float(np.float32(self.value)))
        elif self.type == I32:
            object.__setattr__(self, "value", wrap_i32(int(self.value)))
        elif self.type == BOOL:
            object.__setattr__(self, "value", bool(self.value))
        else:
            raise ValueError("pointer literals are not supported")

    def __str__(self) -> str:
        if self.type == BOOL:
            return "true" if self.value else "false"
        if self.type == F32:
            return str(np.float32(self.value))  # shortest text that rounds back
        return str(self.value)


# an operand is a value id or an immediate
Operand = Union[int, Imm]


def wrap_i32(x: int) -> int:
    return ((x + 0x80000000) & 0xFFFFFFFF) - 0x80000000


ARITH_I32 = ("add", "sub", "mul", "sdiv")
ARITH_F32 = ("fadd", "fsub", "fmul", "fdiv")
PREDICATES = ("eq", "ne", "lt", "le", "gt", "ge")
INTRINSICS = ("tid", "nthreads")

OPCODES = ARITH_I32 + ARITH_F32 + (
    "icmp", "fcmp", "select", "load", "store", "getindex", "phi",
    "br", "sync", "call", "const", "ret",
)

TERMINATORS = ("br", "ret")
VOID_OPS = ("store", "br", "sync", "ret")


@dataclass(frozen=True)
class Instruction:
    """One IR instruction.

    ``type`` is the annotation written after the opcode: the result type for
    most opcodes and the operand type for ``icmp``/``fcmp``.  ``labels`` holds
    branch targets for ``br`` and the incoming block of each operand for
    ``phi``.  ``attr`` is the compare predicate or the intrinsic name.
    """

    uid: int
    op: str
    type: Type | None = None
    operands: tuple = ()
    labels: tuple = ()
    attr: str | None = None

    @property
    def has_result(self) -> bool:
        return self.op not in VOID_OPS

    @property
    def result_type(self) -> Type | None:
        if not self.has_result:
            return None
        if self.op in ("icmp", "fcmp"):
            return BOOL
        return self.type

    @property
    def is_terminator(self) -> bool:
        return self.op in TERMINATORS

    @property
    def is_phi(self) -> bool:
        return self.op == "phi"

    def value_operands(self) -> Iterator[int]:
        for o in self.operands:
            if not isinstance(o, Imm):
                yield o

    def with_operand(self, index: int, new: Operand) -> "Instruction":
        ops = list(self.operands)
        ops[index] = new
        return Instruction(self.uid, self.op, self.type, tuple(ops), self.labels, self.attr)

    def replace(self, **changes) -> "Instruction":
        fields = dict(uid=self.uid, op=self.op, type=self.type, operands=self.operands,
                      labels=self.labels, attr=self.attr)
        fields.update(changes)
        return Instruction(**fields)


@dataclass(frozen=True)
class Param:
    name: str
    type: Type
    elem: Type | None = None  # element type of a global buffer
    vid: int = -1


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple

    @property
    def terminator(self) -> Instruction | None:
        if self.instrs and self.instrs[-1].is_terminator:
            return self.instrs[-1]
        return None

    def successors(self) -> tuple:
        term = self.terminator
        if term is None or term.op != "br":
            return ()
        # a conditional branch to the same label twice is one edge
        return tuple(dict.fromkeys(term.labels))


SHARED_NAME = "shared"
SHARED_VID = -1_000_000


@dataclass(frozen=True)
class Kernel:
    name: str
    params: tuple
    blocks: tuple
    threads: int = 1
    shared: int = 0

    @property
    def entry(self) -> Block:
        return self.blocks[0]

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def instructions(self) -> Iterator[Instruction]:
        for b in self.blocks:
            yield from b.instrs

    def locate(self) -> dict:
        """Map uid -> (block index, position within block)."""
        out = {}
        for bi, b in enumerate(self.blocks):
            for pos, ins in enumerate(b.instrs):
                out[ins.uid] = (bi, pos)
        return out

    def instr_map(self) -> dict:
        return {ins.uid: ins for ins in self.instructions()}

    def param_values(self) -> list:
        """Every parameter-like value: declared params plus the shared base."""
        vals = list(self.params)
        if self.shared > 0:
            vals.append(Param(SHARED_NAME, PTR_SHARED, None, SHARED_VID))
        return vals

    def value_types(self) -> dict:
        types = {p.vid: p.type for p in self.param_values()}
        for ins in self.instructions():
            if ins.has_result:
                types[ins.uid] = ins.result_type
        return types

    def predecessors(self) -> dict:
        preds = {b.label: [] for b in self.blocks}
        for b in self.blocks:
            for s in b.successors():
                if s in preds:
                    preds[s].append(b.label)
        return preds

    def num_instructions(self) -> int:
        return sum(len(b.instrs) for b in self.blocks)

    def with_blocks(self, blocks) -> "Kernel":
        return Kernel(self.name, self.params, tuple(blocks), self.threads, self.shared)


def param_vid(index: int) -> int:
    return -(index + 1)


def structural_key(k: Kernel) -> tuple:
    """Hashable key equal for kernels that differ only in value/uid naming."""
    rename = {p.vid: ("p", i) for i, p in enumerate(k.param_values())}
    n = 0
    for ins in k.instructions():
        if ins.has_result:
            rename[ins.uid] = n
            n += 1
    body = []
    for b in k.blocks:
        rows = []
        for ins in b.instrs:
            ops = tuple(
                (o.type.kind, o.value) if isinstance(o, Imm) else rename.get(o, ("?", o))
                for o in ins.operands
            )
            rows.append((ins.op, str(ins.type) if ins.type else None, ins.attr, ops, ins.labels))
        body.append((b.label, tuple(rows)))
    params = tuple((p.name, str(p.type), str(p.elem) if p.elem else None) for p in k.params)
    return (k.threads, k.shared, params, tuple(body))
