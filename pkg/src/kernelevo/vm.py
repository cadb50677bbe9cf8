"""Deterministic multi-threaded interpreter, cycle-cost model and error metric.

Scheduling is phase based: a launch runs in phases separated by ``sync``.
Within a phase, threads run one at a time in ascending thread-id order until
they reach the next ``sync`` or ``ret``.  Shared and global memory are visible
to every thread immediately, so removing a barrier is observable exactly when
a later thread reads something an earlier thread has not written yet.

Each kernel is translated once into a Python generator function (one
generator per thread; ``yield`` marks a barrier).  Costs are summed per basic
block from the cost table, so the reported cost is the cycle total of every
executed instruction over all threads.
"""

from __future__ import annotations

import functools
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np

from .ir.core import ARITH_F32, ARITH_I32, F32, I32, Imm, Kernel, Space

DEFAULT_COSTS = {
    **{op: 1 for op in ARITH_I32 + ARITH_F32},
    "icmp": 1, "fcmp": 1, "select": 1, "phi": 1, "const": 1, "getindex": 1,
    "call": 1, "br": 1, "ret": 1,
    "load.global": 20, "store.global": 20,
    "load.shared": 4, "store.shared": 4,
    "sync": 8,
}
BARRIER_COST = DEFAULT_COSTS["sync"]
DEFAULT_BUDGET = 1_000_000
EPS = 1e-6

COMPLETED = "completed"
TRAP = "trap"
BUDGET_EXCEEDED = "budget-exceeded"


@dataclass(frozen=True)
class ExecConfig:
    thread_count: int
    shared_words: int = 0
    instruction_budget: int = DEFAULT_BUDGET
    cost_table: Mapping = field(default_factory=lambda: dict(DEFAULT_COSTS))

    def __post_init__(self):
        if self.thread_count < 1:
            raise ValueError("thread_count must be positive")
        missing = set(DEFAULT_COSTS) - set(self.cost_table)
        if missing:
            raise ValueError(f"cost table lacks entries for {sorted(missing)}")

    @classmethod
    def for_kernel(cls, k: Kernel, **overrides) -> "ExecConfig":
        return cls(thread_count=k.threads, shared_words=k.shared, **overrides)

    def cost_key(self) -> tuple:
        return tuple(sorted(self.cost_table.items()))


def _dtype(elem) -> np.dtype:
    return np.dtype(np.int32) if elem == I32 else np.dtype(np.float32)


@dataclass
class TestCase:
    """Inputs for one launch plus the oracle outputs of the original kernel."""

    __test__ = False  # not a pytest class

    inputs: dict
    scalars: dict = field(default_factory=dict)
    oracle: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        def bufs(d):
            return {name: {"type": "i32" if a.dtype == np.int32 else "f32",
                           "data": a.tolist()} for name, a in d.items()}

        scalars = {}
        for name, v in self.scalars.items():
            if isinstance(v, (bool, np.bool_)):
                scalars[name] = {"type": "bool", "value": bool(v)}
            elif isinstance(v, (int, np.integer)):
                scalars[name] = {"type": "i32", "value": int(v)}
            else:
                scalars[name] = {"type": "f32", "value": float(np.float32(v))}
        return {"inputs": bufs(self.inputs), "scalars": scalars, "oracle": bufs(self.oracle)}

    @classmethod
    def from_json(cls, doc: dict) -> "TestCase":
        def bufs(d):
            return {name: np.asarray(b["data"], dtype=np.int32 if b["type"] == "i32"
                                     else np.float32) for name, b in d.items()}

        scalars = {}
        for name, s in doc.get("scalars", {}).items():
            if s["type"] == "f32":
                scalars[name] = np.float32(s["value"])
            elif s["type"] == "bool":
                scalars[name] = bool(s["value"])
            else:
                scalars[name] = int(s["value"])
        return cls(bufs(doc["inputs"]), scalars, bufs(doc.get("oracle", {})))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")

    @classmethod
    def load(cls, path) -> "TestCase":
        return cls.from_json(json.loads(Path(path).read_text()))


@dataclass
class ExecResult:
    outputs: dict
    cost: int
    status: str = COMPLETED
    reason: str | None = None

    @property
    def completed(self) -> bool:
        return self.status == COMPLETED


class FitnessVector(NamedTuple):
    """Objectives to minimize: mean simulated cycles and worst-case error."""

    cost: float
    error: float


@dataclass(frozen=True)
class Rejected:
    test_index: int
    reason: str
    error: float = 1.0


class _Trap(Exception):
    pass


class _Budget(Exception):
    pass


# -- helpers referenced by generated code ---------------------------------

def _sdiv(a, b):
    if b == 0:
        raise _Trap("divide-by-zero")
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return ((q + 0x80000000) & 0xFFFFFFFF) - 0x80000000


def _oob():
    raise _Trap("out-of-bounds access")


_f32 = np.float32


def _as_f32(x):
    if type(x) is _f32:
        return x
    return np.frombuffer(struct.pack("<i", x), dtype=np.float32)[0]


def _as_i32(x):
    if type(x) is int:
        return x
    return struct.unpack("<i", struct.pack("<f", x))[0]


_NAMESPACE_BASE = {
    "_sdiv": _sdiv, "_oob": _oob, "_as_f32": _as_f32, "_as_i32": _as_i32,
    "_Budget": _Budget,
}

_CMP = {"eq": "==", "ne": "!=", "lt": "<", "le": "<=", "gt": ">", "ge": ">="}
_IOPS = {"add": "+", "sub": "-", "mul": "*"}
_FOPS = {"fadd": "+", "fsub": "-", "fmul": "*", "fdiv": "/"}


def instruction_cost(ins, types: dict, cost_table: Mapping) -> int:
    if ins.op in ("load", "store"):
        ptr = ins.operands[0]
        space = types[ptr].space if not isinstance(ptr, Imm) else Space.GLOBAL
        return cost_table[f"{ins.op}.{space.value}"]
    return cost_table[ins.op]


def static_cost(k: Kernel, cfg: ExecConfig | None = None) -> int:
    """Sum of cost-table entries over the instructions of ``k`` (each counted once)."""
    cfg = cfg or ExecConfig.for_kernel(k)
    types = k.value_types()
    return sum(instruction_cost(ins, types, cfg.cost_table) for ins in k.instructions())


def _generate(k: Kernel, cost_table: Mapping) -> str:
    types = k.value_types()
    names = {}
    for i, p in enumerate(k.param_values()):
        names[p.vid] = f"a{i}"
    consts = {}

    def opnd(o):
        if isinstance(o, Imm):
            if o.type == F32:
                key = repr(o.value)
                if key not in consts:
                    consts[key] = f"K{len(consts)}"
                return consts[key]
            return repr(o.value)
        return names.get(o, f"v{o}")

    block_ids = {b.label: i for i, b in enumerate(k.blocks)}
    params = [names[p.vid] for p in k.param_values()]
    L = ["def _thread(tid, nthreads, args, budget):"]
    if params:
        L.append(f"    {', '.join(params)}, = args")
    L += ["    if False:", "        yield None", "    n = 0", "    cost = 0", "    b = 0", "    p = -1",
          "    while True:"]
    for bi, blk in enumerate(k.blocks):
        ind = " " * 12
        L.append(f"        if b == {bi}:")
        n_instr = len(blk.instrs)
        c = sum(instruction_cost(ins, types, cost_table) for ins in blk.instrs)
        L.append(f"{ind}n += {n_instr}")
        L.append(f"{ind}if n > budget: raise _Budget()")
        L.append(f"{ind}cost += {c}")
        phis = [ins for ins in blk.instrs if ins.is_phi]
        if phis:
            preds = list(dict.fromkeys(lbl for ins in phis for lbl in ins.labels))
            targets = ", ".join(f"v{ins.uid}" for ins in phis)
            for j, pl in enumerate(preds):
                vals = []
                for ins in phis:
                    m = dict(zip(ins.labels, ins.operands))
                    vals.append(opnd(m[pl]) if pl in m else "None")
                kw = "if" if j == 0 else "elif"
                L.append(f"{ind}{kw} p == {block_ids.get(pl, -1)}:")
                L.append(f"{ind}    {targets}, = {', '.join(vals)},")
        for ins in blk.instrs:
            if ins.is_phi:
                continue
            L.extend(ind + line for line in _emit(ins, opnd, types, block_ids, bi))
    L.append("        raise RuntimeError('fell off the block dispatch')")
    header = [f"{name} = _f32(float('{val}'))" for val, name in consts.items()]
    return "\n".join(header + L) + "\n"


def _emit(ins, opnd, types, block_ids, bi) -> list:
    op = ins.op
    ops = [opnd(o) for o in ins.operands]
    dst = f"v{ins.uid}"
    if op in _IOPS:
        return [f"{dst} = (({ops[0]} {_IOPS[op]} {ops[1]} + 2147483648) & 4294967295) - 2147483648"]
    if op == "sdiv":
        return [f"{dst} = _sdiv({ops[0]}, {ops[1]})"]
    if op in _FOPS:
        return [f"{dst} = {ops[0]} {_FOPS[op]} {ops[1]}"]
    if op in ("icmp", "fcmp"):
        return [f"{dst} = {ops[0]} {_CMP[ins.attr]} {ops[1]}"]
    if op == "select":
        return [f"{dst} = {ops[1]} if {ops[0]} else {ops[2]}"]
    if op == "const":
        return [f"{dst} = {ops[0]}"]
    if op == "call":
        return [f"{dst} = {ins.attr}"]
    if op == "getindex":
        return [f"_q, _j = {ops[0]}", f"{dst} = (_q, _j + {ops[1]})"]
    if op in ("load", "store"):
        lines = [f"_q, _j = {ops[0]}", f"_j += {ops[1]}",
                 "if _j < 0 or _j >= len(_q): _oob()"]
        if op == "store":
            lines.append(f"_q[_j] = {ops[2]}")
            return lines
        shared = types[ins.operands[0]].space is Space.SHARED
        if shared:
            conv = "_as_f32" if ins.type == F32 else "_as_i32"
            lines.append(f"{dst} = {conv}(_q[_j])")
        else:
            lines.append(f"{dst} = _q[_j]")
        return lines
    if op == "sync":
        return [f"yield {ins.uid}"]
    if op == "ret":
        return ["return cost"]
    if op == "br":
        if ops:
            t, f = (block_ids[lbl] for lbl in ins.labels)
            return [f"p = {bi}", f"b = {t} if {ops[0]} else {f}", "continue"]
        return [f"p = {bi}", f"b = {block_ids[ins.labels[0]]}", "continue"]
    raise ValueError(f"cannot execute opcode {op}")


@functools.lru_cache(maxsize=2048)
def _compiled(k: Kernel, cost_key: tuple):
    src = _generate(k, dict(cost_key))
    ns = dict(_NAMESPACE_BASE)
    ns["_f32"] = np.float32
    exec(compile(src, f"<kernel {k.name}>", "exec"), ns)
    return ns["_thread"]


def kernel_source(k: Kernel, cfg: ExecConfig | None = None) -> str:
    """The generated Python for ``k`` (debugging aid)."""
    cfg = cfg or ExecConfig.for_kernel(k)
    return _generate(k, cfg.cost_table)


def _launch_args(k: Kernel, t: TestCase, smem: list):
    args, buffers = [], {}
    for p in k.params:
        if p.type.is_ptr:
            if p.name not in t.inputs:
                raise ValueError(f"test case has no buffer for parameter {p.name!r}")
            arr = np.asarray(t.inputs[p.name], dtype=_dtype(p.elem))
            buf = list(arr) if p.elem == F32 else arr.tolist()
            buffers[p.name] = (buf, p.elem)
            args.append((buf, 0))
        else:
            if p.name not in t.scalars:
                raise ValueError(f"test case has no scalar for parameter {p.name!r}")
            v = t.scalars[p.name]
            if p.type == F32:
                args.append(np.float32(v))
            elif p.type == I32:
                args.append(int(v))
            else:
                args.append(bool(v))
    if k.shared > 0:
        args.append((smem, 0))
    return args, buffers


def execute(k: Kernel, t: TestCase, cfg: ExecConfig | None = None) -> ExecResult:
    """Run one launch of ``k`` (which must pass ``validate``) on test case ``t``."""
    cfg = cfg or ExecConfig.for_kernel(k)
    fn = _compiled(k, cfg.cost_key())
    smem = [0] * cfg.shared_words
    args, buffers = _launch_args(k, t, smem)
    nthreads = cfg.thread_count
    budget = cfg.instruction_budget
    status, reason = COMPLETED, None
    total = 0
    with np.errstate(all="ignore"):
        gens = [fn(tid, nthreads, args, budget) for tid in range(nthreads)]
        live = list(range(nthreads))
        try:
            while live:
                waiting, barrier, finished = [], None, False
                for tid in live:
                    try:
                        at = next(gens[tid])
                    except StopIteration as stop:
                        total += stop.value
                        finished = True
                        continue
                    if barrier is None:
                        barrier = at
                    elif at != barrier:
                        raise _Trap("barrier divergence: threads wait at different syncs")
                    waiting.append(tid)
                if waiting and finished:
                    raise _Trap("barrier divergence: some threads exited past a sync")
                live = waiting
        except _Trap as e:
            status, reason = TRAP, str(e)
        except _Budget:
            status, reason = BUDGET_EXCEEDED, f"a thread exceeded {budget} instructions"
        except (TypeError, IndexError, ValueError, NameError, ZeroDivisionError,
                OverflowError, struct.error) as e:
            # only reachable for kernels that skipped validation
            status, reason = TRAP, f"malformed execution: {e}"
        finally:
            for g in gens:
                g.close()
    outputs = {name: np.array(buf, dtype=_dtype(elem)) for name, (buf, elem) in buffers.items()}
    if status != COMPLETED:
        total = 0
    return ExecResult(outputs, total, status, reason)


def compute_error(candidate, oracle: Mapping) -> float:
    """Worst relative deviation ``|c - o| / max(|o|, 1e-6)`` over all oracle elements.

    ``candidate`` is a mapping of buffers or an :class:`ExecResult`.  Any
    missing buffer, shape mismatch, non-finite deviation or unfinished run
    counts as total failure (1.0); the result is capped at 1.0.
    """
    if isinstance(candidate, ExecResult):
        if not candidate.completed:
            return 1.0
        candidate = candidate.outputs
    worst = 0.0
    for name, o in oracle.items():
        c = candidate.get(name)
        if c is None:
            return 1.0
        o64 = np.asarray(o, dtype=np.float64)
        c64 = np.asarray(c, dtype=np.float64)
        if o64.shape != c64.shape:
            return 1.0
        if o64.size == 0:
            continue
        with np.errstate(all="ignore"):
            rel = np.abs(c64 - o64) / np.maximum(np.abs(o64), EPS)
        same = (c64 == o64) | (np.isnan(c64) & np.isnan(o64))
        rel = np.where(same, 0.0, rel)
        rel = np.where(np.isfinite(rel), rel, 1.0)
        worst = max(worst, float(rel.max()))
        if worst >= 1.0:
            return 1.0
    return worst


def evaluate_fitness(k: Kernel, tests, cfg: ExecConfig | None = None,
                     tolerance: float = 0.0):
    """Run every test; return a :class:`FitnessVector` or :class:`Rejected`.

    Error is the maximum over tests and cost the mean.  With ``tolerance=0``
    any output difference rejects the variant.
    """
    if not tests:
        raise ValueError("evaluate_fitness needs at least one test case")
    cfg = cfg or ExecConfig.for_kernel(k)
    costs, worst = [], 0.0
    for i, t in enumerate(tests):
        r = execute(k, t, cfg)
        if not r.completed:
            return Rejected(i, f"{r.status}: {r.reason}")
        e = compute_error(r.outputs, t.oracle)
        if e > tolerance:
            return Rejected(i, f"error {e:.6g} exceeds tolerance {tolerance:g}", e)
        costs.append(r.cost)
        worst = max(worst, e)
    return FitnessVector(math.fsum(costs) / len(costs), worst)


def make_oracle(k: Kernel, t: TestCase, cfg: ExecConfig | None = None) -> TestCase:
    """Fill ``t.oracle`` with the outputs of ``k`` (normally the original kernel)."""
    r = execute(k, t, cfg)
    if not r.completed:
        raise RuntimeError(f"original kernel failed on a test input: {r.reason}")
    return TestCase(t.inputs, t.scalars, r.outputs)
