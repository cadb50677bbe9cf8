"""Structural validation of kernels.

``validate`` returns a list of :class:`ValidationError`; an empty list means the
kernel is well formed and may be executed.
"""

from __future__ import annotations

from dataclasses import dataclass

from .core import (
    ARITH_F32, ARITH_I32, BOOL, F32, I32, INTRINSICS, Imm, Kernel, Space,
)
from .dominators import DomTree, post_dominators

RULES = (
    "ssa",            # a value or uid defined more than once
    "undefined",      # operand names no value
    "type",           # opcode signature violated
    "terminator",     # missing, misplaced or duplicated terminator
    "phi",            # phi not at block head, or incoming list != predecessors
    "branch-target",  # branch to a label that does not exist
    "unreachable",    # block not reachable from entry
    "dominance",      # use not dominated by its definition
    "sync-divergence",  # barrier under thread-dependent control flow
    "buffer-type",    # load/store type differs from the global buffer's element type
)


@dataclass(frozen=True)
class ValidationError:
    uid: int | None
    rule: str
    message: str

    def __str__(self):
        where = f"#uid={self.uid}" if self.uid is not None else "kernel"
        return f"{where}: [{self.rule}] {self.message}"


def is_valid(k: Kernel) -> bool:
    return not validate(k)


def validate(k: Kernel, dom: DomTree | None = None) -> list:
    errors = []

    def err(uid, rule, msg):
        errors.append(ValidationError(uid, rule, msg))

    if not k.blocks:
        err(None, "terminator", "kernel has no blocks")
        return errors

    # uniqueness
    seen = set()
    for ins in k.instructions():
        if ins.uid in seen:
            err(ins.uid, "ssa", f"uid {ins.uid} defined more than once")
        seen.add(ins.uid)
    if errors:
        return errors

    labels = {b.label for b in k.blocks}
    preds = k.predecessors()
    types = k.value_types()

    # block structure
    structural_ok = True
    for b in k.blocks:
        if not b.instrs or not b.instrs[-1].is_terminator:
            uid = b.instrs[-1].uid if b.instrs else None
            err(uid, "terminator", f"block {b.label} does not end with a terminator")
            structural_ok = False
        for ins in b.instrs[:-1]:
            if ins.is_terminator:
                err(ins.uid, "terminator", f"{ins.op} in the middle of block {b.label}")
                structural_ok = False
        seen_non_phi = False
        for ins in b.instrs:
            if ins.is_phi:
                if seen_non_phi:
                    err(ins.uid, "phi", f"phi after a non-phi instruction in {b.label}")
                elif b.label == k.entry.label:
                    err(ins.uid, "phi", "phi in the entry block")
                elif sorted(ins.labels) != sorted(preds[b.label]) or \
                        len(set(ins.labels)) != len(ins.labels):
                    err(ins.uid, "phi",
                        f"incoming blocks {list(ins.labels)} != predecessors {preds[b.label]}")
            else:
                seen_non_phi = True
            if ins.op == "br":
                for lbl in ins.labels:
                    if lbl not in labels:
                        err(ins.uid, "branch-target", f"unknown label {lbl!r}")
                        structural_ok = False

    # operand existence and types
    for ins in k.instructions():
        for o in ins.value_operands():
            if o not in types:
                err(ins.uid, "undefined", f"operand %{o} has no definition")
        _check_signature(ins, types, err)
    if any(e.rule == "undefined" for e in errors):
        return errors
    _check_buffers(k, types, err)

    if not structural_ok:
        return errors

    dom = dom or DomTree(k)
    for b in k.blocks:
        if b.label not in dom.reachable:
            err(b.instrs[0].uid if b.instrs else None, "unreachable",
                f"block {b.label} is unreachable from entry")

    # dominance of uses
    for bi, b in enumerate(k.blocks):
        if b.label not in dom.reachable:
            continue
        for pos, ins in enumerate(b.instrs):
            if ins.is_phi:
                for o, lbl in zip(ins.operands, ins.labels):
                    if isinstance(o, Imm) or lbl not in dom.block_index:
                        continue
                    pi = dom.block_index[lbl]
                    if lbl in dom.reachable and not dom.value_available_at(
                            o, pi, len(k.blocks[pi].instrs)):
                        err(ins.uid, "dominance",
                            f"use not dominated: %{o} does not reach the end of {lbl}")
            else:
                for o in ins.value_operands():
                    if not dom.value_available_at(o, bi, pos):
                        err(ins.uid, "dominance", f"use not dominated: %{o}")

    _check_sync(k, dom, preds, err)
    return errors


def _otype(o, types):
    return o.type if isinstance(o, Imm) else types.get(o)


def _check_signature(ins, types, err):
    op, ty, ops = ins.op, ins.type, ins.operands
    ot = [_otype(o, types) for o in ops]

    def bad(msg):
        err(ins.uid, "type", f"{op}: {msg}")

    def want(n):
        if len(ops) != n:
            bad(f"expected {n} operands, got {len(ops)}")
            return False
        return True

    if op in ARITH_I32 or op in ARITH_F32:
        expected = I32 if op in ARITH_I32 else F32
        if ty != expected:
            bad(f"annotation {ty} but opcode requires {expected}")
        if want(2) and any(t != expected for t in ot):
            bad(f"operand types {[str(t) for t in ot]} != {expected}")
    elif op in ("icmp", "fcmp"):
        expected = I32 if op == "icmp" else F32
        if ty != expected:
            bad(f"annotation {ty} but opcode compares {expected}")
        if want(2) and any(t != expected for t in ot):
            bad(f"operand types {[str(t) for t in ot]} != {expected}")
    elif op == "select":
        if ty is None or ty.is_ptr:
            bad("select needs a scalar type")
        if want(3) and (ot[0] != BOOL or ot[1] != ty or ot[2] != ty):
            bad(f"operand types {[str(t) for t in ot]} != [bool, {ty}, {ty}]")
    elif op == "load":
        if ty not in (I32, F32):
            bad("loads produce i32 or f32")
        if want(2) and (ot[0] is None or not ot[0].is_ptr or ot[1] != I32):
            bad("load takes (ptr, i32)")
    elif op == "getindex":
        if ty is None or not ty.is_ptr:
            bad("getindex produces a pointer")
        elif want(2) and (ot[0] != ty or ot[1] != I32):
            bad(f"getindex takes ({ty}, i32)")
    elif op == "store":
        if want(3) and (ot[0] is None or not ot[0].is_ptr or ot[1] != I32
                        or ot[2] not in (I32, F32)):
            bad("store takes (ptr, i32, i32|f32)")
    elif op == "phi":
        if len(ops) != len(ins.labels) or not ops:
            bad("phi needs one value per incoming block")
        if any(t != ty for t in ot):
            bad(f"incoming types {[str(t) for t in ot]} != {ty}")
    elif op == "br":
        if not ((len(ops) == 0 and len(ins.labels) == 1)
                or (len(ops) == 1 and len(ins.labels) == 2 and ot[0] == BOOL)):
            bad("br takes a bool and two labels, or one label")
    elif op == "call":
        if ins.attr not in INTRINSICS or ty != I32 or ops:
            bad("call takes no operands and yields i32 tid/nthreads")
    elif op == "const":
        if want(1) and (not isinstance(ops[0], Imm) or ops[0].type != ty):
            bad("const takes one literal of its own type")
    elif op in ("sync", "ret"):
        if ops:
            bad("takes no operands")
    else:
        bad("unknown opcode")


def pointer_roots(k: Kernel, types: dict) -> dict:
    """Map each pointer value to the set of parameter ids it may derive from."""
    roots = {p.vid: {p.vid} for p in k.param_values() if p.type.is_ptr}
    ptr_instrs = [ins for ins in k.instructions()
                  if ins.has_result and ins.result_type is not None and ins.result_type.is_ptr]
    changed = True
    while changed:
        changed = False
        for ins in ptr_instrs:
            if ins.op == "getindex":
                srcs = ins.operands[:1]
            elif ins.op == "phi":
                srcs = ins.operands
            else:
                srcs = ()
            new = set(roots.get(ins.uid, ()))
            for s in srcs:
                if not isinstance(s, Imm):
                    new |= roots.get(s, set())
            if new != roots.get(ins.uid):
                roots[ins.uid] = new
                changed = True
    return roots


def _check_buffers(k, types, err):
    params = {p.vid: p for p in k.params}
    roots = pointer_roots(k, types)
    for ins in k.instructions():
        if ins.op == "load" and ins.operands:
            vt = ins.type
        elif ins.op == "store" and len(ins.operands) == 3:
            vt = _otype(ins.operands[2], types)
        else:
            continue
        ptr = ins.operands[0]
        if isinstance(ptr, Imm):
            continue
        for r in roots.get(ptr, ()):
            p = params.get(r)
            if p is not None and p.type.space is Space.GLOBAL and p.elem != vt:
                err(ins.uid, "buffer-type", f"{ins.op} of {vt} through {p.name} ({p.elem} buffer)")


def _check_sync(k, dom, preds, err):
    syncs = [(b.label, ins.uid) for b in k.blocks for ins in b.instrs if ins.op == "sync"]
    if not syncs:
        return
    ipdom = post_dominators(k)
    block_of = {}
    for b in k.blocks:
        for ins in b.instrs:
            block_of[ins.uid] = b.label
    tainted = set()
    divergent_blocks = set()   # blocks executed conditionally on tid
    branch_blocks = set()      # blocks ending in a tid-dependent branch
    instrs = list(k.instructions())
    changed = True
    while changed:
        changed = False
        for ins in instrs:
            if ins.has_result and ins.uid not in tainted:
                t = (ins.op == "call" and ins.attr == "tid") or \
                    any(o in tainted for o in ins.value_operands())
                if not t and ins.is_phi:
                    t = any(p in divergent_blocks or p in branch_blocks
                            for p in preds[block_of[ins.uid]])
                if t:
                    tainted.add(ins.uid)
                    changed = True
            if ins.op == "br" and ins.operands and ins.operands[0] in tainted:
                a = block_of[ins.uid]
                if a not in branch_blocks:
                    branch_blocks.add(a)
                    changed = True
                stop = ipdom.get(a)
                for s in ins.labels:
                    runner = s
                    while runner is not None and runner != stop and runner in ipdom:
                        if runner not in divergent_blocks:
                            divergent_blocks.add(runner)
                            changed = True
                        nxt = ipdom.get(runner)
                        if nxt == runner:
                            break
                        runner = nxt
    for label, uid in syncs:
        if label in divergent_blocks:
            err(uid, "sync-divergence", f"sync in {label} depends on thread id")
