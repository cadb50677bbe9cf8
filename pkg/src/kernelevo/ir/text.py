"""Textual form of the mini-IR: parser and canonical printer.

Example::

    kernel scale(x: ptr<global> f32, out: ptr<global> f32) threads=4
    {
    entry:
      %t = call i32 tid
      %v = load f32 x, %t
      %y = fmul f32 %v, 2.0
      store out[%t], %y
      ret
    }

Statements are separated by newlines or ``;``.  Value names may be numeric
(``%3``) or symbolic (``%acc``); the printer always emits numeric names equal
to the defining instruction's uid, plus a ``#uid=<n>`` trailing annotation on
every instruction so that patches keep their anchors through serialization.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .core import (
    ARITH_F32, ARITH_I32, BOOL, F32, I32, INTRINSICS, PREDICATES, PTR_SHARED, SHARED_NAME,
    SHARED_VID,
    Block, Imm, Instruction, Kernel, Param, Type, param_vid, type_from_str,
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


_TOKEN_RE = re.compile(
    r"""
    (?P<uid>\#uid=(?P<uidnum>-?\d+))
  | (?P<comment>\#[^\n]*)
  | (?P<nl>\n)
  | (?P<ws>[ \t\r]+)
  | (?P<value>%[A-Za-z0-9_.]+)
  | (?P<number>[-+]?(?:\d+\.\d*(?:[eE][-+]?\d+)?|\d+[eE][-+]?\d+|\.\d+(?:[eE][-+]?\d+)?|\d+|inf\b|nan\b))
  | (?P<name>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<punct>[(){}\[\],:;=<>])
    """,
    re.VERBOSE,
)


@dataclass
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "uidnum":
            kind = "uid"
        col = pos - line_start + 1
        if kind == "uid":
            toks.append(_Tok("uid", m.group("uidnum"), line, col))
        elif kind == "nl":
            toks.append(_Tok("sep", "\n", line, col))
            line += 1
            line_start = m.end()
        elif kind in ("ws", "comment"):
            pass
        elif kind == "punct" and m.group() == ";":
            toks.append(_Tok("sep", ";", line, col))
        else:
            toks.append(_Tok(kind, m.group(), line, col))
        pos = m.end()
    toks.append(_Tok("eof", "", line, pos - line_start + 1))
    return toks


@dataclass
class _RawInstr:
    """Instruction before value names are resolved to ids."""

    op: str
    type: Type | None
    operands: list          # raw operand tokens
    slots: list             # expected type per operand slot (None = infer from literal)
    labels: tuple
    attr: str | None
    result: _Tok | None
    uid: int | None
    tok: _Tok


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    # token helpers
    def peek(self, offset: int = 0) -> _Tok:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def next(self) -> _Tok:
        t = self.toks[self.i]
        self.i += 1
        return t

    def error(self, msg: str, tok: _Tok | None = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def expect(self, text: str) -> _Tok:
        t = self.next()
        if t.text != text:
            self.error(f"expected {text!r}, found {t.text or 'end of input'!r}", t)
        return t

    def skip_seps(self):
        while self.peek().kind == "sep":
            self.i += 1

    def name(self) -> _Tok:
        t = self.next()
        if t.kind != "name":
            self.error(f"expected a name, found {t.text!r}", t)
        return t

    def type_(self) -> Type:
        t = self.name()
        text = t.text
        if text == "ptr":
            self.expect("<")
            text = f"ptr<{self.name().text}>"
            self.expect(">")
        try:
            return type_from_str(text)
        except ValueError:
            self.error(f"unknown type {text!r}", t)

    # grammar
    def kernel(self) -> Kernel:
        self.skip_seps()
        kw = self.name()
        if kw.text != "kernel":
            self.error("expected 'kernel'", kw)
        kname = self.name().text
        self.expect("(")
        params = []
        self.skip_seps()
        if self.peek().text != ")":
            while True:
                self.skip_seps()
                pname = self.name()
                self.expect(":")
                ptype = self.type_()
                elem = None
                if ptype.is_ptr and self.peek().kind == "name" and self.peek().text in ("i32", "f32"):
                    elem = self.type_()
                if ptype.is_ptr and ptype.space.value == "global" and elem is None:
                    self.error("global buffer parameters need an element type", pname)
                if pname.text == SHARED_NAME or any(p.name == pname.text for p in params):
                    self.error(f"bad or duplicate parameter name {pname.text!r}", pname)
                params.append(Param(pname.text, ptype, elem, param_vid(len(params))))
                self.skip_seps()
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        self.expect(")")
        threads, shared = 1, 0
        while self.peek().kind == "name" and self.peek().text in ("threads", "shared"):
            key = self.next().text
            self.expect("=")
            num = self.next()
            if num.kind != "number" or not num.text.isdigit():
                self.error(f"{key} expects a non-negative integer", num)
            if key == "threads":
                threads = int(num.text)
            else:
                shared = int(num.text)
        if threads < 1:
            self.error("threads must be positive")
        self.skip_seps()
        self.expect("{")
        blocks = []  # list of (label, [raw instr])
        while True:
            self.skip_seps()
            t = self.peek()
            if t.text == "}":
                self.next()
                break
            if t.kind == "eof":
                self.error("unterminated kernel body")
            if t.kind == "name" and self.peek(1).text == ":":
                self.next()
                self.next()
                if any(lbl == t.text for lbl, _ in blocks):
                    self.error(f"duplicate block label {t.text!r}", t)
                blocks.append((t.text, []))
                continue
            if not blocks:
                self.error("instruction outside of a block", t)
            blocks[-1][1].append(self.statement())
        self.skip_seps()
        if self.peek().kind != "eof":
            self.error("trailing input after kernel")
        if not blocks:
            self.error("kernel has no blocks")
        return self.resolve(kname, params, threads, shared, blocks)

    def statement(self) -> _RawInstr:
        start = self.peek()
        result = None
        if start.kind == "value":
            result = self.next()
            self.expect("=")
        optok = self.name()
        op = optok.text
        attr = None
        labels = ()
        ty = None
        operands, slots = [], []
        if result is None and op not in ("store", "br", "sync", "ret"):
            self.error(f"{op} must define a value", optok)
        if result is not None and op in ("store", "br", "sync", "ret"):
            self.error(f"{op} does not produce a value", optok)
        if op in ARITH_I32 or op in ARITH_F32:
            ty = self.type_()
            operands = self.operand_list(2)
            slots = [ty, ty]
        elif op in ("icmp", "fcmp"):
            pred = self.name()
            if pred.text not in PREDICATES:
                self.error(f"unknown predicate {pred.text!r}", pred)
            attr = pred.text
            ty = self.type_()
            operands = self.operand_list(2)
            slots = [ty, ty]
        elif op == "select":
            ty = self.type_()
            operands = self.operand_list(3)
            slots = [BOOL, ty, ty]
        elif op == "load":
            ty = self.type_()
            operands = self.operand_list(2)
            slots = ["ptr", I32]
        elif op == "getindex":
            ty = self.type_()
            operands = self.operand_list(2)
            slots = ["ptr", I32]
        elif op == "const":
            ty = self.type_()
            operands = self.operand_list(1)
            slots = [ty]
        elif op == "call":
            ty = self.type_()
            n = self.name()
            if n.text not in INTRINSICS:
                self.error(f"unknown intrinsic {n.text!r}", n)
            attr = n.text
        elif op == "phi":
            ty = self.type_()
            labs = []
            while True:
                self.expect("[")
                operands.append(self.operand())
                slots.append(ty)
                self.expect(",")
                labs.append(self.name().text)
                self.expect("]")
                if self.peek().text != ",":
                    break
                self.next()
            labels = tuple(labs)
        elif op == "store":
            operands.append(self.operand())
            self.expect("[")
            operands.append(self.operand())
            self.expect("]")
            self.expect(",")
            operands.append(self.operand())
            slots = ["ptr", I32, None]
        elif op == "br":
            if self.peek(1).text != ",":
                labels = (self.name().text,)
            else:
                operands = [self.operand()]
                slots = [BOOL]
                self.expect(",")
                labels = (self.name().text,)
                self.expect(",")
                labels += (self.name().text,)
        elif op in ("sync", "ret"):
            pass
        else:
            self.error(f"unknown opcode {op!r}", optok)
        uid = None
        if self.peek().kind == "uid":
            uid = int(self.next().text)
        t = self.peek()
        if t.kind not in ("sep", "eof") and t.text != "}":
            self.error(f"unexpected {t.text!r} after instruction", t)
        return _RawInstr(op, ty, operands, slots, labels, attr, result, uid, optok)

    def operand_list(self, n: int) -> list:
        ops = [self.operand()]
        for _ in range(n - 1):
            self.expect(",")
            ops.append(self.operand())
        if self.peek().text == ",":
            self.error("too many operands")
        return ops

    def operand(self) -> _Tok:
        t = self.next()
        if t.kind in ("value", "number", "name"):
            return t
        self.error(f"expected an operand, found {t.text!r}", t)

    def resolve(self, kname, params, threads, shared, raw_blocks) -> Kernel:
        raws = [r for _, rs in raw_blocks for r in rs]
        used = set()
        for r in raws:
            if r.uid is not None:
                if r.uid in used:
                    self.error(f"duplicate uid {r.uid}", r.tok)
                used.add(r.uid)
        fresh = max(used, default=-1) + 1
        for r in raws:
            if r.uid is None:
                while fresh in used:
                    fresh += 1
                r.uid = fresh
                used.add(fresh)
                fresh += 1
        names = {}
        for r in raws:
            if r.result is not None:
                if r.result.text in names:
                    raise ParseError(f"value {r.result.text} defined twice (SSA violation)",
                                     r.result.line, r.result.col)
                names[r.result.text] = r.uid
        pnames = {p.name: p for p in params}
        if shared > 0:
            pnames[SHARED_NAME] = Param(SHARED_NAME, PTR_SHARED, None, SHARED_VID)
        blocks = []
        for label, rs in raw_blocks:
            instrs = []
            for r in rs:
                ops = tuple(self.resolve_operand(t, slot, names, pnames)
                            for t, slot in zip(r.operands, r.slots))
                instrs.append(Instruction(r.uid, r.op, r.type, ops, r.labels, r.attr))
            blocks.append(Block(label, tuple(instrs)))
        return Kernel(kname, tuple(params), tuple(blocks), threads, shared)

    def resolve_operand(self, t: _Tok, slot, names, pnames):
        if t.kind == "value":
            if t.text in names:
                return names[t.text]
            if t.text[1:].isdigit():
                # dangling numeric reference; kept so broken variants round-trip
                return int(t.text[1:])
            raise ParseError(f"undefined value {t.text}", t.line, t.col)
        if t.kind == "name" and t.text in ("true", "false"):
            if slot not in (BOOL, None):
                raise ParseError(f"bool literal in {slot} slot (type annotation mismatch)",
                                 t.line, t.col)
            return Imm(BOOL, t.text == "true")
        if t.kind == "name":
            if t.text in pnames:
                return pnames[t.text].vid
            raise ParseError(f"unknown name {t.text!r}", t.line, t.col)
        # number literal
        is_float = any(c in t.text for c in ".eE") or t.text.lstrip("+-") in ("inf", "nan")
        if slot == "ptr":
            raise ParseError("literal used where a pointer is required", t.line, t.col)
        if slot is None:
            slot = F32 if is_float else I32
        if slot == F32 and not is_float:
            raise ParseError(f"integer literal {t.text} in f32 slot (type annotation mismatch)",
                             t.line, t.col)
        if slot == I32 and is_float:
            raise ParseError(f"float literal {t.text} in i32 slot (type annotation mismatch)",
                             t.line, t.col)
        if slot == BOOL:
            raise ParseError("numeric literal in bool slot (type annotation mismatch)",
                             t.line, t.col)
        return Imm(slot, float(t.text) if is_float else int(t.text))


def parse_kernel(text: str) -> Kernel:
    """Parse IR text into a :class:`Kernel`; raises :class:`ParseError`."""
    return _Parser(text).kernel()


def _fmt_operand(o, names: dict) -> str:
    if isinstance(o, Imm):
        return str(o)
    return names.get(o, f"%{o}")


def format_instruction(ins: Instruction, names: dict, annotate: bool = True) -> str:
    ops = [_fmt_operand(o, names) for o in ins.operands]
    op = ins.op
    if op == "store":
        text = f"store {ops[0]}[{ops[1]}], {ops[2]}"
    elif op == "br":
        if ops:
            text = f"br {ops[0]}, {ins.labels[0]}, {ins.labels[1]}"
        else:
            text = f"br {ins.labels[0]}"
    elif op in ("sync", "ret"):
        text = op
    else:
        head = f"%{ins.uid} = {op}"
        if op in ("icmp", "fcmp"):
            head += f" {ins.attr}"
        head += f" {ins.type}"
        if op == "call":
            text = f"{head} {ins.attr}"
        elif op == "phi":
            pairs = ", ".join(f"[{o}, {lbl}]" for o, lbl in zip(ops, ins.labels))
            text = f"{head} {pairs}"
        else:
            text = f"{head} {', '.join(ops)}"
    if annotate:
        text += f"  #uid={ins.uid}"
    return text


def print_kernel(k: Kernel, annotate: bool = True) -> str:
    """Canonical text of ``k``; ``parse_kernel`` of the result rebuilds ``k``."""
    names = {p.vid: p.name for p in k.param_values()}
    params = []
    for p in k.params:
        s = f"{p.name}: {p.type}"
        if p.elem is not None:
            s += f" {p.elem}"
        params.append(s)
    header = f"kernel {k.name}({', '.join(params)}) threads={k.threads}"
    if k.shared:
        header += f" shared={k.shared}"
    lines = [header, "{"]
    for b in k.blocks:
        lines.append(f"{b.label}:")
        for ins in b.instrs:
            lines.append("  " + format_instruction(ins, names, annotate))
    lines.append("}")
    return "\n".join(lines) + "\n"
