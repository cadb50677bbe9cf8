"""Dominator and post-dominator trees over a kernel's CFG."""

from __future__ import annotations

from .core import Kernel


def immediate_dominators(nodes: list, succ: dict, entry) -> dict:
    """Cooper-Harvey-Kennedy iterative idom computation.

    Returns ``{node: idom}`` for nodes reachable from ``entry``; the entry maps
    to itself.  Unreachable nodes are absent.
    """
    order = []
    seen = {entry}
    stack = [(entry, iter(succ.get(entry, ())))]
    while stack:
        node, it = stack[-1]
        for s in it:
            if s not in seen:
                seen.add(s)
                stack.append((s, iter(succ.get(s, ()))))
                break
        else:
            stack.pop()
            order.append(node)
    rpo = list(reversed(order))
    index = {n: i for i, n in enumerate(rpo)}
    preds = {n: [] for n in rpo}
    for n in rpo:
        for s in succ.get(n, ()):
            if s in preds:
                preds[s].append(n)

    idom = {entry: entry}

    def intersect(a, b):
        while a != b:
            while index[a] > index[b]:
                a = idom[a]
            while index[b] > index[a]:
                b = idom[b]
        return a

    changed = True
    while changed:
        changed = False
        for n in rpo[1:]:
            new = None
            for p in preds[n]:
                if p in idom:
                    new = p if new is None else intersect(p, new)
            if idom.get(n) != new:
                idom[n] = new
                changed = True
    return idom


class DomTree:
    """Block- and instruction-level dominance queries for one kernel."""

    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        labels = [b.label for b in kernel.blocks]
        self.succ = {b.label: [s for s in b.successors() if s in set(labels)]
                     for b in kernel.blocks}
        self.entry = kernel.entry.label
        self.idom = immediate_dominators(labels, self.succ, self.entry)
        self.reachable = set(self.idom)
        self.position = kernel.locate()
        self.block_index = {lbl: i for i, lbl in enumerate(labels)}
        # ancestor sets make block_dominates O(1)
        self._doms = {}
        for lbl in labels:
            if lbl not in self.idom:
                continue
            chain = {lbl}
            cur = lbl
            while self.idom[cur] != cur:
                cur = self.idom[cur]
                chain.add(cur)
            self._doms[lbl] = chain

    def block_dominates(self, a: str, b: str) -> bool:
        """True if every entry path to ``b`` passes ``a`` (reflexive)."""
        return a in self._doms.get(b, ())

    def dominators_of(self, label: str) -> set:
        return set(self._doms.get(label, ()))

    def dominates(self, a_uid: int, b_uid: int) -> bool:
        """Instruction-level dominance (reflexive)."""
        ba, pa = self.position[a_uid]
        bb, pb = self.position[b_uid]
        if ba == bb:
            return pa <= pb
        la = self.kernel.blocks[ba].label
        lb = self.kernel.blocks[bb].label
        return self.block_dominates(la, lb)

    def strictly_dominates(self, a_uid: int, b_uid: int) -> bool:
        return a_uid != b_uid and self.dominates(a_uid, b_uid)

    def available_at(self, block_idx: int, pos: int) -> list:
        """Instruction values whose definition strictly precedes ``(block_idx, pos)``.

        Returned in layout order; parameters are always available and are not
        included here.
        """
        blocks = self.kernel.blocks
        label = blocks[block_idx].label
        if label not in self._doms:
            return []
        out = []
        doms = self._doms[label]
        for bi, b in enumerate(blocks):
            if bi == block_idx:
                out.extend(ins.uid for ins in b.instrs[:pos] if ins.has_result)
            elif b.label in doms:
                out.extend(ins.uid for ins in b.instrs if ins.has_result)
        return out

    def available_at_end(self, label: str) -> list:
        bi = self.block_index[label]
        return self.available_at(bi, len(self.kernel.blocks[bi].instrs))

    def value_available_at(self, vid: int, block_idx: int, pos: int) -> bool:
        """Does the definition of ``vid`` strictly precede the given position?"""
        if vid < 0:
            return True
        where = self.position.get(vid)
        if where is None:
            return False
        bi, p = where
        if bi == block_idx:
            return p < pos
        return self.block_dominates(self.kernel.blocks[bi].label,
                                    self.kernel.blocks[block_idx].label)


def compute_dominators(k: Kernel) -> DomTree:
    return DomTree(k)


def post_dominators(k: Kernel) -> dict:
    """Immediate post-dominators, using a virtual exit joined to every ``ret`` block."""
    exit_node = object()
    rsucc = {b.label: [] for b in k.blocks}
    rsucc[exit_node] = []
    for b in k.blocks:
        term = b.terminator
        if term is not None and term.op == "ret":
            rsucc[exit_node].append(b.label)
        for s in b.successors():
            if s in rsucc:
                rsucc[s].append(b.label)
    ipdom = immediate_dominators(list(rsucc), rsucc, exit_node)
    return {n: (None if d is exit_node else d) for n, d in ipdom.items() if n is not exit_node}
