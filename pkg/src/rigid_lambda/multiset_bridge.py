"""Collapse of rigid types and derivations to multiset types.

Forgetting tracks turns a sequence type into a multiset of types, possibly
with infinite multiplicities. Regular types collapse to regular multiset
trees; we represent them as finite graphs minimized up to multiset
bisimulation, which gives a canonical key usable for equality and sorting.
"""

from __future__ import annotations

import math
from collections import Counter

from .derivation import Derivation, node_kind
from .lambda_core import alpha_equal
from .rigid_types import Arrow, Seq, TVar, unroll

OMEGA = math.inf


def _mult_str(m):
    return "w" if m == OMEGA else str(m)


# -- graphs and minimization -----------------------------------------------------

def _minimize(nodes):
    """Coarsest partition of ``nodes`` stable under multiset bisimulation.

    nodes: key -> ("var", name) | ("arrow", ((child, mult), ...), head)
           | ("forest", ((child, mult), ...))
    """
    def label(n):
        return n if n[0] == "var" else (n[0],)

    labels = {}
    cls = {}
    for k, n in nodes.items():
        cls[k] = labels.setdefault(label(n), len(labels))
    count = len(labels)
    while True:
        sigs = {}
        new = {}
        for k, n in nodes.items():
            if n[0] == "var":
                sig = (cls[k],)
            else:
                agg = Counter()
                for c, m in n[1]:
                    agg[cls[c]] += m
                sig = (cls[k], tuple(sorted(agg.items())), cls[n[2]] if n[0] == "arrow" else None)
            new[k] = sigs.setdefault(sig, len(sigs))
        cls = new
        if len(sigs) == count:
            return cls
        count = len(sigs)


class _Quotient:
    """A minimized graph; classes are ints."""

    def __init__(self, nodes):
        cls = _minimize(nodes)
        self.node = {}
        for k, n in nodes.items():
            c = cls[k]
            if c in self.node:
                continue
            if n[0] == "var":
                self.node[c] = n
            else:
                agg = Counter()
                for ch, m in n[1]:
                    agg[cls[ch]] += m
                head = cls[n[2]] if n[0] == "arrow" else None
                self.node[c] = (n[0], tuple(agg.items()), head)
        self.cls = cls
        self._memo = {}

    def show(self, c, stack=(), names=False):
        """(text, referenced stack depths). Binders are de Bruijn indices in
        keys and g, g1, ... in pretty output."""
        key = (c, stack, names)
        if key in self._memo:
            return self._memo[key]
        if c in stack:
            i = stack.index(c)
            out = (_binder(i) if names else f"#{i}", frozenset([i]))
            self._memo[key] = out
            return out
        n = self.node[c]
        if n[0] == "var":
            out = (n[1], frozenset())
            self._memo[key] = out
            return out
        inner = stack + (c,)
        me = len(stack)
        parts = []
        refs = set()
        for ch, m in n[1]:
            s, r = self.show(ch, inner, names)
            parts.append((s, m))
            refs |= r
        parts.sort(key=lambda p: (p[1] == OMEGA, p[0], p[1]))
        body = _forest_text(parts, names)
        if n[0] == "arrow":
            h, r = self.show(n[2], inner, names)
            refs |= r
            body = f"{body} -> {h}" if names else f"{body}>{h}"
        if me in refs:
            body = (f"rec {_binder(me)}. " if names else "rec.") + body
            refs.discard(me)
        out = (body, frozenset(refs))
        self._memo[key] = out
        return out


def _binder(i):
    return "g" if i == 0 else f"g{i}"


def _forest_text(parts, names):
    if names:
        if parts and all(m == OMEGA for _, m in parts):
            return "[" + ", ".join(s for s, _ in parts) + "]w"
        items = []
        for s, m in parts:
            items.extend([s] * m if m != OMEGA else [s + "^w"])
        return "[" + ", ".join(items) + "]"
    return "[" + ",".join(f"{_mult_str(m)}*{s}" for s, m in parts) + "]"


# -- public types -------------------------------------------------------------------

class MultisetType:
    """A regular multiset type, compared by canonical key."""

    __slots__ = ("_q", "_c", "key")

    def __init__(self, quotient, cls):
        self._q = quotient
        self._c = cls
        self.key = quotient.show(cls)[0]

    @property
    def is_var(self):
        return self._q.node[self._c][0] == "var"

    @property
    def name(self):
        n = self._q.node[self._c]
        return n[1] if n[0] == "var" else None

    @property
    def args(self):
        """The argument multiset of an arrow (a MultisetForest)."""
        n = self._q.node[self._c]
        if n[0] != "arrow":
            return None
        return MultisetForest([(MultisetType(self._q, ch), m) for ch, m in n[1]])

    @property
    def head(self):
        n = self._q.node[self._c]
        return None if n[0] != "arrow" else MultisetType(self._q, n[2])

    def __eq__(self, other):
        return isinstance(other, MultisetType) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __lt__(self, other):
        return self.key < other.key

    def __str__(self):
        return self._q.show(self._c, names=True)[0]

    def __repr__(self):
        return f"MultisetType({self})"


class MultisetForest:
    """A multiset of MultisetTypes; multiplicities are ints or OMEGA."""

    __slots__ = ("items", "key")

    def __init__(self, items):
        agg = {}
        objs = {}
        for t, m in items:
            if m == 0:
                continue
            agg[t.key] = agg.get(t.key, 0) + m
            objs[t.key] = t
        self.items = tuple(sorted(((objs[k], m) for k, m in agg.items()),
                                  key=lambda p: (p[1] == OMEGA, p[0].key, p[1])))
        self.key = "[" + ",".join(f"{_mult_str(m)}*{t.key}" for t, m in self.items) + "]"

    def __eq__(self, other):
        return isinstance(other, MultisetForest) and self.key == other.key

    def __hash__(self):
        return hash(self.key)

    def __bool__(self):
        return bool(self.items)

    def size(self):
        return sum(m for _, m in self.items)

    def __str__(self):
        return _forest_text([(str(t), m) for t, m in self.items], True)

    def __repr__(self):
        return f"MultisetForest({self})"


def from_graph(nodes, roots):
    """MultisetTypes (or MultisetForests for "forest" nodes) for ``roots``."""
    q = _Quotient(nodes)
    out = []
    for r in roots:
        c = q.cls[r]
        n = q.node[c]
        if n[0] == "forest":
            out.append(MultisetForest([(MultisetType(q, ch), m) for ch, m in n[1]]))
        else:
            out.append(MultisetType(q, c))
    return out


# -- collapse of rigid types -----------------------------------------------------------

def _seq_children(s):
    out = [(unroll(t), 1) for _, t in sorted(s.as_dict().items())]
    if s.tail is not None:
        out.append((unroll(s.tail[1]), OMEGA))
    return out


def _add_type_graph(nodes, t):
    """Add the graph of a rigid type; returns its node key."""
    root = unroll(t)
    stack = [root]
    while stack:
        u = stack.pop()
        k = _tkey(u)
        if k in nodes:
            continue
        if isinstance(u, TVar):
            nodes[k] = ("var", u.name)
            continue
        ch = _seq_children(u.tail)
        head = unroll(u.head)
        nodes[k] = ("arrow", tuple((_tkey(c), m) for c, m in ch), _tkey(head))
        stack.append(head)
        stack.extend(c for c, _ in ch)
    return _tkey(root)


def _tkey(u):
    return ("v", u.name) if isinstance(u, TVar) else ("t", id(u))


def collapse_type(t) -> MultisetType:
    nodes = {}
    r = _add_type_graph(nodes, t)
    return from_graph(nodes, [r])[0]


def collapse_seq(s) -> MultisetForest:
    nodes = {}
    kids = []
    for u, m in _seq_children(s):
        kids.append((_add_type_graph(nodes, u), m))
    nodes[("forest",)] = ("forest", tuple(kids))
    return from_graph(nodes, [("forest",)])[0]


def collapse_context(ctx) -> dict:
    return {x: collapse_seq(s) for x, s in ctx.items() if s}


def collapse_judgment(j):
    return collapse_context(j.context), collapse_type(j.type)


def format_mcontext(mctx) -> str:
    return "; ".join(f"{x}:{f}" for x, f in sorted(mctx.items()))


def format_mjudgment(mctx, mtype, subject=None) -> str:
    s = "" if subject is None else f"{subject} : "
    return f"{format_mcontext(mctx)} ⊢ {s}{mtype}"


def m_efo_empty(u, polarity) -> bool:
    """No empty multiset at the given polarity (same rules as the rigid check)."""
    from .rigid_types import _pol
    pol = _pol(polarity)
    if isinstance(u, MultisetForest):
        return all(m_efo_empty(t, polarity) for t, _ in u.items)
    q = u._q
    succ, base = {}, set()
    stack = [(u._c, pol)]
    while stack:
        key = stack.pop()
        if key in succ:
            continue
        c, p = key
        n = q.node[c]
        if n[0] == "var":
            succ[key] = []
            continue
        nxt = [(n[2], p)] + [(ch, -p) for ch, _ in n[1]]
        if not n[1]:
            base.add(key)
        succ[key] = nxt
        stack.extend(nxt)
    nonempty = set(base)
    changed = True
    while changed:
        changed = False
        for key, out in succ.items():
            if key not in nonempty and any(o in nonempty for o in out):
                nonempty.add(key)
                changed = True
    return (u._c, pol) not in nonempty


def is_unforgetful_m(mctx, mtype) -> bool:
    return all(m_efo_empty(f, "-") for f in mctx.values()) and m_efo_empty(mtype, "+")


# -- derivations ---------------------------------------------------------------------

class NonUniformTail(ValueError):
    pass


def lazy_canonical(D, window=4, max_depth=200):
    """Track-free canonical key of a derivation of finite depth.

    Argument premises are compared as a multiset. An infinite run of
    premises counts as OMEGA copies of one premise; the first ``window``
    members of the run are checked to collapse identically."""
    memo = {}

    def go(a, depth):
        if a in memo:
            return memo[a]
        if depth > max_depth:
            raise ValueError("derivation too deep for a tree key")
        j = D.judgment(a)
        mctx, mt = collapse_judgment(j)
        head = (mt.key, tuple(sorted((x, f.key) for x, f in mctx.items())), j.axtrack is not None)
        kind, _ = node_kind(D.term, a)
        explicit, tail = D.child_tracks(a)
        if kind == "lam":
            body = (go(a + (0,), depth + 1),)
        elif kind == "app":
            args = Counter()
            for k in explicit:
                if k >= 2:
                    args[go(a + (k,), depth + 1)] += 1
            if tail is not None:
                run = {go(a + (k,), depth + 1) for k in range(tail, tail + window)}
                if len(run) != 1:
                    raise NonUniformTail(f"premises from track {tail} on do not collapse alike")
                args[run.pop()] = OMEGA
            body = (go(a + (1,), depth + 1), tuple(sorted(args.items())))
        else:
            body = ()
        out = repr((kind, head, body))
        memo[a] = out
        return out

    return go((), 0)


def canonical_form(P) -> str:
    """Track-free canonical key of a finite derivation."""
    return lazy_canonical(P)


def m_equiv(P1, P2) -> bool:
    """Do P1 and P2 collapse to the same multiset derivation?

    Finite derivations are compared exactly. Lazy derivations must provide
    ``m_canonical(horizon)`` or are compared through views up to a horizon by
    the caller."""
    if not (P1.term == P2.term or alpha_equal(P1.term, P2.term)):
        return False
    if hasattr(P1, "m_canonical") and hasattr(P2, "m_canonical"):
        return P1.m_canonical() == P2.m_canonical()
    return canonical_form(P1) == canonical_form(P2)


def axiom_multiset(P, a, x):
    """Collapsed types of the axioms for x above a (finite derivations)."""
    from .derivation import ax_positions
    return MultisetForest([(collapse_type(P.judgment(p).type), 1) for p in ax_positions(P, a, x)])


def is_quantitative_m(P, horizon=None) -> bool:
    """Multiset-level quantitativity: every context is the multiset of the
    axiom types above it.

    Finite derivations are checked exactly. Lazy derivations need a
    ``node_key(a)`` method identifying isomorphic subderivations so that
    axiom multiplicities can be counted on a finite graph (infinite counts
    become OMEGA)."""
    if isinstance(P, Derivation) and not P.open:
        for a, j in P.nodes.items():
            for x, s in j.context.items():
                if collapse_seq(s) != axiom_multiset(P, a, x):
                    return False
        return True
    if not hasattr(P, "node_key"):
        raise ValueError("lazy derivations need node_key() for multiset quantitativity")
    return _quant_m_graph(P)


def _quant_m_graph(D):
    """Exact check on a finite-state lazy derivation."""
    graph = {}
    rep = {}
    stack = [()]
    while stack:
        a = stack.pop()
        k = D.node_key(a)
        if k in graph:
            continue
        rep[k] = a
        explicit, tail = D.child_tracks(a)
        kids = [(a + (i,), 1) for i in explicit]
        if tail is not None:
            # a uniform tail stands for infinitely many copies of one premise
            kids.append((a + (tail,), OMEGA))
        graph[k] = [(D.node_key(b), m) for b, m in kids]
        stack.extend(b for b, _ in kids)

    def counts(k, x):
        # multiplicity per collapsed axiom type of x-axioms above state k
        memo = {}
        on_stack = set()
        cyclic = set()

        def go(s):
            if s in memo:
                return memo[s]
            if s in on_stack:
                cyclic.add(s)
                return Counter()
            on_stack.add(s)
            a = rep[s]
            kind, y = node_kind(D.term, a)
            c = Counter()
            if kind == "var":
                if y == x:
                    c[collapse_type(D.judgment(a).type).key] += 1
            elif not (kind == "lam" and y == x):
                for t, m in graph[s]:
                    for key, v in go(t).items():
                        if v:
                            c[key] += OMEGA if m == OMEGA else m * v
            on_stack.discard(s)
            memo[s] = c
            return c

        base = go(k)
        # anything reachable through a cycle is counted infinitely often
        if cyclic:
            inf = _through_cycles(graph, rep, D, k, x, cyclic)
            for key in inf:
                base[key] = OMEGA
        return base

    for k, a in rep.items():
        j = D.judgment(a)
        for x, s in j.context.items():
            want = {t.key: m for t, m in collapse_seq(s).items}
            if dict(counts(k, x)) != want:
                return False
    return True


def _through_cycles(graph, rep, D, start, x, cyclic):
    """Axiom type keys of x reachable from a cycle reachable from start."""
    def succ(s):
        kind, y = node_kind(D.term, rep[s])
        if kind == "var" or (kind == "lam" and y == x):
            return []
        return [t for t, _ in graph[s]]

    reach_from_start = set()
    stack = [start]
    while stack:
        s = stack.pop()
        if s in reach_from_start:
            continue
        reach_from_start.add(s)
        stack.extend(succ(s))
    out = set()
    seen = set()
    stack = [s for s in cyclic if s in reach_from_start]
    while stack:
        s = stack.pop()
        if s in seen:
            continue
        seen.add(s)
        kind, y = node_kind(D.term, rep[s])
        if kind == "var" and y == x:
            out.add(collapse_type(D.judgment(rep[s]).type).key)
        stack.extend(succ(s))
    return out


__all__ = [
    "OMEGA", "MultisetType", "MultisetForest", "from_graph", "collapse_type",
    "collapse_seq", "collapse_context", "collapse_judgment", "format_mcontext",
    "format_mjudgment", "canonical_form", "lazy_canonical", "NonUniformTail", "m_equiv", "axiom_multiset",
    "is_quantitative_m", "m_efo_empty", "is_unforgetful_m",
]
