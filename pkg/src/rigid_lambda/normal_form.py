"""Derivations typing normal forms.

In a normal form every derivation position is of one of three kinds: full
(the type there can be chosen freely), abstraction (a chain of λs above a
full position) or partial (the left side of an application spine). Given a
downward closed set of positions and a type for each full position, the
trivial construction below builds the unique quantitative derivation with
that support. Cutting it by a degree measure yields finite approximations.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .approximation import ApproximationChain, ProbeOutsideBisupport
from .derivation import (Derivation, DerivationError, Judgment, Left, Right, Verdict,
                         VALID, _quant_finite, bisupport, subderivation)
from .dynamics import as_coder
from .lambda_core import (App, Lam, Var, applicative_depth, collapse, format_position,
                          free_vars, hnf_shape, in_support, is_normal_form, iter_positions,
                          subterm_at, unroll)
from .multiset_bridge import OMEGA, from_graph, m_efo_empty
from .rigid_types import Arrow, Context, Seq, TVar, is_unforgetful, unroll as type_unroll


class NotANormalForm(DerivationError):
    pass


class NotADSupport(DerivationError):
    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(str(verdict))


class MissingFullType(DerivationError):
    pass


class ForgetfulDerivation(DerivationError):
    pass


# -- positions -------------------------------------------------------------------

@dataclass(frozen=True)
class PositionClass:
    kind: str          # full | abstraction | partial
    anchor: tuple
    rdeg: int


def _require_nf(t):
    if not is_normal_form(t):
        raise NotANormalForm("term is not a normal form")


def _classify(t, a):
    u = subterm_at(t, collapse(a))
    if isinstance(u, Lam):
        n = 0
        while isinstance(u, Lam):
            n += 1
            u = unroll(u.body)
        return PositionClass("abstraction", a + (0,) * n, n)
    n = 0
    while n < len(a) and a[len(a) - 1 - n] == 1:
        n += 1
    if n == 0:
        return PositionClass("full", a, 0)
    return PositionClass("partial", a[:len(a) - n], n)


def classify_position(t, a) -> PositionClass:
    _require_nf(t)
    return _classify(t, tuple(a))


def _obligations(t, a):
    """Positions every support containing a must contain besides its prefixes."""
    u = subterm_at(t, collapse(a))
    if isinstance(u, Lam):
        return [a + (0,)]
    if isinstance(u, App):
        return [a + (1,)]
    return []


def is_dsupport(t, A) -> Verdict:
    """Is A a derivation support of the normal form t?"""
    A = {tuple(a) for a in A}
    if not A:
        return Verdict(False, (), "empty set")
    for a in sorted(A, key=lambda p: (len(p), p)):
        if not in_support(t, collapse(a)):
            return Verdict(False, a, f"{format_position(a)} is not a position of the term")
        if a and a[:-1] not in A:
            return Verdict(False, a[:-1], f"{format_position(a[:-1])} is missing (prefix of {format_position(a)})")
        if a and a[-1] >= 2 and a[:-1] + (1,) not in A:
            q = a[:-1] + (1,)
            return Verdict(False, q, f"{format_position(q)} is missing (needed by {format_position(a)})")
        for q in _obligations(t, a):
            if q not in A:
                return Verdict(False, q, f"{format_position(q)} is missing (needed by {format_position(a)})")
    return VALID


# -- the construction ---------------------------------------------------------------

def s_measure(c) -> int:
    """max of the number of entries >= 2 and of the entries themselves."""
    if not c:
        return 0
    return max(sum(1 for k in c if k >= 2), max(c))


def position_measure(a) -> int:
    """Applicative depth, raised to any track above 2."""
    big = [k for k in a if k > 2]
    return max(applicative_depth(a), max(big) if big else 0)


def cut_type(t, n, prefix=()):
    """Keep the positions c of t with s(c) <= n (prefixes are kept first)."""
    t = type_unroll(t)
    if isinstance(t, TVar):
        return t
    entries = []
    for k, u in t.tail.as_dict().items():
        if s_measure(prefix + (k,)) <= n:
            entries.append((k, cut_type(u, n, prefix + (k,))))
    if t.tail.tail is not None:
        m, u = t.tail.tail
        k = m
        while s_measure(prefix + (k,)) <= n:
            entries.append((k, cut_type(u, n, prefix + (k,))))
            k += 1
    if s_measure(prefix + (1,)) > n:
        raise ValueError(f"level {n} cuts the head of an arrow; use a level >= 1")
    return Arrow(Seq(entries), cut_type(t.head, n, prefix + (1,)))


@dataclass
class DegreeTrace:
    cd: int
    sp: tuple
    lcp: tuple
    sip: object
    depth_s: int
    depth_i: int
    deg: int


class TrivialConstruction:
    """The trivial construction over a d-support A with full types Tfull.

    A may be a finite set, or a membership predicate for infinite supports
    (then only degree computations are available). Tfull maps full positions
    to types, or is a callable."""

    def __init__(self, t, A, Tfull, coder=None, check=True):
        _require_nf(t)
        self.term = t
        self.coder = as_coder(coder)
        if callable(A):
            self.finite = False
            self.member = A
            self.A = None
        else:
            self.finite = True
            self.A = {tuple(a) for a in A}
            self.member = self.A.__contains__
            if check:
                v = is_dsupport(t, self.A)
                if not v:
                    raise NotADSupport(v)
        self._tfull = Tfull
        self._cls = {}
        self._types = {}
        self._axioms = None

    # -- basic data --
    def cls(self, a):
        c = self._cls.get(a)
        if c is None:
            c = self._cls[a] = _classify(self.term, a)
        return c

    def tfull(self, a):
        if callable(self._tfull):
            return self._tfull(a)
        if a not in self._tfull:
            raise MissingFullType(f"no type for the full position {format_position(a)}")
        return self._tfull[a]

    def binder(self, a):
        return subterm_at(self.term, collapse(a)).var

    def axioms(self):
        """Ax(a)(x) for every a of a finite support: var -> sorted positions."""
        if self._axioms is not None:
            return self._axioms
        kids = {}
        for a in self.A:
            if a:
                kids.setdefault(a[:-1], []).append(a)
        out = {}
        for a in sorted(self.A, key=len, reverse=True):
            u = subterm_at(self.term, collapse(a))
            if isinstance(u, Var):
                out[a] = {u.name: [a]}
                continue
            acc = {}
            for b in kids.get(a, []):
                for x, ps in out[b].items():
                    acc.setdefault(x, []).extend(ps)
            if isinstance(u, Lam):
                acc.pop(u.var, None)
            out[a] = {x: sorted(ps) for x, ps in acc.items()}
        self._axioms = out
        return out

    def args(self, q):
        """Argument tracks of the application at q present in A."""
        return sorted(k for k in self._children(q) if k >= 2)

    def _children(self, q):
        if self.finite:
            return [a[-1] for a in self.A if len(a) == len(q) + 1 and a[:-1] == q]
        raise DerivationError("argument enumeration needs a finite support")

    # -- types --
    def T(self, a):
        if a in self._types:
            return self._types[a]
        c = self.cls(a)
        if c.kind == "full":
            out = self.tfull(a)
        elif c.kind == "abstraction":
            out = self.T(c.anchor)
            for j in range(c.rdeg, 0, -1):
                p = a + (0,) * j
                out = Arrow(self.E(p, self.binder(p[:-1])), out)
        else:
            out = self.T(c.anchor)
            for k in range(c.rdeg, 0, -1):
                q = c.anchor + (1,) * (c.rdeg - k)
                out = Arrow(Seq([(l, self.T(q + (l,))) for l in self.args(q)]), out)
        self._types[a] = out
        return out

    def E(self, p, x):
        return Seq([(self.coder(b), self.T(b)) for b in self.axioms()[p].get(x, [])])

    def derivation(self) -> Derivation:
        if not self.finite:
            raise DerivationError("only finite supports give a finite derivation")
        nodes = {}
        ax = self.axioms()
        for a in self.A:
            ctx = Context({x: self.E(a, x) for x in ax[a]})
            axtrack = self.coder(a) if isinstance(subterm_at(self.term, collapse(a)), Var) else None
            nodes[a] = Judgment(ctx, self.T(a), axtrack)
        return Derivation(self.term, nodes)

    # -- degrees --
    def _axiom_of(self, p, x, k):
        """The axiom position for x above p whose track is k."""
        if self.finite:
            for b in self.axioms()[p].get(x, []):
                if self.coder(b) == k:
                    return b
            return None
        b = self.coder.decode(k)
        if b is None or b[:len(p)] != p or not self.member(b):
            return None
        u = subterm_at(self.term, collapse(b))
        if not isinstance(u, Var) or u.name != x:
            return None
        for i in range(len(p), len(b)):
            v = subterm_at(self.term, collapse(b[:i]))
            if isinstance(v, Lam) and v.var == x:
                return None
        return b

    def degree_trace(self, a, c) -> DegreeTrace:
        a, c = tuple(a), tuple(c)
        if not self.member(a):
            raise ProbeOutsideBisupport(Right(a, c))
        cur, off, cd, lcp = a, 0, 1, ()
        while True:
            k = self.cls(cur)
            r = k.rdeg if k.kind != "full" else 0
            j = 0
            while j < r and off + j < len(c) and c[off + j] == 1:
                j += 1
            if j < r and off + j == len(c):
                ds = position_measure(cur)
                return DegreeTrace(cd, cur, lcp, None, ds, 0, ds)
            if j < r:
                l = c[off + j]
                if k.kind == "partial":
                    q = k.anchor + (1,) * (r - j - 1)
                    nxt = q + (l,)
                    ok = l >= 2 and self.member(nxt)
                else:
                    p = cur + (0,) * (j + 1)
                    nxt = self._axiom_of(p, self.binder(p[:-1]), l)
                    ok = nxt is not None
                if not ok:
                    raise ProbeOutsideBisupport(Right(a, c))
                lcp = c[:off + j]
                cur, off, cd = nxt, off + j + 1, cd + 1
                continue
            inner = c[off + r:]
            base = self.tfull(k.anchor)
            if not _has_position(base, inner):
                raise ProbeOutsideBisupport(Right(a, c))
            ds, di = position_measure(cur), s_measure(inner)
            return DegreeTrace(cd, cur, lcp, inner, ds, di, max(ds, di))

    def degree(self, b) -> int:
        return self.bp_degree_trace(b).deg

    def bp_degree_trace(self, b) -> DegreeTrace:
        if isinstance(b, Right):
            return self.degree_trace(b.pos, b.inner)
        a = tuple(b.pos)
        if not self.member(a) or not b.inner:
            raise ProbeOutsideBisupport(b)
        src = self._axiom_of(a, b.var, b.inner[0])
        if src is None:
            raise ProbeOutsideBisupport(b)
        return self.degree_trace(src, b.inner[1:])

    # -- truncation --
    def truncation_support(self, n):
        if not self.finite:
            raise DerivationError("use RegularNF.truncation for infinite supports")
        return {a for a in self.A if position_measure(a) <= n}

    def truncate(self, n) -> Derivation:
        A_n = self.truncation_support(n)
        full = {a: cut_type(self.tfull(a), n) for a in A_n if self.cls(a).kind == "full"}
        return TrivialConstruction(self.term, A_n, full, self.coder, check=False).derivation()


def _has_position(t, c):
    from .rigid_types import type_at
    return type_at(t, c) is not None


def trivial_construct(t, A, Tfull, coder=None) -> Derivation:
    return TrivialConstruction(t, A, Tfull, coder).derivation()


def full_support(t, max_depth=None):
    """All positions of t (tracks 0, 1, 2), up to an applicative depth."""
    return set(iter_positions(t, max_depth))


# -- extraction and truncation of existing derivations ---------------------------------

def extract(P):
    """(support, full types) of a quantitative derivation of a normal form."""
    _require_nf(P.term)
    if P.open:
        raise DerivationError("extract needs a complete finite derivation")
    if not _quant_finite(P):
        raise DerivationError("extract needs a quantitative derivation")
    A = set(P.nodes)
    full = {a: P.nodes[a].type for a in A if _classify(P.term, a).kind == "full"}
    return A, full


def axiom_coder(P):
    """Coder reproducing the axiom tracks of P."""
    return as_coder({a: j.axtrack for a, j in P.nodes.items() if j.axtrack is not None})


def construction_of(P) -> TrivialConstruction:
    A, full = extract(P)
    return TrivialConstruction(P.term, A, full, axiom_coder(P))


def degree(construction, b) -> tuple:
    """(degree, DegreeTrace) of a biposition."""
    if isinstance(construction, Derivation):
        construction = construction_of(construction)
    tr = construction.bp_degree_trace(b)
    return tr.deg, tr


def truncate_nf(P, n) -> Derivation:
    if isinstance(P, TrivialConstruction):
        return P.truncate(n)
    return construction_of(P).truncate(n)


def nf_chain(P, levels) -> ApproximationChain:
    cons = construction_of(P)
    return ApproximationChain([cons.truncate(n) for n in levels], limit=P)


# -- unforgetful derivations ---------------------------------------------------------------

ALPHA = TVar("a")


def unforgetful_nf_derivation(t, alpha=ALPHA, coder=None):
    """Full-support derivation of a normal form with every full type alpha.

    Finite terms give a Derivation; regular infinite terms a RegularNF."""
    _require_nf(t)
    if _is_finite_term(t):
        P = trivial_construct(t, full_support(t), lambda a: alpha, coder)
        j = P.root
        if not is_unforgetful(j.context, j.type):
            raise ForgetfulDerivation("the construction leaves an empty sequence (vacuous abstraction)")
        return P
    R = RegularNF(t, alpha, coder)
    if not R.is_unforgetful():
        raise ForgetfulDerivation("the construction leaves an empty sequence (vacuous abstraction)")
    return R


def full_nf_derivation(t, alpha=ALPHA, coder=None):
    """Like :func:`unforgetful_nf_derivation` without the unforgetfulness check."""
    _require_nf(t)
    if _is_finite_term(t):
        return trivial_construct(t, full_support(t), lambda a: alpha, coder)
    return RegularNF(t, alpha, coder)


def _is_finite_term(t):
    from .lambda_core import Rec
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Rec):
            return False
        if isinstance(u, Lam):
            stack.append(u.body)
        elif isinstance(u, App):
            stack.extend((u.fun, u.arg))
    return True


class RegularNF:
    """Full-support construction on a regular infinite normal form.

    Its contexts hold infinitely many tracks that need not form a uniform
    tail, so the derivation is exposed through its finite truncations and
    its exact collapsed root judgment."""

    def __init__(self, t, alpha=ALPHA, coder=None):
        _require_nf(t)
        self.term = t
        self.alpha = alpha
        self.coder = as_coder(coder)
        self._lazy = TrivialConstruction(t, self._member, lambda a: alpha, self.coder)
        self._trunc = {}

    def _member(self, a):
        return all(k <= 2 for k in a) and in_support(self.term, a)

    def truncation(self, n) -> Derivation:
        if n not in self._trunc:
            A_n = full_support(self.term, n)
            self._trunc[n] = TrivialConstruction(self.term, A_n, lambda a: self.alpha, self.coder,
                                                 check=False).derivation()
        return self._trunc[n]

    def degree(self, b):
        tr = self._lazy.bp_degree_trace(b)
        return tr.deg, tr

    def cover(self, probe):
        probe = list(probe)
        n = max([self._lazy.bp_degree_trace(b).deg for b in probe] + [0])
        P = self.truncation(n)
        have = bisupport(P)
        if all(b in have for b in probe):
            return P
        return None

    def chain(self, levels) -> ApproximationChain:
        return ApproximationChain([self.truncation(n) for n in levels])

    def collapsed_root(self):
        return collapsed_nf_judgment(self.term, self.alpha)

    def is_unforgetful(self) -> bool:
        ctx, ty = self.collapsed_root()
        return all(m_efo_empty(f, "-") for f in ctx.values()) and m_efo_empty(ty, "+")

    def __repr__(self):
        return f"RegularNF({self.term})"


# -- collapsed judgments of full-support constructions ----------------------------------------

def _spine(w):
    args = []
    while isinstance(w, App):
        args.append(w.arg)
        w = unroll(w.fun)
    return w, args[::-1]


def collapsed_nf_judgment(t, alpha=ALPHA):
    """Exact collapsed root judgment of the full-support construction with
    every full type alpha; works for regular terms through the term graph."""
    t = unroll(t)
    nodes = {}
    pending = []

    def tnode(key):
        if key not in nodes:
            nodes[key] = None
            pending.append(key)
        return key

    def arg_type(s):
        s = unroll(s)
        return tnode(("l", s)) if isinstance(s, Lam) else tnode(("a",))

    def forest(u, x):
        return tnode(("f", unroll(u), x))

    roots = [forest(t, x) for x in sorted(free_vars(t))]
    ty = arg_type(t)
    _drain(nodes, pending, alpha, tnode, arg_type, forest)
    out = from_graph(nodes, roots + [ty])
    ctx = {x: f for x, f in zip(sorted(free_vars(t)), out[:-1])}
    return ctx, out[-1]


def _drain(nodes, pending, alpha, tnode, arg_type, forest):
    def occ_kids(u, x):
        return tuple((tnode(("p", top, m)) if m else tnode(("a",)), mult)
                     for (top, m), mult in _occurrences(u, x).items())

    while pending:
        key = pending.pop()
        kind = key[0]
        if kind == "a":
            nodes[key] = ("var", alpha.name)
        elif kind == "l":
            lam = key[1]
            body = unroll(lam.body)
            head = tnode(("l", body)) if isinstance(body, Lam) else tnode(("a",))
            nodes[key] = ("arrow", occ_kids(body, lam.var), head)
        elif kind == "p":
            top, n = key[1], key[2]
            if n == 0:
                nodes[key] = ("var", alpha.name)
                continue
            _, args = _spine(top)
            arg = args[len(args) - n]
            nodes[key] = ("arrow", ((arg_type(arg), 1),), tnode(("p", top, n - 1)))
        else:
            nodes[key] = ("forest", occ_kids(key[1], key[2]))


def _occurrences(u, x):
    """Counter {(spine top, number of arguments): multiplicity} of the free
    occurrences of x in u; multiplicities through cycles are OMEGA."""
    def succ(w):
        if isinstance(w, Lam):
            return [] if w.var == x else [unroll(w.body)]
        if isinstance(w, App):
            _, args = _spine(w)
            return [unroll(s) for s in args]
        return []

    def emit(w):
        if isinstance(w, Var) and w.name == x:
            return [(w, 0)]
        if isinstance(w, App):
            h, args = _spine(w)
            if isinstance(h, Var) and h.name == x:
                return [(w, len(args))]
        return []

    return path_counts(unroll(u), succ, emit)


def path_counts(start, succ, emit):
    """Count the emitted keys over all paths from start in a finite graph.

    Keys reachable from a cycle get multiplicity OMEGA."""
    order, seen = [], set()
    stack = [start]
    while stack:
        w = stack.pop()
        if w in seen:
            continue
        seen.add(w)
        order.append(w)
        stack.extend(succ(w))
    # strongly connected components (iterative Tarjan)
    index, low, comp = {}, {}, {}
    st, on = [], set()
    counter = [0]
    for root in order:
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter[0]
        counter[0] += 1
        st.append(root)
        on.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    st.append(w)
                    on.add(w)
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if w in on:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                low[work[-1][0]] = min(low[work[-1][0]], low[v])
            if low[v] == index[v]:
                members = []
                while True:
                    w = st.pop()
                    on.discard(w)
                    members.append(w)
                    if w == v:
                        break
                for w in members:
                    comp[w] = v
    cyclic = set()
    for w in order:
        if any(comp[s] == comp[w] for s in succ(w)):
            cyclic.add(comp[w])
    memo = {}

    def total(w):
        # iterative post-order over the condensation
        todo = [w]
        while todo:
            v = todo[-1]
            c = comp[v]
            if c in memo:
                todo.pop()
                continue
            members = [m for m in order if comp[m] == c]
            outs = [s for m in members for s in succ(m) if comp[s] != c]
            missing = [s for s in outs if comp[s] not in memo]
            if missing:
                todo.extend(missing)
                continue
            acc = Counter()
            for m in members:
                for key in emit(m):
                    acc[key] += 1
            for m in members:
                for s in succ(m):
                    if comp[s] != c:
                        for key, v2 in memo[comp[s]].items():
                            acc[key] += v2
            if c in cyclic:
                acc = Counter({key: OMEGA for key in acc})
            memo[c] = acc
            todo.pop()
        return memo[comp[w]]

    return total(start)


# -- hereditary unforgetfulness -------------------------------------------------------------

def hereditary_unforgetful_subderivations(P):
    """For an unforgetful derivation of an HNF λx1..xp.x t1..tq, the argument
    subderivations typing each t_i (a list of lists, in argument order)."""
    binders, _, args = hnf_shape(P.term)
    j = P.root
    if not is_unforgetful(j.context, j.type):
        raise ForgetfulDerivation("the derivation is forgetful")
    p, q = len(binders), len(args)
    out = []
    for i in range(1, q + 1):
        node = (0,) * p + (1,) * (q - i)
        fam = [subderivation(P, node + (k,)) for k in P.children(node) if k >= 2]
        out.append(fam)
    return out


__all__ = [
    "NotANormalForm", "NotADSupport", "MissingFullType", "ForgetfulDerivation",
    "PositionClass", "classify_position", "is_dsupport", "s_measure", "position_measure",
    "cut_type", "DegreeTrace", "TrivialConstruction", "trivial_construct", "full_support",
    "extract", "axiom_coder", "construction_of", "degree", "truncate_nf", "nf_chain",
    "ALPHA", "unforgetful_nf_derivation", "full_nf_derivation", "RegularNF",
    "collapsed_nf_judgment", "path_counts", "hereditary_unforgetful_subderivations",
]
