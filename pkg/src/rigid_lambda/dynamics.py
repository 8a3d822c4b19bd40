"""Subject reduction and expansion on rigid derivations.

Contracting the redex ``(λx.r)s`` at term position ``b`` moves every typed
copy of the redex: for a representative ``a`` (a derivation position with
``collapse(a) == b``) the body premise ``a·1·0`` climbs to ``a``, and the
argument premise on track ``k`` replaces the axiom for ``x`` that carries
track ``k``. Expansion is the inverse and needs a coder to invent tracks for
the axioms it re-creates.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field

from .derivation import (Context, Derivation, DerivationError, Judgment, _quant_finite,
                         check_valid, node_kind, nr, relative_state_key, view)
from .lambda_core import (Lam, Var, alpha_equal, applicative_depth, collapse,
                          format_position, format_term, head_redex, is_redex,
                          node_label, reduce_at, subterm_at, unroll as term_unroll)
from .rigid_types import EMPTY, Arrow, Seq, TrackConflict


class NotARedex(DerivationError):
    pass


class NonQuantitativeInput(DerivationError):
    pass


class LabelMismatch(DerivationError):
    def __init__(self, pos, got, want):
        self.pos = pos
        super().__init__(f"label mismatch at {format_position(pos)}: {got} vs {want}")


class NonConvergingPrefix(DerivationError):
    pass


class ChainNotDirected(DerivationError):
    pass


class SubstitutionMismatch(DerivationError):
    pass


# -- track coders --------------------------------------------------------------

def _bijective_base2(n):
    digits = []
    while n > 0:
        r = n % 2 or 2
        digits.append(r)
        n = (n - r) // 2
    return digits[::-1]


def canonical_code(a) -> int:
    """Injective code of a track sequence into tracks >= 2.

    Each entry e becomes e+1 in bijective base 2 (digits 1 and 2); entries
    are separated by the digit 0 and the whole string is read in base 3.
    """
    digits = []
    for i, e in enumerate(a):
        if i:
            digits.append(0)
        digits.extend(_bijective_base2(e + 1))
    n = 0
    for d in digits:
        n = 3 * n + d
    return n + 2


def decode_canonical(k):
    """Inverse of :func:`canonical_code` (None when k is not a code)."""
    n = k - 2
    if n < 0:
        return None
    digits = []
    while n:
        digits.append(n % 3)
        n //= 3
    digits.reverse()
    groups, cur = [], []
    for d in digits:
        if d == 0:
            groups.append(cur)
            cur = []
        else:
            cur.append(d)
    groups.append(cur)
    out = []
    for g in groups:
        if not g:
            return None if digits else ()
        v = 0
        for d in g:
            v = 2 * v + d
        out.append(v - 1)
    return tuple(out)


class TrackCoder:
    """Injection from positions to argument tracks."""

    def __init__(self, spec="canonical", table=None):
        self.spec = spec
        self.table = dict(table or {})
        self.offset, self.stride = 0, 1
        if isinstance(spec, str) and spec.startswith("seed:"):
            rng = random.Random(int(spec.split(":", 1)[1]))
            self.offset = rng.randrange(0, 50)
            self.stride = rng.randrange(1, 8)
        elif spec not in ("canonical", "table"):
            raise ValueError(f"unknown coder {spec!r}")

    def __call__(self, a):
        a = tuple(a)
        if a in self.table:
            return self.table[a]
        return 2 + self.offset + self.stride * (canonical_code(a) - 2)

    def decode(self, k):
        for a, v in self.table.items():
            if v == k:
                return a
        n, r = divmod(k - 2 - self.offset, self.stride)
        if r or n < 0:
            return None
        a = decode_canonical(n + 2)
        if a is None or a in self.table:
            return None
        return a

    def __repr__(self):
        return f"TrackCoder({self.spec!r})"


CANONICAL = TrackCoder()


def as_coder(c):
    if c is None:
        return CANONICAL
    if isinstance(c, TrackCoder):
        return c
    if isinstance(c, dict):
        return TrackCoder("table", c)
    if callable(c):
        return c
    return TrackCoder(c)


# -- helpers -------------------------------------------------------------------

def representatives(P, b):
    b = tuple(b)
    return sorted(a for a in P.nodes if len(a) == len(b) and collapse(a) == b)


def _redex_parts(t, b):
    r = subterm_at(t, b)
    if not is_redex(r):
        raise NotARedex(f"no redex at {format_position(tuple(b))}")
    f = term_unroll(r.fun)
    return f.var, f.body, r.arg


def _x_occurrence(body, x, rel):
    """Prefix q of rel (a term position inside the body) holding a free x."""
    t = body
    for i in range(len(rel) + 1):
        u = term_unroll(t)
        if isinstance(u, Var):
            return rel[:i] if u.name == x else None
        if isinstance(u, Lam) and u.var == x:
            return None
        if i == len(rel):
            return None
        k = rel[i]
        t = u.body if k == 0 else (u.fun if k == 1 else u.arg)
    return None


def _renames(t, t2, b, rel):
    """Binder renamings applied by substitution on the path to rel."""
    m = {}
    u1 = subterm_at(t, b + (1, 0))
    u2 = subterm_at(t2, b)
    for i in range(len(rel)):
        n1, n2 = term_unroll(u1), term_unroll(u2)
        if isinstance(n1, Lam):
            if n1.var != n2.var:
                m[n1.var] = n2.var
            else:
                m.pop(n1.var, None)
        k = rel[i]
        u1 = n1.body if k == 0 else (n1.fun if k == 1 else n1.arg)
        u2 = n2.body if k == 0 else (n2.fun if k == 1 else n2.arg)
    return m


# -- residuals -----------------------------------------------------------------

@dataclass
class ResidualMap:
    b: tuple
    reps: list
    K: dict          # rep -> sorted argument tracks
    a_k: dict        # (rep, k) -> relative position of the x axiom above rep·1·0
    destroyed: set = field(default_factory=set)

    def __call__(self, alpha):
        return residual_position(self, alpha)


def residual_map(P, b) -> ResidualMap:
    b = tuple(b)
    x, _, _ = _redex_parts(P.term, b)
    reps = representatives(P, b)
    K, a_k, destroyed = {}, {}, set()
    for a in reps:
        body = a + (1, 0)
        if a + (1,) not in P.nodes or body not in P.nodes:
            raise DerivationError(f"representative {format_position(a)} lacks its abstraction premise")
        ks = [k for k in P.children(a) if k >= 2]
        K[a] = ks
        axioms = {}
        for p in _x_axioms(P, body, x):
            axioms[P.nodes[p].axtrack] = p[len(body):]
        for k in ks:
            if k not in axioms:
                raise DerivationError(f"no axiom for {x} with track {k} above {format_position(body)}")
            a_k[(a, k)] = axioms[k]
            destroyed.add(body + axioms[k])
        destroyed.update({a, a + (1,)})
    return ResidualMap(b, reps, K, a_k, destroyed)


def _x_axioms(P, start, x):
    out = []
    stack = [start]
    while stack:
        p = stack.pop()
        kind, y = P.kind(p)
        if kind == "var":
            if y == x:
                out.append(p)
        elif not (kind == "lam" and y == x):
            stack.extend(p + (k,) for k in P.children(p))
    return out


def residual_position(rm, alpha):
    alpha = tuple(alpha)
    if alpha in rm.destroyed:
        return None
    n = len(rm.b)
    a = alpha[:n]
    if a not in rm.K:
        return alpha
    rest = alpha[n:]
    if not rest:
        return None
    k = rest[0]
    if k >= 2:
        return a + rm.a_k[(a, k)] + rest[1:]
    if k == 1 and rest[1:2] == (0,):
        return a + rest[2:]
    return None


# -- subject reduction -----------------------------------------------------------

def subject_reduce(P, b):
    b = tuple(b)
    t2 = reduce_at(P.term, b)
    x, _, _ = _redex_parts(P.term, b)
    rm = residual_map(P, b)
    nodes = {}
    n = len(b)
    for alpha, j in P.nodes.items():
        new = residual_position(rm, alpha)
        if new is None:
            continue
        a = alpha[:n]
        if a in rm.K and alpha[n:n + 2] == (1, 0):
            rel = alpha[n + 2:]
            ctx = j.context
            ks = ctx.get(x).explicit_keys()
            ctx = ctx.without(x)
            ren = _renames(P.term, t2, b, collapse(rel))
            if ren:
                ctx = ctx.rename(ren)
            ctx = ctx.join(*(P.nodes[a + (k,)].context for k in ks))
            j = Judgment(ctx, j.type, j.axtrack)
        nodes[new] = j
    return Derivation(t2, nodes)


def subject_expand(P2, t, b, coder=None):
    """Derivation of ``t`` reducing at ``b`` to the quantitative ``P2``."""
    b = tuple(b)
    coder = as_coder(coder)
    t2 = reduce_at(t, b)
    if not (t2 == P2.term or alpha_equal(t2, P2.term)):
        raise DerivationError("the derivation does not type the contractum")
    if not _quant_finite(P2):
        raise NonQuantitativeInput("expansion needs a quantitative derivation")
    x, body, _ = _redex_parts(t, b)
    n = len(b)
    reps = representatives(P2, b)
    nodes = {}
    for alpha, j in P2.nodes.items():
        if alpha[:n] not in reps:
            nodes[alpha] = j
    for a in reps:
        region = sorted((p for p in P2.nodes if p[:n] == a), key=len)
        copies = {}
        for p in region:
            rel = p[n:]
            q = _x_occurrence(body, x, collapse(rel))
            if q is not None and len(q) == len(rel):
                copies[rel] = coder(a + (1, 0) + rel)
        in_copy = {}
        for p in region:
            rel = p[n:]
            root = next((c for c in copies if rel[:len(c)] == c), None)
            in_copy[rel] = root
        for p in region:
            rel = p[n:]
            root = in_copy[rel]
            if root is not None:
                nodes[a + (copies[root],) + rel[len(root):]] = P2.nodes[p]
                continue
            j = P2.nodes[p]
            above = [c for c in copies if c[:len(rel)] == rel]
            ctx = j.context
            ren = _renames(t, t2, b, collapse(rel))
            if above:
                ctx = ctx.minus(Context().join(*(P2.nodes[a + c].context for c in above)))
            if ren:
                ctx = ctx.rename({v: k for k, v in ren.items()})
            if above:
                ctx = ctx.with_(x, Seq([(copies[c], P2.nodes[a + c].type) for c in above]))
            nodes[a + (1, 0) + rel] = Judgment(ctx, j.type, j.axtrack)
        for c, k in copies.items():
            T = P2.nodes[a + c].type
            nodes[a + (1, 0) + c] = Judgment(Context({x: Seq({k: T})}), T, k)
        top = nodes[a + (1, 0)]
        nodes[a + (1,)] = Judgment(top.context.without(x), Arrow(top.context.get(x), top.type))
        j = P2.nodes[a]
        nodes[a] = Judgment(j.context, j.type)
    return Derivation(t, nodes)


def subject_substitute(P, t2):
    for a in P.nodes:
        c = collapse(a)
        try:
            got = node_label(subterm_at(t2, c))
        except Exception:
            raise LabelMismatch(a, "nothing", node_label(subterm_at(P.term, c))) from None
        want = node_label(subterm_at(P.term, c))
        if got != want:
            raise LabelMismatch(a, got, want)
    return Derivation(t2, P.nodes, P.open)


# -- head normalization --------------------------------------------------------

def head_normalize(P):
    """Head-reduce the subject of a finite derivation, reducing the derivation
    alongside. Returns (head normal form, final derivation, trace)."""
    bound = nr(P)
    trace = []
    while True:
        b = head_redex(P.term)
        if b is None:
            return P.term, P, trace
        if len(trace) >= bound:
            raise AssertionError("head reduction exceeded the size of the derivation")
        before = nr(P)
        P = subject_reduce(P, b)
        trace.append({"position": format_position(b), "nr_before": before, "nr_after": nr(P)})


@dataclass
class CycleCertificate:
    terms: list
    positions: list
    start: int

    @property
    def length(self):
        return len(self.positions) - self.start

    def __str__(self):
        return (f"head reduction returns to step {self.start} after {self.length} step(s): "
                f"{format_term(self.terms[self.start])}")

    def to_json(self):
        return {"cycle_start": self.start, "cycle_length": self.length,
                "terms": [format_term(t) for t in self.terms],
                "positions": [format_position(b) for b in self.positions]}


def refute_finite_typability(t, max_steps=64):
    """A head-reduction cycle rules out any finite derivation: each head step
    removes at least two rules, so a finite derivation cannot return to the
    same subject."""
    terms = [t]
    positions = []
    for _ in range(max_steps):
        b = head_redex(terms[-1])
        if b is None:
            return None
        nxt = reduce_at(terms[-1], b)
        positions.append(b)
        for i, old in enumerate(terms):
            if alpha_equal(old, nxt):
                terms.append(nxt)
                return CycleCertificate(terms, positions, i)
        terms.append(nxt)
    return None


# -- lazy reduction of infinite derivations -------------------------------------

class ReducedDerivation:
    """The reduct of a (possibly infinite) derivation, computed on demand."""

    def __init__(self, parent, b):
        self.parent = parent
        self.b = tuple(b)
        self.x, self.body, _ = _redex_parts(parent.term, self.b)
        self.term = reduce_at(parent.term, self.b)
        self._pre = {}
        self._judg = {}

    def _is_rep(self, a):
        if len(a) != len(self.b) or collapse(a) != self.b:
            return False
        return self.parent.judgment(a) is not None

    def locate(self, alpha):
        """Where alpha comes from: None, ("same", p), ("copy", p) or
        ("body", p, rep, rest) with p the parent position."""
        alpha = tuple(alpha)
        if alpha in self._pre:
            return self._pre[alpha]
        n = len(self.b)
        a = alpha[:n]
        out = ("same", alpha)
        if len(alpha) >= n and self._is_rep(a):
            rest = alpha[n:]
            body = a + (1, 0)
            q = _x_occurrence(self.body, self.x, collapse(rest))
            if q is None:
                out = ("body", body + rest, a, rest)
            else:
                j = self.parent.judgment(body + rest[:len(q)])
                out = None
                if j is not None and j.axtrack is not None:
                    out = ("copy", a + (j.axtrack,) + rest[len(q):])
        self._pre[alpha] = out
        return out

    def judgment(self, alpha):
        alpha = tuple(alpha)
        if alpha in self._judg:
            return self._judg[alpha]
        loc = self.locate(alpha)
        out = None
        if loc is not None:
            out = self.parent.judgment(loc[1])
            if out is not None and loc[0] == "body":
                out = self._body_judgment(loc[2], loc[3], out)
        self._judg[alpha] = out
        return out

    def _body_judgment(self, a, rest, j):
        x = self.x
        S = j.context.get(x)
        if not S:
            ctx = j.context
        elif S.is_finite:
            ctx = j.context.without(x).join(
                *(self.parent.judgment(a + (k,)).context for k in S.explicit_keys()))
        else:
            # cofinite family: everything but the left premise and the missing arguments
            explicit, tail = self.parent.child_tracks(a)
            missing = [k for k in explicit if k >= 2 and S.get(k) is None]
            if tail is not None:
                missing += [k for k in range(tail, S.tail[0]) if S.get(k) is None]
            whole = self.parent.judgment(a).context.minus(self.parent.judgment(a + (1,)).context)
            for k in missing:
                whole = whole.minus(self.parent.judgment(a + (k,)).context)
            ctx = j.context.without(x).join(whole)
        ren = _renames(self.parent.term, self.term, self.b, collapse(rest))
        if ren:
            ctx = ctx.rename(ren)
        return Judgment(ctx, j.type, j.axtrack)

    def child_tracks(self, alpha):
        loc = self.locate(tuple(alpha))
        if loc is None:
            return [], None
        return self.parent.child_tracks(loc[1])


def scrs_reduce(P, seq, horizon=6, finite=False):
    """Reduce along b0, b1, ... and return the view of the limit at ``horizon``.

    Unless the sequence is declared finite, its last redex must lie beyond
    the horizon so that the view has stabilised.
    """
    seq = [tuple(b) for b in seq]
    if seq and not finite:
        deep = [applicative_depth(b) > horizon for b in seq]
        if not deep[-1]:
            raise NonConvergingPrefix(
                f"redex at {format_position(seq[-1])} is within the horizon {horizon}; "
                "extend the prefix")
    D = P
    for b in seq:
        D = ReducedDerivation(D, b)
    return view(D, horizon)


class LimitDerivation:
    """Limit of an infinite reduction sequence, computed on demand.

    ``redex(m)`` is the m-th contracted position and ``settle(d)`` an index
    after which every redex has applicative depth > d. The judgment at a is
    read off the reduct after ``settle(ad(a))`` steps, where it no longer
    changes. ``term`` is the limit term.
    """

    def __init__(self, P, redex, settle, term):
        self.term = term
        self._chain = [P]
        self._redex = redex
        self._settle = settle

    def _at(self, n):
        while len(self._chain) <= n:
            m = len(self._chain) - 1
            self._chain.append(ReducedDerivation(self._chain[-1], self._redex(m)))
        return self._chain[n]

    def judgment(self, a):
        a = tuple(a)
        return self._at(self._settle(applicative_depth(a))).judgment(a)

    def child_tracks(self, a):
        a = tuple(a)
        return self._at(self._settle(applicative_depth(a))).child_tracks(a)

    def state_key(self, a, x, t):
        return relative_state_key(self, a, x, t)

    def prefix(self, horizon):
        """Redexes to contract before the view at ``horizon`` is stable."""
        return [self._redex(m) for m in range(self._settle(horizon) + 1)]


def scrs_limit(P, redex, settle, term):
    return LimitDerivation(P, redex, settle, term)


def stable_index(seq, horizon):
    """First index after which every redex lies beyond the horizon."""
    last = -1
    for i, b in enumerate(seq):
        if applicative_depth(b) <= horizon:
            last = i
    return last + 1


def scrs_expand(chain, t, seq, coder=None):
    """Expand each finite derivation of the limit back to a derivation of t."""
    from .approximation import approx_leq
    coder = as_coder(coder)
    seq = [tuple(b) for b in seq]
    terms = [t]
    for b in seq:
        terms.append(reduce_at(terms[-1], b))
    N = 0
    for Q in chain:
        coll = {collapse(a) for a in Q.nodes}
        need = 0
        for m, b in enumerate(seq):
            if any(len(c) >= len(b) and c[:len(b)] == b for c in coll):
                need = m + 1
        N = max(N, need)
    out = []
    for Q in chain:
        try:
            R = subject_substitute(Q, terms[N])
        except LabelMismatch as e:
            raise SubstitutionMismatch(str(e)) from None
        for i in range(N - 1, -1, -1):
            R = subject_expand(R, terms[i], seq[i], coder)
        if R.root != Q.root:
            raise SubstitutionMismatch("expansion changed the conclusion")
        out.append(R)
    for P1, P2 in zip(out, out[1:]):
        if not approx_leq(P1, P2):
            raise ChainNotDirected("expanded derivations are not increasing")
    return out, N
