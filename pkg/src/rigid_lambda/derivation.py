"""Rigid derivations: track-labelled proof trees over a subject term.

A derivation is stored as a map from positions (tuples of tracks) to
judgments. The subterm typed at position ``a`` is the one at
``collapse(a)``, so argument premises sit under any track >= 2 while the
term only knows track 2.

Infinite derivations are handled through a small lazy protocol: an object
with ``term``, ``judgment(a)`` and ``child_tracks(a)`` (explicit tracks plus
an optional start of an infinite run). :func:`view` cuts such an object to a
finite :class:`Derivation` whose cut nodes are listed in ``open``.
"""
from __future__ import annotations

import itertools
import json
import random
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

from .lambda_core import (App, Horizon, Lam, Var, alpha_equal, applicative_depth,
                          collapse, format_position, format_term, parse_position,
                          parse_term, subterm_at, TermError)
from .rigid_types import (EMPTY, Arrow, Context, Seq, TrackConflict, TVar,
                          format_seq, format_type, label_of, parse_type, seq_at,
                          type_at, unroll)


class DerivationError(Exception):
    pass


class InvalidDerivation(DerivationError):
    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(str(verdict))


class InvalidRestriction(DerivationError):
    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(str(verdict))


class NoSuchTrack(DerivationError):
    pass


@dataclass(frozen=True)
class Verdict:
    ok: bool
    position: tuple | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "valid"
        where = "" if self.position is None else f" at {format_position(self.position)}"
        return f"invalid{where}: {self.reason}"


VALID = Verdict(True)


class Judgment(NamedTuple):
    context: Context
    type: object
    axtrack: int | None = None

    def __str__(self):
        return f"{self.context} ⊢ {format_type(self.type)}"


class Right(NamedTuple):
    pos: tuple
    inner: tuple


class Left(NamedTuple):
    pos: tuple
    var: str
    inner: tuple


def bp_key(p):
    if isinstance(p, Right):
        return (len(p.pos), p.pos, 0, "", p.inner)
    return (len(p.pos), p.pos, 1, p.var, p.inner)


def format_bp(p):
    if isinstance(p, Right):
        return f"({format_position(p.pos)}, {format_position(p.inner)})"
    return f"({format_position(p.pos)}, {p.var}, {format_position(p.inner)})"


def pos_key(a):
    return (len(a), a)


def node_kind(term, a):
    """('var', x), ('lam', x) or ('app', None) for the subterm typed at a."""
    t = subterm_at(term, collapse(a))
    if isinstance(t, Var):
        return ("var", t.name)
    if isinstance(t, Lam):
        return ("lam", t.var)
    if isinstance(t, App):
        return ("app", None)
    return ("horizon", None)


class Derivation:
    """A finite derivation, or a finite view of an infinite one."""

    def __init__(self, term, nodes, open=frozenset()):
        self.term = term
        self.nodes = dict(sorted(nodes.items(), key=lambda kv: pos_key(kv[0])))
        self.open = frozenset(open)
        self._children = None
        self._kinds = {}
        self._slots = None
        self._links = None

    # lazy protocol
    def judgment(self, a):
        return self.nodes.get(tuple(a))

    def child_tracks(self, a):
        return self.children(a), None

    def children(self, a):
        if self._children is None:
            ch = {p: [] for p in self.nodes}
            for p in self.nodes:
                if p:
                    ch.setdefault(p[:-1], []).append(p[-1])
            self._children = {p: sorted(v) for p, v in ch.items()}
        return self._children.get(tuple(a), [])

    def kind(self, a):
        k = self._kinds.get(a)
        if k is None:
            k = self._kinds[a] = node_kind(self.term, a)
        return k

    def positions(self):
        return list(self.nodes)

    @property
    def root(self):
        return self.nodes[()]

    def __contains__(self, a):
        return tuple(a) in self.nodes

    def __len__(self):
        return len(self.nodes)

    def __eq__(self, other):
        if not isinstance(other, Derivation):
            return NotImplemented
        if self.nodes != other.nodes or self.open != other.open:
            return False
        return self.term == other.term or alpha_equal(self.term, other.term)

    def __hash__(self):
        return hash((len(self.nodes), self.nodes.get(())))

    def __repr__(self):
        return f"<Derivation of {format_term(self.term)} with {len(self.nodes)} nodes>"

    def __str__(self):
        return format_derivation(self)

    def replace(self, term=None, nodes=None, open=None):
        return Derivation(self.term if term is None else term,
                          self.nodes if nodes is None else nodes,
                          self.open if open is None else open)


def axiom(x, track, t, term=None):
    return Derivation(Var(x) if term is None else term,
                      {(): Judgment(Context({x: Seq({track: t})}), t, track)})


def nr(P) -> int:
    return len(P.nodes)


def subderivation(P, a):
    a = tuple(a)
    n = len(a)
    nodes = {p[n:]: j for p, j in P.nodes.items() if p[:n] == a}
    if not nodes:
        raise DerivationError(f"{format_position(a)} is not in the support")
    return Derivation(subterm_at(P.term, collapse(a)), nodes,
                      {p[n:] for p in P.open if p[:n] == a})


# -- validity ----------------------------------------------------------------

def check_valid(P) -> Verdict:
    """First violated typing constraint in position order, or VALID."""
    nodes = P.nodes
    if () not in nodes:
        return Verdict(False, (), "empty derivation")
    for a, j in nodes.items():
        if a and a[:-1] not in nodes:
            return Verdict(False, a, "parent position missing")
        try:
            kind, x = P.kind(a)
        except TermError:
            return Verdict(False, a, "collapsed position outside the term support")
        if kind == "horizon":
            return Verdict(False, a, "position beyond the term view")
        v = _check_node(P, a, j, kind, x)
        if not v:
            return v
    return VALID


def _check_node(P, a, j, kind, x):
    ch = P.children(a)
    is_open = a in P.open
    if kind == "var":
        if ch:
            return Verdict(False, a, "axiom with premises")
        if j.axtrack is None or j.axtrack < 2:
            return Verdict(False, a, "axiom without an argument track")
        want = Context({x: Seq({j.axtrack: j.type})})
        if j.context != want:
            return Verdict(False, a, f"axiom context must be exactly {x}:({j.axtrack}:{format_type(j.type)})")
        return VALID
    if j.axtrack is not None:
        return Verdict(False, a, "axiom track on a non-axiom node")
    if kind == "lam":
        if any(k != 0 for k in ch):
            return Verdict(False, a, "abstraction premise on a track other than 0")
        if not ch:
            return VALID if is_open else Verdict(False, a, "abstraction without body premise")
        body = P.nodes[a + (0,)]
        want = Arrow(body.context.get(x), body.type)
        if j.type != want:
            return Verdict(False, a, "abstraction type is not C(a.0)(x) -> T(a.0)")
        if j.context != body.context.without(x):
            return Verdict(False, a, "abstraction context is not C(a.0) minus the bound variable")
        return VALID
    # application
    if any(k == 0 for k in ch):
        return Verdict(False, a, "application premise on track 0")
    if 1 not in ch:
        return VALID if is_open else Verdict(False, a, "application without left premise")
    left = unroll(P.nodes[a + (1,)].type)
    if not isinstance(left, Arrow):
        return Verdict(False, a, "left premise is not an arrow")
    if left.head != j.type:
        return Verdict(False, a, "left premise head differs from the conclusion type")
    args = [k for k in ch if k >= 2]
    fam = left.tail
    if not is_open:
        if not fam.is_finite or fam.explicit_keys() != args:
            return Verdict(False, a, "argument tracks differ from the roots of the left premise")
    for k in args:
        want = fam.get(k)
        if want is None:
            return Verdict(False, a, f"argument track {k} absent from the left premise")
        if want != P.nodes[a + (k,)].type:
            return Verdict(False, a, f"sequence type mismatch on track {k}")
    premises = [P.nodes[a + (k,)].context for k in ch]
    try:
        joined = Context().join(*premises)
    except TrackConflict as e:
        return Verdict(False, a, f"premise contexts overlap ({e})")
    if is_open:
        for y, s in joined.items():
            have = j.context.get(y)
            for k, t in s.entries:
                if have.get(k) != t:
                    return Verdict(False, a, f"premise context entry {y}:{k} not in the conclusion")
        return VALID
    if joined != j.context:
        return Verdict(False, a, "conclusion context is not the join of the premise contexts")
    return VALID


def assert_valid(P):
    v = check_valid(P)
    if not v:
        raise InvalidDerivation(v)
    return P


# -- bipositions -------------------------------------------------------------

def type_labels(t, max_track=None, max_len=None):
    from .rigid_types import type_support
    return dict(type_support(t, max_len=max_len, max_track=max_track))


def seq_labels(s, max_track=None, max_len=None):
    from .rigid_types import seq_support
    return dict(seq_support(s, max_len=max_len, max_track=max_track))


def labelled_bisupport(P, max_track=None, max_len=None):
    out = {}
    for a, j in P.nodes.items():
        for c, lab in type_labels(j.type, max_track, max_len).items():
            out[Right(a, c)] = lab
        for x, s in j.context.items():
            for c, lab in seq_labels(s, max_track, max_len).items():
                out[Left(a, x, c)] = lab
    return out


def bisupport(P, max_track=None, max_len=None):
    return set(labelled_bisupport(P, max_track, max_len))


# -- axioms ------------------------------------------------------------------

def ax_positions(P, a, x):
    a = tuple(a)
    out = []
    stack = [a]
    while stack:
        p = stack.pop()
        kind, y = P.kind(p)
        if kind == "var":
            if y == x:
                out.append(p)
            continue
        if kind == "lam" and y == x:
            continue
        stack.extend(p + (k,) for k in P.children(p))
    return sorted(out, key=pos_key)


def axiom_track(P, a):
    j = P.judgment(tuple(a))
    if j is None or j.axtrack is None:
        raise DerivationError(f"{format_position(tuple(a))} is not an axiom leaf")
    return j.axtrack


def pos(P, a, x, k):
    for p in ax_positions(P, a, x):
        if P.judgment(p).axtrack == k:
            return p
    raise NoSuchTrack(f"no axiom for {x} with track {k} above {format_position(tuple(a))}")


# -- quantitativity ------------------------------------------------------------

@dataclass
class QuantReport:
    status: str  # quantitative | orphan | unresolved
    witness: tuple | None = None
    exact: bool = True

    def __bool__(self):
        return self.status == "quantitative"

    def __str__(self):
        if self.status == "quantitative":
            return "quantitative" + ("" if self.exact else " (checked at the horizon)")
        a, x, k = self.witness
        what = "never reaches an axiom" if self.status == "orphan" else "leaves the horizon"
        return f"{self.status}: track {k} of {x} at {format_position(a)} {what}"


def quantitative_report(P, horizon=6, tail_window=3) -> QuantReport:
    if isinstance(P, Derivation) and not P.open:
        return _quant_finite(P)
    return _quant_traced(P, horizon, tail_window)


def is_quantitative(P, horizon=6) -> bool:
    return bool(quantitative_report(P, horizon))


def _quant_finite(P):
    collected = {}
    for a in sorted(P.nodes, key=lambda p: -len(p)):
        j = P.nodes[a]
        kind, x = P.kind(a)
        if kind == "var":
            got = {x: [(j.axtrack, j.type)]} if j.axtrack is not None else {}
        else:
            got = {}
            for k in P.children(a):
                for y, items in collected[a + (k,)].items():
                    got.setdefault(y, []).extend(items)
            if kind == "lam":
                got.pop(x, None)
        collected[a] = got
        for y in set(got) | set(j.context):
            have = j.context.get(y)
            items = sorted(got.get(y, []), key=lambda kv: kv[0])
            tracks = [k for k, _ in items]
            if len(set(tracks)) != len(tracks):
                return QuantReport("orphan", (a, y, tracks[0]))
            produced = Seq(items) if items else EMPTY
            if produced != have:
                extra = [k for k in have.explicit_keys() if produced.get(k) is None]
                k = extra[0] if extra else (have.explicit_keys() or [None])[0]
                return QuantReport("orphan", (a, y, k))
    return QuantReport("quantitative")


def _node_in_horizon(a, horizon):
    return applicative_depth(a) <= horizon and all(k <= max(horizon, 2) for k in a)


def _iter_lazy_nodes(D, horizon):
    queue = deque([()])
    while queue:
        a = queue.popleft()
        if D.judgment(a) is None:
            continue
        yield a
        for k in expand_tracks(D.child_tracks(a), max(horizon, 2)):
            b = a + (k,)
            if _node_in_horizon(b, horizon):
                queue.append(b)


def expand_tracks(ct, bound):
    explicit, tail = ct
    out = list(explicit)
    if tail is not None:
        out += list(range(tail, max(bound, tail - 1) + 1))
    return out


def _route(D, a, x, t, scan):
    explicit, tail = D.child_tracks(a)
    cands = list(explicit)
    if tail is not None:
        cands += list(range(tail, max(scan, tail) + 1))
    for k in cands:
        j = D.judgment(a + (k,))
        if j is not None and j.context.get(x).get(t) is not None:
            return k
    return None


def _quant_traced(D, horizon, tail_window):
    keyed = hasattr(D, "state_key")
    view_only = isinstance(D, Derivation)
    exact = keyed
    for a in _iter_lazy_nodes(D, horizon):
        j = D.judgment(a)
        if view_only and a in D.open:
            continue
        for x, s in j.context.items():
            tracks = s.explicit_keys()
            if s.tail is not None:
                tracks += list(range(s.tail[0], s.tail[0] + tail_window))
                exact = False
            for t in tracks:
                r = _trace(D, a, x, t, horizon, keyed)
                if r == "orphan":
                    return QuantReport("orphan", (a, x, t), keyed)
                if r == "unresolved":
                    return QuantReport("unresolved", (a, x, t), False)
    return QuantReport("quantitative", exact=exact)


def _trace(D, a, x, t, horizon, keyed):
    seen = set()
    steps = 0
    limit = 64 + 16 * horizon
    while True:
        j = D.judgment(a)
        if j is None:
            return "unresolved"
        if keyed:
            key = D.state_key(a, x, t)
            if key in seen:
                return "orphan"
            seen.add(key)
        kind, y = node_kind(D.term, a)
        if kind == "var":
            return "resolved" if (y == x and j.axtrack == t) else "orphan"
        if kind == "horizon":
            return "unresolved"
        if isinstance(D, Derivation) and a in D.open:
            k = _route(D, a, x, t, 0)
            if k is None:
                return "unresolved"
        else:
            k = _route(D, a, x, t, t + 2 * max(horizon, 2) + 8)
            if k is None:
                return "orphan" if kind == "app" or not keyed else "unresolved"
        a = a + (k,)
        steps += 1
        if steps > limit:
            return "unresolved"


# -- views of lazy derivations -------------------------------------------------

def view(D, horizon):
    """Finite cut: nodes of applicative depth <= horizon whose tracks are all
    <= max(horizon, 2). Nodes that lost premises are recorded as open."""
    if isinstance(D, Derivation) and not D.open and horizon is None:
        return D
    nodes = {}
    open_ = set()
    queue = deque([()])
    bound = max(horizon, 2)
    while queue:
        a = queue.popleft()
        j = D.judgment(a)
        if j is None:
            continue
        nodes[a] = j
        explicit, tail = D.child_tracks(a)
        if tail is not None:
            open_.add(a)
        if isinstance(D, Derivation) and a in D.open:
            open_.add(a)
        for k in expand_tracks((explicit, tail), bound):
            b = a + (k,)
            if _node_in_horizon(b, horizon):
                queue.append(b)
            else:
                open_.add(a)
    return Derivation(D.term, nodes, open_)


def _rank(s, t):
    """Position of track t among the tracks of s, in increasing order."""
    below = sum(1 for k in s.explicit_keys() if k < t)
    if s.tail is not None and t >= s.tail[0]:
        below += t - s.tail[0]
    return below


def _renumbered(s):
    # the sequence read in track order, forgetting the actual track numbers
    return (tuple(format_type(t) for _, t in s.entries),
            None if s.tail is None else format_type(s.tail[1]))


def relative_state_key(D, a, x, t):
    """Key for tracing track t of x at a up to an order-preserving renumbering
    of context tracks. Meeting the same key twice on a route shows the track
    is passed on forever when the subderivation only depends on the subterm
    and on the renumbered judgment, as in track-shifting regular derivations."""
    j = D.judgment(a)
    sub = format_term(subterm_at(D.term, collapse(a)))
    ctx = tuple(sorted((y, _renumbered(s)) for y, s in j.context.items()))
    return (sub, ctx, format_type(j.type), j.axtrack is not None, x,
            _rank(j.context.get(x), t))


class RegularDerivation:
    """An infinite derivation given by rules on positions.

    ``judge(a)`` returns the judgment at a (None outside the support) and
    ``tracks(a)`` the premise tracks as (explicit, tail start or None).
    ``node_key(a)``, when given, must identify subderivations with the same
    collapse; it makes multiset quantitativity exact on cyclic derivations.
    """

    def __init__(self, term, judge, tracks, node_key=None, name="derivation"):
        self.term = term
        self._judge = judge
        self._tracks = tracks
        self._memo = {}
        self.name = name
        if node_key is not None:
            self.node_key = node_key

    def judgment(self, a):
        a = tuple(a)
        if a not in self._memo:
            self._memo[a] = self._judge(a)
        return self._memo[a]

    def child_tracks(self, a):
        if self.judgment(a) is None:
            return [], None
        return self._tracks(tuple(a))

    def state_key(self, a, x, t):
        return relative_state_key(self, a, x, t)

    def m_canonical(self):
        from .multiset_bridge import lazy_canonical
        return lazy_canonical(self)

    def view(self, horizon):
        return view(self, horizon)

    def __repr__(self):
        return f"<RegularDerivation {self.name} of {format_term(self.term)}>"


# -- restriction (finite approximations) -------------------------------------

def links(P):
    """Pairs of bipositions that any restriction must keep or drop together."""
    if P._links is not None:
        return P._links
    out = []
    for a, j in P.nodes.items():
        kind, x = P.kind(a)
        if kind == "var":
            k = j.axtrack
            for c in type_labels(j.type):
                out.append((Right(a, c), Left(a, x, (k,) + c), "axiom"))
        elif kind == "lam":
            b = a + (0,)
            if b not in P.nodes:
                continue
            body = P.nodes[b]
            for c in type_labels(body.type):
                out.append((Right(a, (1,) + c), Right(b, c), "abstraction"))
            for c in seq_labels(body.context.get(x)):
                out.append((Right(a, c), Left(b, x, c), "abstraction"))
            for y, s in j.context.items():
                for c in seq_labels(s):
                    out.append((Left(a, y, c), Left(b, y, c), "abstraction"))
        else:
            ch = P.children(a)
            if 1 not in ch:
                continue
            for c in type_labels(j.type):
                out.append((Right(a, c), Right(a + (1,), (1,) + c), "application"))
            for k in ch:
                if k >= 2:
                    for c in type_labels(P.nodes[a + (k,)].type):
                        out.append((Right(a + (1,), (k,) + c), Right(a + (k,), c), "application"))
            for y, s in j.context.items():
                for c in seq_labels(s):
                    owner = next((i for i in ch if P.nodes[a + (i,)].context.get(y).get(c[0]) is not None), None)
                    if owner is not None:
                        out.append((Left(a, y, c), Left(a + (owner,), y, c), "application"))
    P._links = out
    return out


def closure_requirements(P, p):
    """Bipositions forced by ``p`` through prefix, head and node closure."""
    req = []
    a = p.pos
    inner = p.inner
    if isinstance(p, Right):
        if inner:
            req.append(Right(a, inner[:-1]))
        t = type_at(P.nodes[a].type, inner)
        if isinstance(t, Arrow):
            req.append(Right(a, inner + (1,)))
    else:
        if len(inner) > 1:
            req.append(Left(a, p.var, inner[:-1]))
        t = seq_at(P.nodes[a].context.get(p.var), inner)
        if isinstance(t, Arrow):
            req.append(Left(a, p.var, inner + (1,)))
        req.append(Right(a, ()))
    if a and not inner:
        req.append(Right(a[:-1], ()))
    if isinstance(p, Right) and inner:
        req.append(Right(a, ()))
    return req


def validate_restriction(P, B0) -> Verdict:
    B0 = set(B0)
    full = labelled_bisupport(P)
    extra = [p for p in B0 if p not in full]
    if extra:
        p = min(extra, key=bp_key)
        return Verdict(False, p.pos, f"subset: {format_bp(p)} is not in the bisupport")
    if Right((), ()) not in B0:
        return Verdict(False, (), "root: the root judgment type must be kept")
    for p in sorted(B0, key=bp_key):
        for q in closure_requirements(P, p):
            if q not in B0:
                what = "node closure" if not q.inner and isinstance(q, Right) else "type closure"
                return Verdict(False, p.pos, f"{what}: {format_bp(p)} needs {format_bp(q)}")
    for p, q, rule in links(P):
        if (p in B0) != (q in B0):
            return Verdict(False, p.pos, f"{rule} linkage: {format_bp(p)} and {format_bp(q)} must agree")
    return VALID


def type_from_labels(labels, prefix=()):
    lab = labels.get(prefix)
    if lab is None:
        raise DerivationError(f"missing type position {format_position(prefix)}")
    if lab != "→":
        return TVar(lab)
    keys = sorted({c[len(prefix)] for c in labels if len(c) > len(prefix) and c[:len(prefix)] == prefix})
    if 1 not in keys:
        raise DerivationError(f"arrow without head at {format_position(prefix)}")
    tail = Seq([(k, type_from_labels(labels, prefix + (k,))) for k in keys if k >= 2])
    return Arrow(tail, type_from_labels(labels, prefix + (1,)))


def seq_from_labels(labels):
    keys = sorted({c[0] for c in labels})
    return Seq([(k, type_from_labels(labels, (k,))) for k in keys])


def restrict(P, B0):
    v = validate_restriction(P, B0)
    if not v:
        raise InvalidRestriction(v)
    return _build_from(P, B0)


def _build_from(P, B0):
    full = labelled_bisupport(P)
    nodes = build_nodes({p: full[p] for p in B0}, lambda a: P.nodes[a].axtrack)
    return Derivation(P.term, nodes, P.open & set(nodes))


def build_nodes(labelled, axtrack):
    """Judgments from a labelled set of bipositions. Nodes without a right
    root are dropped; ``axtrack(a)`` gives the axiom track of a node."""
    per_node = {}
    for p, lab in labelled.items():
        d = per_node.setdefault(p.pos, ({}, {}))
        if isinstance(p, Right):
            d[0][p.inner] = lab
        else:
            d[1].setdefault(p.var, {})[p.inner] = lab
    nodes = {}
    for a, (tl, cl) in per_node.items():
        if () not in tl:
            continue
        ctx = Context({x: seq_from_labels(l) for x, l in cl.items()})
        nodes[a] = Judgment(ctx, type_from_labels(tl), axtrack(a))
    return nodes


# -- isomorphisms --------------------------------------------------------------

class _UF:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # sites mix str and tuple kinds, so order them by repr
            lo, hi = sorted((ra, rb), key=repr)
            self.parent[hi] = lo


def _sites_of_type(t, prefix):
    """(inner position, Seq) for every arrow node of a finite type."""
    out = []
    stack = [((), t)]
    while stack:
        c, u = stack.pop()
        u = unroll(u)
        if isinstance(u, Arrow):
            out.append((c, u.tail))
            stack.append((c + (1,), u.head))
            for k, v in u.tail.entries:
                stack.append((c + (k,), v))
    return out


class SlotStructure:
    """Every argument track of a derivation lives in a slot (site, key).

    Sites are arrow nodes inside the judgment types ``(a, 'T', c)`` and
    sequence nodes inside contexts ``(a, ('C', x), c)``. The typing rules
    identify slots at different sites; the union-find classes are the
    morally unique tracks that a coherent relabelling may move.
    """

    def __init__(self, P):
        self.P = P
        self.sites = {}
        for a, j in P.nodes.items():
            for c, s in _sites_of_type(j.type, ()):
                self.sites[(a, "T", c)] = s.explicit_keys()
            for x, s in j.context.items():
                self.sites[(a, ("C", x), ())] = s.explicit_keys()
                for k, v in s.entries:
                    for c, f in _sites_of_type(v, ()):
                        self.sites[(a, ("C", x), (k,) + c)] = f.explicit_keys()
        uf = self.uf = _UF()
        for s, ks in self.sites.items():
            for k in ks:
                uf.find((s, k))

        def merge_all(s1, s2):
            for k in self.sites.get(s1, []):
                uf.union((s1, k), (s2, k))

        def merge_subtree(site1, c1, site2, c2):
            # all sites below c1 in site1's tree with their counterparts
            for (a, kind, c), ks in list(self.sites.items()):
                if (a, kind) == site1 and c[:len(c1)] == c1:
                    merge_all((a, kind, c), site2 + (c2 + c[len(c1):],))

        for a, j in P.nodes.items():
            kind, x = P.kind(a)
            if kind == "var":
                k = j.axtrack
                merge_subtree((a, "T"), (), (a, ("C", x)), (k,))
            elif kind == "lam" and a + (0,) in P.nodes:
                b = a + (0,)
                merge_subtree((a, "T"), (1,), (b, "T"), ())
                merge_all((a, "T", ()), (b, ("C", x), ()))
                for k in self.sites.get((a, "T", ()), []):
                    merge_subtree((a, "T"), (k,), (b, ("C", x)), (k,))
                for y in j.context:
                    merge_subtree((a, ("C", y)), (), (b, ("C", y)), ())
            elif kind == "app" and a + (1,) in P.nodes:
                merge_subtree((a, "T"), (), (a + (1,), "T"), (1,))
                for k in P.children(a):
                    if k >= 2:
                        merge_subtree((a + (1,), "T"), (k,), (a + (k,), "T"), ())
                for y, s in j.context.items():
                    for k in s.explicit_keys():
                        owner = next(i for i in P.children(a)
                                     if P.nodes[a + (i,)].context.get(y).get(k) is not None)
                        uf.union(((a, ("C", y), ()), k), ((a + (owner,), ("C", y), ()), k))
                        merge_subtree((a, ("C", y)), (k,), (a + (owner,), ("C", y)), (k,))

    def cls(self, site, key):
        return self.uf.find((site, key))

    def classes(self):
        return sorted({self.uf.find(s) for s in self.uf.parent}, key=repr)


def slot_structure(P):
    if P._slots is None:
        P._slots = SlotStructure(P)
    return P._slots


def relabel(P, f):
    """Rename tracks coherently; ``f`` maps a slot class to its new track.

    Classes missing from ``f`` keep their track.
    """
    S = slot_structure(P)

    def key(site, k):
        return f.get(S.cls(site, k), k)

    newpos = {(): ()}
    for a in P.nodes:
        if a:
            p, k = a[:-1], a[-1]
            nk = key((p + (1,), "T", ()), k) if k >= 2 else k
            newpos[a] = newpos[p] + (nk,)

    def rt(t, a, kind, c):
        u = unroll(t)
        if isinstance(u, TVar):
            return u
        site = (a, kind, c)
        tail = Seq([(key(site, k), rt(v, a, kind, c + (k,))) for k, v in u.tail.entries])
        return Arrow(tail, rt(u.head, a, kind, c + (1,)))

    nodes = {}
    for a, j in P.nodes.items():
        ctx = {}
        for x, s in j.context.items():
            site = (a, ("C", x), ())
            ctx[x] = Seq([(key(site, k), rt(v, a, ("C", x), (k,))) for k, v in s.entries])
        ax = j.axtrack
        if ax is not None:
            x = P.kind(a)[1]
            ax = key((a, ("C", x), ()), ax)
        nodes[newpos[a]] = Judgment(Context(ctx), rt(j.type, a, "T", ()), ax)
    return Derivation(P.term, nodes, {newpos[a] for a in P.open})


def random_relabel(P, rng=None, pool=40):
    """Coherent relabelling sending each slot class to a distinct random track."""
    rng = rng or random.Random(0)
    S = slot_structure(P)
    cl = S.classes()
    fresh = rng.sample(range(2, 2 + max(pool, 2 * len(cl))), len(cl))
    return relabel(P, dict(zip(cl, fresh)))


def shape_key(t):
    """Track-free canonical key (sequence entries compared as multisets)."""
    u = unroll(t)
    if isinstance(u, TVar):
        return ("v", u.name)
    return ("a", tuple(sorted(shape_key(v) for _, v in u.tail.entries)), shape_key(u.head))


@dataclass
class Isomorphism:
    """A derivation isomorphism, recorded as a map between slot classes."""

    source: Derivation
    target: Derivation
    class_map: dict

    def apply(self, P=None):
        P = self.source if P is None else P
        return relabel(P, {c1: c2[1] for c1, c2 in self.class_map.items()})

    def inverse(self):
        return Isomorphism(self.target, self.source, {v: k for k, v in self.class_map.items()})

    def compose(self, other):
        """self followed by other."""
        return Isomorphism(self.source, other.target,
                           {k: other.class_map[v] for k, v in self.class_map.items()})

    def support_map(self):
        S = slot_structure(self.source)
        out = {(): ()}
        for a in self.source.nodes:
            if a:
                p, k = a[:-1], a[-1]
                if k >= 2:
                    k = self.class_map[S.cls((p + (1,), "T", ()), k)][1]
                out[a] = out[p] + (k,)
        return out


def iso_check(P1, P2):
    """Search for a derivation isomorphism; returns an Isomorphism or None."""
    if len(P1.nodes) != len(P2.nodes):
        return None
    if not (P1.term == P2.term or alpha_equal(P1.term, P2.term)):
        return None
    if shape_key(P1.root.type) != shape_key(P2.root.type):
        return None
    S1, S2 = slot_structure(P1), slot_structure(P2)
    start = (deque([("node", (), ())]), {}, {})
    stack = [start]
    while stack:
        tasks, cmap, inv = stack.pop()
        ok = True
        while tasks:
            task = tasks.popleft()
            kind = task[0]
            if kind == "node":
                _, a1, a2 = task
                j1, j2 = P1.nodes.get(a1), P2.nodes.get(a2)
                if j2 is None or P1.kind(a1) != P2.kind(a2):
                    ok = False
                    break
                if set(j1.context) != set(j2.context):
                    ok = False
                    break
                front = [("type", (a1, "T"), (), j1.type, (a2, "T"), (), j2.type)]
                for x in j1.context:
                    front.append(("seq", (a1, ("C", x)), (), j1.context.get(x),
                                  (a2, ("C", x)), (), j2.context.get(x)))
                tasks.extendleft(reversed(front))
                k1, k2 = P1.children(a1), P2.children(a2)
                if len(k1) != len(k2):
                    ok = False
                    break
                if 0 in k1:
                    tasks.append(("node", a1 + (0,), a2 + (0,)))
                if 1 in k1:
                    tasks.append(("node", a1 + (1,), a2 + (1,)))
                    if len(k1) > 1:
                        tasks.append(("args", a1, a2))
            elif kind == "args":
                _, a1, a2 = task
                for k in P1.children(a1):
                    if k < 2:
                        continue
                    c2 = cmap.get(S1.cls((a1 + (1,), "T", ()), k))
                    if c2 is None or S2.cls((a2 + (1,), "T", ()), c2[1]) != c2:
                        ok = False
                        break
                    tasks.append(("node", a1 + (k,), a2 + (c2[1],)))
                if not ok:
                    break
            elif kind == "type":
                _, s1, c1, t1, s2, c2, t2 = task
                u1, u2 = unroll(t1), unroll(t2)
                if label_of(u1) != label_of(u2):
                    ok = False
                    break
                if isinstance(u1, Arrow):
                    tasks.appendleft(("type", s1, c1 + (1,), u1.head, s2, c2 + (1,), u2.head))
                    tasks.appendleft(("seq", s1, c1, u1.tail, s2, c2, u2.tail))
            else:
                _, s1, c1, f1, s2, c2, f2 = task
                site1, site2 = s1 + (c1,), s2 + (c2,)
                options = _seq_bijections(S1, S2, site1, site2, f1, f2, cmap, inv)
                if not options:
                    ok = False
                    break
                for pairing in options[1:]:
                    stack.append(_extend(tasks, cmap, inv, S1, S2, s1, c1, f1, s2, c2, f2, pairing))
                tasks, cmap, inv = _extend(tasks, cmap, inv, S1, S2, s1, c1, f1, s2, c2, f2,
                                           options[0], copy=False)
        if ok:
            iso = Isomorphism(P1, P2, dict(cmap))
            if iso.apply() == P2:
                return iso
    return None


def _seq_bijections(S1, S2, site1, site2, f1, f2, cmap, inv):
    k1, k2 = f1.explicit_keys(), f2.explicit_keys()
    if len(k1) != len(k2):
        return []
    cand = {}
    for a in k1:
        cl1 = S1.cls(site1, a)
        opts = []
        for b in k2:
            cl2 = S2.cls(site2, b)
            if cmap.get(cl1, cl2) != cl2 or inv.get(cl2, cl1) != cl1:
                continue
            if shape_key(f1.get(a)) != shape_key(f2.get(b)):
                continue
            opts.append(b)
        if not opts:
            return []
        cand[a] = opts
    out = []

    def go(i, used, acc):
        if len(out) > 5000:
            return
        if i == len(k1):
            out.append(list(acc))
            return
        a = k1[i]
        for b in cand[a]:
            if b not in used:
                acc.append((a, b))
                used.add(b)
                go(i + 1, used, acc)
                used.discard(b)
                acc.pop()

    go(0, set(), [])
    return out


def _extend(tasks, cmap, inv, S1, S2, s1, c1, f1, s2, c2, f2, pairing, copy=True):
    if copy:
        tasks, cmap, inv = deque(tasks), dict(cmap), dict(inv)
    site1, site2 = s1 + (c1,), s2 + (c2,)
    front = []
    for a, b in pairing:
        cl1, cl2 = S1.cls(site1, a), S2.cls(site2, b)
        cmap[cl1] = cl2
        inv[cl2] = cl1
        front.append(("type", s1, c1 + (a,), f1.get(a), s2, c2 + (b,), f2.get(b)))
    tasks.extendleft(reversed(front))
    return tasks, cmap, inv


def derivations_isomorphic(P1, P2) -> bool:
    return iso_check(P1, P2) is not None


# -- serialization -------------------------------------------------------------

def seq_to_json(s):
    items = [[k, format_type(t)] for k, t in s.entries]
    if s.tail is None:
        return items
    m, t = s.tail
    if not items and m == 2:
        return {"omega": format_type(t)}
    return {"entries": items, "omega": format_type(t), "from": m}


def seq_from_json(doc, pointer="") -> Seq:
    from .rigid_types import TypeError_
    try:
        if isinstance(doc, list):
            return Seq([(int(k), parse_type(t)) for k, t in doc])
        if isinstance(doc, dict) and "omega" in doc:
            items = [(int(k), parse_type(t)) for k, t in doc.get("entries", [])]
            return Seq(items, (int(doc.get("from", 2)), parse_type(doc["omega"])))
    except (TypeError_, ValueError, TypeError) as e:
        raise SchemaError(pointer, str(e)) from None
    raise SchemaError(pointer, "expected a list of [track, type] pairs or an omega object")


class SchemaError(DerivationError):
    def __init__(self, pointer, msg):
        self.pointer = pointer or "/"
        super().__init__(f"{self.pointer}: {msg}")


def to_json(P, **extra):
    nodes = {}
    for a, j in P.nodes.items():
        doc = {"context": {x: seq_to_json(s) for x, s in j.context.items()},
               "type": format_type(j.type)}
        if j.axtrack is not None:
            doc["axtrack"] = j.axtrack
        nodes[format_position(a)] = doc
    out = {"term": format_term(P.term), "nodes": nodes}
    if P.open:
        out["open"] = sorted((format_position(a) for a in P.open))
    out.update(extra)
    return out


def from_json(doc):
    from .rigid_types import TypeError_
    if not isinstance(doc, dict):
        raise SchemaError("", "expected an object")
    for key in ("term", "nodes"):
        if key not in doc:
            raise SchemaError(f"/{key}", "missing")
    if not isinstance(doc["term"], str):
        raise SchemaError("/term", "expected a string")
    try:
        term = parse_term(doc["term"])
    except TermError as e:
        raise SchemaError("/term", str(e)) from None
    nodes = {}
    if not isinstance(doc["nodes"], dict):
        raise SchemaError("/nodes", "expected an object")
    for key, nd in doc["nodes"].items():
        ptr = f"/nodes/{key}"
        try:
            a = parse_position(key)
        except TermError as e:
            raise SchemaError(ptr, str(e)) from None
        if not isinstance(nd, dict) or "type" not in nd:
            raise SchemaError(ptr + "/type", "missing")
        if not isinstance(nd["type"], str):
            raise SchemaError(ptr + "/type", "expected a string")
        try:
            t = parse_type(nd["type"])
        except TypeError_ as e:
            raise SchemaError(ptr + "/type", str(e)) from None
        if not isinstance(nd.get("context", {}), dict):
            raise SchemaError(ptr + "/context", "expected an object")
        ctx = {x: seq_from_json(s, f"{ptr}/context/{x}") for x, s in nd.get("context", {}).items()}
        ax = nd.get("axtrack")
        if ax is not None and (not isinstance(ax, int) or isinstance(ax, bool) or ax < 2):
            raise SchemaError(ptr + "/axtrack", "expected a track >= 2")
        try:
            nodes[a] = Judgment(Context(ctx), t, ax)
        except TypeError_ as e:
            raise SchemaError(ptr, str(e)) from None
    opened = set()
    for i, p in enumerate(doc.get("open", [])):
        try:
            opened.add(parse_position(p))
        except (TermError, AttributeError):
            raise SchemaError(f"/open/{i}", "expected a position") from None
    return Derivation(term, nodes, opened)


def dumps(P, **extra):
    return json.dumps(to_json(P, **extra), indent=2, ensure_ascii=False)


def loads(text):
    return from_json(json.loads(text))


def to_dot(P, name="derivation"):
    lines = [f"digraph {name} {{", "  node [shape=box, fontname=monospace];"]
    ids = {a: f"n{i}" for i, a in enumerate(P.nodes)}
    for a, j in P.nodes.items():
        lab = f"{format_position(a)}\\n{_dot_escape(str(j))}"
        shape = ", shape=doublecircle" if j.axtrack is not None else ""
        lines.append(f'  {ids[a]} [label="{lab}"{shape}];')
    for a in P.nodes:
        if a:
            lines.append(f'  {ids[a[:-1]]} -> {ids[a]} [label="{a[-1]}"];')
    lines.append("}")
    return "\n".join(lines)


def _dot_escape(s):
    return s.replace("\\", "\\\\").replace('"', '\\"')


def format_derivation(P) -> str:
    lines = [f"subject: {format_term(P.term)}"]
    for a, j in P.nodes.items():
        mark = f"  [ax {j.axtrack}]" if j.axtrack is not None else ""
        cut = "  [open]" if a in P.open else ""
        lines.append(f"{format_position(a):>12}  {j}{mark}{cut}")
    return "\n".join(lines)
