"""The approximation order on derivations of a fixed term.

A derivation approximates another when its bisupport is included in the
other's with the same labels. Finite derivations of one term form a lattice
under this order (meet and join are intersection and union of labelled
bisupports). Infinite derivations are handled through chains of finite
approximations or through a demand-driven closure computed on a lazy object.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field

from .derivation import (Derivation, DerivationError, Left, Right, bp_key,
                         build_nodes, check_valid, expand_tracks, format_bp, from_json,
                         labelled_bisupport, node_kind, to_json)
from .lambda_core import alpha_equal, format_position
from .rigid_types import Arrow, label_of, seq_at, seq_approx_leq, type_approx_leq, type_at


class ApproximationError(DerivationError):
    pass


class NotDirected(ApproximationError):
    pass


class NoUpperBound(ApproximationError):
    pass


class UpUndefinedAtAxiom(ApproximationError):
    pass


class UnreachableBiposition(ApproximationError):
    def __init__(self, bp, path, reason):
        self.bp = bp
        self.path = path
        super().__init__(f"{format_bp(bp)} is unreachable: {reason}")


class ProbeOutsideBisupport(ApproximationError):
    def __init__(self, bp):
        self.bp = bp
        super().__init__(f"{format_bp(bp)} is not in the bisupport")


# lazy derivations may have infinitely many premises; owners of a context
# track are searched among this many tail premises
TAIL_SEARCH = 64


def _same_term(t1, t2):
    return t1 is t2 or t1 == t2 or alpha_equal(t1, t2)


def bp_label(D, p):
    """Label of D at biposition p, or None when p is outside the bisupport."""
    j = D.judgment(tuple(p.pos))
    if j is None:
        return None
    if isinstance(p, Right):
        t = type_at(j.type, p.inner)
    else:
        t = seq_at(j.context.get(p.var), p.inner)
    return None if t is None else label_of(t)


def in_bisupport(D, p):
    return bp_label(D, p) is not None


# -- order ---------------------------------------------------------------------

def approx_leq(P1, D2) -> bool:
    """P1 <= D2. D2 may be a finite derivation, a view or a lazy derivation."""
    if not _same_term(P1.term, D2.term):
        return False
    for a, j1 in P1.nodes.items():
        j2 = D2.judgment(a)
        if j2 is None or j1.axtrack != j2.axtrack:
            return False
        if not type_approx_leq(j1.type, j2.type):
            return False
        for x, s in j1.context.items():
            if not seq_approx_leq(s, j2.context.get(x)):
                return False
    return True


def _labels(P):
    if P.open:
        raise ApproximationError("lattice operations need complete finite derivations")
    return labelled_bisupport(P)


def _assemble(term, labels, axtracks):
    nodes = build_nodes(labels, lambda a: axtracks.get(a))
    return Derivation(term, nodes)


def _union(P1, P2):
    l1, l2 = _labels(P1), _labels(P2)
    for p in l1.keys() & l2.keys():
        if l1[p] != l2[p]:
            return None, f"labels differ at {format_bp(p)}"
    labels = {**l1, **l2}
    ax = {a: j.axtrack for P in (P1, P2) for a, j in P.nodes.items() if j.axtrack is not None}
    J = _assemble(P1.term, labels, ax)
    v = check_valid(J)
    if not v:
        return None, str(v)
    return J, None


def _check_family(family):
    family = list(family)
    if not family:
        raise ApproximationError("empty family")
    t = family[0].term
    for P in family[1:]:
        if not _same_term(t, P.term):
            raise ApproximationError("derivations of different terms")
    return family


def deriv_meet(family) -> Derivation:
    """Greatest lower bound of a family that is pairwise bounded above."""
    family = _check_family(family)
    for i, P in enumerate(family):
        for Q in family[i + 1:]:
            _, why = _union(P, Q)
            if why is not None:
                raise NoUpperBound(f"no common upper bound: {why}")
    labels = _labels(family[0])
    for P in family[1:]:
        other = _labels(P)
        labels = {p: lab for p, lab in labels.items() if p in other}
    ax = {a: j.axtrack for a, j in family[0].nodes.items()}
    J = _assemble(family[0].term, labels, ax)
    v = check_valid(J)
    if not v:
        raise NoUpperBound(f"the intersection is not a derivation: {v}")
    return J


def deriv_join(family) -> Derivation:
    """Least upper bound of a directed family."""
    family = _check_family(family)
    J = family[0]
    for P in family[1:]:
        J2, why = _union(J, P)
        if why is not None:
            raise NotDirected(f"no join: {why}")
        J = J2
    return J


# -- equinecessity -------------------------------------------------------------

def _kind(D, a):
    return node_kind(D.term, a)


def _children(D, a):
    if isinstance(D, Derivation):
        return D.children(a)
    return list(expand_tracks(D.child_tracks(a), TAIL_SEARCH))


def _owner(D, a, x, k):
    for i in _children(D, a):
        j = D.judgment(a + (i,))
        if j is not None and j.context.get(x).get(k) is not None:
            return i
    return None


def up(P, p):
    """A biposition one step up the derivation that is kept exactly when p is."""
    a = tuple(p.pos)
    if not in_bisupport(P, p):
        raise ProbeOutsideBisupport(p)
    kind, x = _kind(P, a)
    if kind == "var":
        raise UpUndefinedAtAxiom(f"{format_bp(p)} is on an axiom leaf")
    if isinstance(p, Left):
        if kind == "lam":
            return Left(a + (0,), p.var, p.inner)
        i = _owner(P, a, p.var, p.inner[0])
        if i is None:
            raise ApproximationError(f"no premise holds {format_bp(p)}")
        return Left(a + (i,), p.var, p.inner)
    c = p.inner
    if kind == "lam":
        if not c:
            return Right(a + (0,), ())
        if c[0] == 1:
            return Right(a + (0,), c[1:])
        return Left(a + (0,), x, c)
    return Right(a + (1,), (1,) + c)


def top(P, p, limit=100000):
    """Follow ``up`` to an axiom leaf; the result is a right biposition."""
    for _ in range(limit):
        a = tuple(p.pos)
        if _kind(P, a)[0] == "var":
            if isinstance(p, Left):
                return Right(a, p.inner[1:])
            return p
        p = up(P, p)
    raise ApproximationError("top did not reach an axiom leaf (non-quantitative derivation?)")


# -- closure, reach, minimal approximations -------------------------------------

def requirements(D, p):
    """Bipositions that every approximation containing p must contain."""
    a, c = tuple(p.pos), p.inner
    out = []
    if isinstance(p, Right):
        if c:
            out.append(Right(a, c[:-1]))
        else:
            if a:
                out.append(Right(a[:-1], ()))
        if isinstance(type_at(D.judgment(a).type, c), Arrow):
            out.append(Right(a, c + (1,)))
    else:
        if len(c) > 1:
            out.append(Left(a, p.var, c[:-1]))
        if isinstance(seq_at(D.judgment(a).context.get(p.var), c), Arrow):
            out.append(Left(a, p.var, c + (1,)))
        out.append(Right(a, ()))
    out.extend(_partners(D, p))
    return out


def _partners(D, p):
    """Bipositions linked to p by the typing rules (kept together)."""
    a, c = tuple(p.pos), p.inner
    kind, x = _kind(D, a)
    out = []
    parent = None
    if a:
        parent = (a[:-1], a[-1], _kind(D, a[:-1]))
    if isinstance(p, Right):
        if kind == "var":
            out.append(Left(a, x, (D.judgment(a).axtrack,) + c))
        elif kind == "lam" and c:
            out.append(Right(a + (0,), c[1:]) if c[0] == 1 else Left(a + (0,), x, c))
        elif kind == "app":
            out.append(Right(a + (1,), (1,) + c))
        if parent is not None:
            b, i, (pk, y) = parent
            if pk == "lam":
                out.append(Right(b, (1,) + c))
            elif pk == "app":
                if i == 1 and c:
                    out.append(Right(b, c[1:]) if c[0] == 1 else Right(b + (c[0],), c[1:]))
                elif i >= 2:
                    out.append(Right(b + (1,), (i,) + c))
    else:
        if kind == "var":
            out.append(Right(a, c[1:]))
        elif kind == "lam":
            out.append(Left(a + (0,), p.var, c))
        elif kind == "app":
            i = _owner(D, a, p.var, c[0])
            if i is not None:
                out.append(Left(a + (i,), p.var, c))
        if parent is not None:
            b, i, (pk, y) = parent
            if pk == "lam" and y == p.var:
                out.append(Right(b, c))
            elif pk in ("lam", "app"):
                out.append(Left(b, p.var, c))
    return out


@dataclass
class Closure:
    members: set
    ok: bool
    offender: object = None
    path: list = field(default_factory=list)
    reason: str = ""


def closure(D, B, cutoff=20000) -> Closure:
    """Least set containing B and the root that is closed under requirements.

    Stops with ok=False when a required biposition is missing from D or when
    more than ``cutoff`` bipositions are needed."""
    root = Right((), ())
    seen = {}
    queue = deque()
    for p in [root, *B]:
        if p not in seen:
            seen[p] = None
            queue.append(p)
    while queue:
        p = queue.popleft()
        if not in_bisupport(D, p):
            return Closure(set(seen), False, p, _path(seen, p), "required biposition is missing")
        for q in requirements(D, p):
            if q not in seen:
                seen[q] = p
                if len(seen) > cutoff:
                    return Closure(set(seen), False, q, _path(seen, q),
                                   f"closure exceeds {cutoff} bipositions (divergent)")
                queue.append(q)
    return Closure(set(seen), True)


def _path(parents, p):
    out = [p]
    while parents.get(out[-1]) is not None:
        out.append(parents[out[-1]])
    return out[::-1]


def reach(D, probe=None, cutoff=20000) -> set:
    """Bipositions (among ``probe``, default the whole bisupport of a finite
    derivation) that lie in some finite approximation of D."""
    if probe is None:
        if not isinstance(D, Derivation) or D.open:
            raise ApproximationError("a probe is needed for an infinite derivation")
        cl = closure(D, labelled_bisupport(D), cutoff=max(cutoff, 4 * nr_bisupport(D)))
        return cl.members if cl.ok else set()
    return {p for p in probe if closure(D, [p], cutoff).ok}


def nr_bisupport(P):
    return len(labelled_bisupport(P))


def minimal_approx(D, B, cutoff=20000) -> Derivation:
    """The least finite approximation of D whose bisupport contains B."""
    B = list(B)
    if not B:
        raise UnreachableBiposition(Right((), ()), [], "empty set: pass the root biposition explicitly")
    for p in B:
        if not in_bisupport(D, p):
            raise ProbeOutsideBisupport(p)
    cl = closure(D, B, cutoff)
    if not cl.ok:
        raise UnreachableBiposition(cl.path[0] if cl.path else cl.offender, cl.path, cl.reason)
    labels = {p: bp_label(D, p) for p in cl.members}
    ax = {p.pos: D.judgment(p.pos).axtrack for p in cl.members}
    return _assemble(D.term, labels, ax)


# -- chains and approximability -------------------------------------------------

@dataclass
class ApproximationChain:
    """Ascending finite approximations of one term, with an optional limit."""
    elements: list
    limit: object = None

    def __post_init__(self):
        self.elements = list(self.elements)
        if not self.elements:
            raise ApproximationError("empty chain")
        t = self.elements[0].term
        for i, (P, Q) in enumerate(zip(self.elements, self.elements[1:])):
            if not _same_term(t, Q.term):
                raise NotDirected(f"element {i + 1} types another term")
            if not approx_leq(P, Q):
                raise NotDirected(f"element {i} is not below element {i + 1}")
        if self.limit is not None and not approx_leq(self.elements[-1], self.limit):
            raise NotDirected("the last element is not below the declared limit")

    def __len__(self):
        return len(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def join(self):
        return self.elements[-1]

    def covering(self, probe):
        """Index of the first element containing every probe biposition."""
        probe = list(probe)
        for i, P in enumerate(self.elements):
            if all(in_bisupport(P, p) for p in probe):
                return i
        return None

    def to_json(self):
        return [{"index": i, "derivation": to_json(P)} for i, P in enumerate(self.elements)]

    @classmethod
    def from_json(cls, doc):
        if isinstance(doc, str):
            doc = json.loads(doc)
        items = sorted(doc, key=lambda d: d["index"])
        return cls([from_json(d["derivation"]) for d in items])


@dataclass
class ApproxVerdict:
    ok: bool
    witness: object = None
    reason: str = ""

    def __bool__(self):
        return self.ok

    def __str__(self):
        return "approximable" if self.ok else f"not certified: {self.reason}"


def is_approximable(obj, probe, cutoff=20000) -> ApproxVerdict:
    """Is the finite probe contained in a finite approximation of ``obj``?

    ``obj`` is a finite derivation, an ApproximationChain, an object with a
    ``cover(probe)`` method (truncation families), or a lazy derivation, which
    is handled with the requirement closure."""
    probe = sorted(set(probe), key=bp_key)
    if isinstance(obj, ApproximationChain):
        i = obj.covering(probe)
        if i is not None:
            return ApproxVerdict(True, obj[i])
        ambient = obj.limit
        for p in probe:
            if ambient is not None:
                if not in_bisupport(ambient, p):
                    raise ProbeOutsideBisupport(p)
            elif not any(in_bisupport(P, p) for P in obj.elements):
                raise ProbeOutsideBisupport(p)
        return ApproxVerdict(False, None, "no chain element contains the probe")
    if hasattr(obj, "cover"):
        # truncation families check membership themselves
        found = obj.cover(probe)
        if found is None:
            return ApproxVerdict(False, None, "no truncation level covers the probe")
        return ApproxVerdict(True, found)
    for p in probe:
        if not in_bisupport(obj, p):
            raise ProbeOutsideBisupport(p)
    if isinstance(obj, Derivation) and not obj.open:
        return ApproxVerdict(True, obj)
    cl = closure(obj, probe, cutoff)
    if not cl.ok:
        where = format_position(cl.offender.pos) if cl.offender is not None else "?"
        return ApproxVerdict(False, None, f"{cl.reason} (last requirement at {where})")
    labels = {p: bp_label(obj, p) for p in cl.members}
    ax = {p.pos: obj.judgment(p.pos).axtrack for p in cl.members}
    W = _assemble(obj.term, labels, ax)
    v = check_valid(W)
    if not v:
        return ApproxVerdict(False, None, f"closure is not a derivation: {v}")
    return ApproxVerdict(True, W)


def root_reachable(D, cutoff=20000) -> bool:
    return closure(D, [Right((), ())], cutoff).ok


__all__ = [
    "ApproximationError", "NotDirected", "NoUpperBound", "UpUndefinedAtAxiom",
    "UnreachableBiposition", "ProbeOutsideBisupport", "approx_leq", "deriv_meet",
    "deriv_join", "up", "top", "requirements", "closure", "reach", "minimal_approx",
    "ApproximationChain", "ApproxVerdict", "is_approximable", "root_reachable",
    "bp_label", "in_bisupport",
]
