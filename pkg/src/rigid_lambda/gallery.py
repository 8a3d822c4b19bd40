"""Worked examples: derivations of f^ω and of the fixpoint combinator Y = Δ_fΔ_f
with Δ_f = λx.f(xx), built explicitly with chosen tracks.

Conventions: ``phi`` is (2:a)->a, the type of f consuming one α; ``gamma``
is the regular type rec g.(w:g)->a given to Δ_f.
"""
from __future__ import annotations

from .derivation import Derivation, Judgment, RegularDerivation, check_valid, is_quantitative, quantitative_report, view
from .dynamics import scrs_limit, scrs_reduce, subject_expand, subject_substitute
from .lambda_core import App, Var, parse_term, reduce_at
from .multiset_bridge import (MultisetForest, collapse_context, collapse_type, is_quantitative_m,
                              m_equiv)
from .rigid_types import Arrow, Context, Seq, TVar, parse_type

ALPHA = TVar("a")
PHI = parse_type("(2:a)->a")
STARVED = parse_type("()->a")
GAMMA = parse_type("rec g.(w:g)->a")

FOMEGA = parse_term("rec X. f X")
DELTA_F = r"\x. f (x x)"
Y = parse_term(f"({DELTA_F}) ({DELTA_F})")


def f_iter(k, t=Y):
    """f(f(...f(t))) with k applications."""
    for _ in range(k):
        t = App(Var("f"), t)
    return t


def y_terms(k):
    """Y, f(Y), ..., reducing the redex at 2^m at step m."""
    out = [Y]
    for m in range(k):
        out.append(reduce_at(out[-1], (2,) * m))
    return out


# -- f^ω ----------------------------------------------------------------------

def fomega_prime(n):
    """Finite derivation of f^ω with n axioms for f, the last one starved.

    The f at 2^i·1 carries track i+2, so each level adds one track and the
    root context collapses to f:[[a]->a] (n-1 times) + [[]->a]."""
    if n < 1:
        raise ValueError("n must be >= 1")
    nodes = {}
    for i in range(n):
        a = (2,) * i
        ctx = Seq({m + 2: (PHI if m < n - 1 else STARVED) for m in range(i, n)})
        nodes[a] = Judgment(Context({"f": ctx}), ALPHA)
        t = PHI if i < n - 1 else STARVED
        nodes[a + (1,)] = Judgment(Context({"f": Seq({i + 2: t})}), t, i + 2)
    return Derivation(FOMEGA, nodes)


def gamma_n(n):
    """Collapsed root context expected for the n-th derivation of Y."""
    items = [(collapse_type(PHI), n - 1)] if n > 1 else []
    items.append((collapse_type(STARVED), 1))
    return {"f": MultisetForest(items)}


def y_pipeline(n, k=None, coder=None):
    """Type f^k(Y) with the f^ω derivation (k >= n) and expand back to Y."""
    k = n if k is None else k
    if k < n:
        raise ValueError("k must be at least n")
    P = fomega_prime(n)
    terms = y_terms(k)
    R = subject_substitute(P, terms[k])
    for m in range(k - 1, -1, -1):
        R = subject_expand(R, terms[m], (2,) * m, coder)
    return P, R


def fomega_lazy(padding=None):
    """The infinite derivation of f^ω with f at 2^n·1 on track n+2.

    ``padding`` = (x, type) adds x:(2:type) to every spine context: a type
    fed through the infinite branch without any axiom for it."""
    def judge(a):
        n = len(a) - (1 if a and a[-1] == 1 else 0)
        if any(k != 2 for k in a[:n]) or (len(a) > n and a[-1] != 1):
            return None
        if len(a) > n:
            return Judgment(Context({"f": Seq({n + 2: PHI})}), PHI, n + 2)
        ctx = {"f": Seq((), (n + 2, PHI))}
        if padding:
            ctx[padding[0]] = Seq({2: padding[1]})
        return Judgment(Context(ctx), ALPHA)

    def tracks(a):
        return ([], None) if a and a[-1] == 1 else ([1, 2], None)

    def key(a):
        return "ax" if a and a[-1] == 1 else "spine"

    return RegularDerivation(FOMEGA, judge, tracks, node_key=key,
                             name="padded f^w" if padding else "f^w")


# -- Δ_fΔ_f -------------------------------------------------------------------

def delta_derivation(skip=False):
    """Derivation of Δ_fΔ_f whose premise on track j >= 2 uses f on track j+1.

    Inside each copy of Δ_f the head x carries track 2 and the argument on
    track j the track j+1. With ``skip`` the head takes track 3 and track 2
    stays on the first argument, so the copy of Δ_f on track 3 is never
    moved to head position by reduction."""
    X = Seq.omega(GAMMA)

    def x_track(j):
        if j == 1:
            return 3 if skip else 2
        return 2 if (skip and j == 2) else j + 1

    def inner(k, rest):
        fk = Seq({k: PHI})
        if rest == ():
            return Judgment(Context({"f": fk}), Arrow(X, ALPHA))
        if rest == (0,):
            return Judgment(Context({"f": fk, "x": X}), ALPHA)
        if rest == (0, 1):
            return Judgment(Context({"f": fk}), PHI, k)
        if rest == (0, 2):
            return Judgment(Context({"x": X}), ALPHA)
        if len(rest) == 3 and rest[:2] == (0, 2):
            h = x_track(rest[2])
            return Judgment(Context({"x": Seq({h: GAMMA})}), GAMMA, h)
        return None

    def judge(a):
        if a == ():
            return Judgment(Context({"f": Seq.omega(PHI)}), ALPHA)
        return inner(2 if a[0] == 1 else a[0] + 1, a[1:])

    def tracks(a):
        if a == ():
            return [1], 2
        rest = a[1:]
        if rest == ():
            return [0], None
        if rest == (0,):
            return [1, 2], None
        if rest == (0, 2):
            return [1], 2
        return [], None

    return RegularDerivation(Y, judge, tracks, name="P~" if skip else "P")


def y_limit(P):
    """Limit of reducing Y -> f(Y) -> f(f(Y)) -> ... inside P."""
    return scrs_limit(P, lambda m: (2,) * m, lambda d: d + 1, FOMEGA)


def y_limits_scenario(horizon=6):
    """Reduce both derivations of Y towards f^ω and compare the limits."""
    P, Pt = delta_derivation(), delta_derivation(skip=True)
    out = {"P": P, "P~": Pt, "m_equiv": m_equiv(P, Pt), "horizon": horizon}
    for name, D in (("P", P), ("P~", Pt)):
        lim = y_limit(D)
        out[name + "'"] = lim
        out[name + "' view"] = scrs_reduce(D, lim.prefix(horizon), horizon)
        out[name + "' report"] = quantitative_report(lim, horizon)
    return out


__all__ = [
    "ALPHA", "PHI", "STARVED", "GAMMA", "FOMEGA", "Y", "f_iter", "y_terms",
    "fomega_prime", "gamma_n", "y_pipeline", "fomega_lazy", "delta_derivation",
    "y_limit", "y_limits_scenario",
]
