"""Random finite typed terms for the test suite.

A case is a normal form with its full-support derivation, then a few random
expansions: each one replaces a subterm u by a redex reducing to u."""
import random

from rigid_lambda.derivation import DerivationError
from rigid_lambda.dynamics import subject_expand
from rigid_lambda.lambda_core import (App, Lam, Var, free_vars, fresh_name, iter_positions,
                                      reduce_at, replace_at, subterm_at, alpha_equal)
from rigid_lambda.normal_form import classify_position, full_nf_derivation, full_support, trivial_construct
from rigid_lambda.rigid_types import parse_type

NAMES = ("x", "y", "z", "f")
FULL_TYPES = [parse_type(s) for s in ("a", "()->a", "(2:a)->a", "(3:b)->a", "(2:a,4:b)->b")]


def random_nf(rng, depth=4, bound=()):
    """A normal form of depth <= depth over x, y, z, f."""
    binders = []
    if depth > 1 and rng.random() < 0.5:
        binders = [rng.choice(NAMES[:3]) for _ in range(rng.randint(1, 2))]
    scope = list(bound) + binders
    pool = scope if scope and rng.random() < 0.7 else list(NAMES)
    t = Var(rng.choice(pool))
    if depth > 1:
        for _ in range(rng.randint(0, 2)):
            t = App(t, random_nf(rng, depth - 1, scope))
    for b in reversed(binders):
        t = Lam(b, t)
    return t


def _bound_between(t, q):
    """Variables bound on the path from the root of t down to q."""
    out = set()
    u = t
    for k in q:
        if isinstance(u, Lam):
            out.add(u.var)
        u = u.body if k == 0 else (u.fun if k == 1 else u.arg)
    return out


def _abstract(rng, u, avoid):
    """(x, body, v) with body[x := v] == u, abstracting some occurrences of v."""
    positions = list(iter_positions(u))
    target = rng.choice(positions)
    v = subterm_at(u, target)
    fv = free_vars(v)
    occ = sorted((p for p in positions if subterm_at(u, p) == v
                  and not (fv & _bound_between(u, p))), key=len)
    chosen = []
    for p in occ:
        if any(p[:len(c)] == c for c in chosen):
            continue  # nested inside an occurrence already abstracted
        if rng.random() < 0.7 or not chosen:
            chosen.append(p)
    x = fresh_name("v", avoid)
    body = u
    for p in chosen:
        body = replace_at(body, p, Var(x))
    return x, body, v


def random_expansion(rng, t2):
    """(t, b) with t reducing at b to t2."""
    b = rng.choice(list(iter_positions(t2)))
    u = subterm_at(t2, b)
    avoid = _names(t2) | set(NAMES)
    kind = rng.choice(("id", "erase", "abs", "abs"))
    if kind == "id":
        x = fresh_name("v", avoid)
        redex = App(Lam(x, Var(x)), u)
    elif kind == "erase":
        x = fresh_name("v", avoid)
        redex = App(Lam(x, u), random_nf(rng, 2))
    else:
        x, body, v = _abstract(rng, u, avoid)
        redex = App(Lam(x, body), v)
    t = replace_at(t2, b, redex)
    assert alpha_equal(reduce_at(t, b), t2), (t, b, t2)
    return t, b


def _names(t):
    out = set()
    stack = [t]
    while stack:
        u = stack.pop()
        if isinstance(u, Var):
            out.add(u.name)
        elif isinstance(u, Lam):
            out.add(u.var)
            stack.append(u.body)
        elif isinstance(u, App):
            stack.extend((u.fun, u.arg))
    return out


class Case:
    def __init__(self, seed, nf, steps):
        self.seed = seed
        self.nf = nf            # derivation of the normal form
        self.steps = steps      # [(derivation, redex position)], last one closest to the NF

    @property
    def P(self):
        return self.steps[-1][0] if self.steps else self.nf


def nf_derivation(rng, t, coder=None, full_types=False):
    """Full-support derivation of t; random types at full positions if asked."""
    if not full_types:
        return full_nf_derivation(t, coder=coder)
    A = set(full_support(t))
    table = {a: rng.choice(FULL_TYPES) for a in sorted(A) if classify_position(t, a).kind == "full"}
    return trivial_construct(t, A, table, coder)


def random_case(seed, depth=4, expansions=None, coder=None, full_types=False):
    """A normal form derivation and up to 5 expansions of it.

    steps[i] = (P_i, b_i) where subject_reduce(P_i, b_i) gives P_{i-1}
    (P_{-1} being the NF derivation)."""
    rng = random.Random(seed)
    t = random_nf(rng, depth)
    P = nf = nf_derivation(rng, t, coder, full_types)
    n = rng.randint(0, 5) if expansions is None else expansions
    steps = []
    for _ in range(n):
        t2, b = random_expansion(rng, P.term)
        P = subject_expand(P, t2, b, coder)
        steps.append((P, b))
    return Case(seed, nf, steps)


def random_nf_derivation(seed, depth=4, full_types=False):
    rng = random.Random(seed)
    return nf_derivation(rng, random_nf(rng, depth), full_types=full_types)
