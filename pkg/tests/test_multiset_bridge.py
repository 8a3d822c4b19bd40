import random

from hypothesis import given, settings, strategies as st

import gen
from rigid_lambda.derivation import axiom, is_quantitative, iso_check, random_relabel
from rigid_lambda.gallery import delta_derivation, fomega_lazy, fomega_prime
from rigid_lambda.multiset_bridge import (OMEGA, MultisetForest, collapse_context, collapse_type,
                                          format_mcontext, is_quantitative_m, is_unforgetful_m,
                                          m_equiv)
from rigid_lambda.rigid_types import Arrow, Seq, TVar, parse_type

A = TVar("a")


def test_collapse_forgets_tracks():
    assert collapse_type(parse_type("(2:a,3:b)->a")) == collapse_type(parse_type("(2:b,5:a)->a"))
    assert str(collapse_type(parse_type("(2:a,3:b)->a"))) in ("[a, b] -> a", "[b, a] -> a")
    assert collapse_type(A) == collapse_type(TVar("a"))


def test_fixpoint_type():
    g = collapse_type(parse_type("rec g.(w:g)->a"))
    assert g == collapse_type(Arrow(Seq.omega(parse_type("rec g.(w:g)->a")), A))
    assert "w" in str(g)


def test_multiplicities():
    ctx = fomega_prime(3).root.context
    assert format_mcontext(collapse_context(ctx)) == "f:[[a] -> a, [a] -> a, [] -> a]"
    f = collapse_context(ctx)["f"]
    assert isinstance(f, MultisetForest) and f.size() == 3


def test_m_equiv():
    assert m_equiv(delta_derivation(), delta_derivation(skip=True))
    assert not m_equiv(fomega_prime(2), fomega_prime(3))


def test_quantitative_m():
    assert is_quantitative_m(fomega_lazy(), 6)
    assert not is_quantitative_m(fomega_lazy(padding=("x", A)), 6)
    assert is_quantitative_m(axiom("x", 2, A))
    assert is_quantitative_m(fomega_prime(4))


def test_unforgetful_m():
    ctx = collapse_context(fomega_prime(3).root.context)
    assert not is_unforgetful_m(ctx, collapse_type(A))
    ctx = collapse_context(fomega_lazy().judgment(()).context)
    assert is_unforgetful_m(ctx, collapse_type(A))


def test_omega_marker_sorts_last():
    assert OMEGA > 10 ** 6


seeds = st.integers(0, 10_000)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_collapse_is_invariant_under_relabelling(seed):
    P = gen.random_case(seed, full_types=True).P
    Q = random_relabel(P, random.Random(seed))
    moved = iso_check(P, Q).support_map()
    for a, b in moved.items():
        assert collapse_type(P.nodes[a].type) == collapse_type(Q.nodes[b].type)
        assert collapse_context(P.nodes[a].context) == collapse_context(Q.nodes[b].context)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_rigid_quantitative_implies_m_quantitative(seed):
    P = gen.random_case(seed).P
    assert is_quantitative(P)
    assert is_quantitative_m(P)
