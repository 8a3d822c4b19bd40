import random

import pytest
from hypothesis import given, settings, strategies as st

import gen
from rigid_lambda.approximation import approx_leq
from rigid_lambda.derivation import (Derivation, DerivationError, Judgment, Left, Right, axiom,
                                     bisupport, check_valid, is_quantitative, subderivation)
from rigid_lambda.dynamics import CANONICAL
from rigid_lambda.lambda_core import parse_term
from rigid_lambda.multiset_bridge import format_mjudgment
from rigid_lambda.normal_form import (ForgetfulDerivation, NotANormalForm, RegularNF,
                                      classify_position, construction_of, cut_type, degree,
                                      extract, full_nf_derivation, full_support,
                                      hereditary_unforgetful_subderivations, is_dsupport,
                                      position_measure, s_measure, trivial_construct, truncate_nf,
                                      unforgetful_nf_derivation)
from rigid_lambda.rigid_types import (Arrow, Context, Seq, TVar, is_unforgetful, parse_type,
                                      types_equal)

A, B = TVar("a"), TVar("b")
XY = parse_term("x y")


class TestClassify:
    def test_examples(self):
        c = classify_position(parse_term(r"\x. x"), ())
        assert (c.kind, c.anchor, c.rdeg) == ("abstraction", (0,), 1)
        c = classify_position(XY, (1,))
        assert (c.kind, c.anchor, c.rdeg) == ("partial", (), 1)
        c = classify_position(parse_term("x"), ())
        assert (c.kind, c.rdeg) == ("full", 0)

    def test_needs_normal_form(self):
        with pytest.raises(NotANormalForm):
            classify_position(parse_term(r"(\x. x) y"), ())


class TestDSupport:
    def test_full_support(self):
        t = parse_term(r"\f. f (x y) (\z. z)")
        assert is_dsupport(t, full_support(t))

    def test_argument_needs_head(self):
        assert not is_dsupport(XY, {(), (2,)})

    def test_root_alone(self):
        # a root alone is a d-support of a variable; an application also needs its head
        assert is_dsupport(parse_term("x"), {()})
        assert not is_dsupport(XY, {()})
        assert is_dsupport(XY, {(), (1,)})


class TestTrivialConstruction:
    def test_variable(self):
        P = trivial_construct(parse_term("x"), {()}, {(): A})
        k = CANONICAL(())
        assert P.nodes == {(): Judgment(Context({"x": Seq({k: A})}), A, k)}

    def test_untyped_argument(self):
        P = trivial_construct(XY, {(), (1,)}, {(): A})
        k = CANONICAL((1,))
        assert P.root.context == Context({"x": Seq({k: parse_type("()->a")})})
        assert check_valid(P)

    def test_typed_argument(self):
        P = trivial_construct(XY, {(), (1,), (2,)}, {(): A, (2,): B})
        kx, ky = CANONICAL((1,)), CANONICAL((2,))
        assert P.root.context == Context({"x": Seq({kx: parse_type("(2:b)->a")}), "y": Seq({ky: B})})
        assert check_valid(P) and is_quantitative(P)


class TestUnforgetful:
    def test_variable(self):
        P = unforgetful_nf_derivation(parse_term("x"))
        assert check_valid(P) and is_unforgetful(P.root.context, P.root.type)

    def test_fomega(self):
        R = unforgetful_nf_derivation(parse_term("rec X. f X"))
        assert isinstance(R, RegularNF)
        assert format_mjudgment(*R.collapsed_root()) == "f:[[a] -> a]w ⊢ a"

    def test_abstraction(self):
        P = unforgetful_nf_derivation(parse_term(r"\x. x y"))
        assert "y" in P.root.context.vars()
        assert is_unforgetful(P.root.context, P.root.type)

    def test_vacuous_abstraction_is_forgetful(self):
        with pytest.raises(ForgetfulDerivation):
            unforgetful_nf_derivation(parse_term(r"\x. y"))


class TestExtract:
    def test_round_trip_example(self):
        P = trivial_construct(XY, {(), (1,), (2,)}, {(): A, (2,): B})
        supp, full = extract(P)
        assert supp == {(), (1,), (2,)} and full == {(): A, (2,): B}

    def test_axiom(self):
        supp, full = extract(axiom("x", 5, B))
        assert supp == {()} and full == {(): B}

    def test_non_quantitative(self):
        P = Derivation(parse_term("x"), {(): Judgment(Context({"x": Seq({2: A}), "z": Seq({3: A})}), A, 2)})
        with pytest.raises(DerivationError):
            extract(P)


class TestDegrees:
    def test_root(self):
        P = full_nf_derivation(XY)
        deg, tr = degree(P, Right((), ()))
        assert (tr.depth_s, tr.depth_i, deg) == (0, 0, 0)

    def test_source_depth(self):
        t = parse_term("f (f (f x))")
        P = full_nf_derivation(t)
        deg, tr = degree(P, Right((2, 2, 2), ()))
        assert tr.depth_s == 3 and deg == 3

    def test_inner_measure(self):
        assert s_measure((2, 2)) == 2
        assert s_measure((1, 5)) == 5
        assert position_measure((2, 1, 3)) == 3
        t = parse_type("(2:(2:a)->a)->a")
        P = trivial_construct(parse_term("x"), {()}, {(): t})
        deg, tr = degree(P, Right((), (2, 2)))
        assert tr.depth_i == 2 and deg == 2

    def test_cut_type(self):
        t = parse_type("(2:a,5:b)->a")
        assert types_equal(cut_type(t, 2), parse_type("(2:a)->a"))
        assert types_equal(cut_type(t, 5), t)

    def test_truncation_at_max_degree(self):
        P = full_nf_derivation(parse_term(r"\f. f (x y) (\z. z)"))
        C = construction_of(P)
        top = max(C.degree(b) for b in bisupport(P))
        assert truncate_nf(P, top).nodes == P.nodes
        assert truncate_nf(P, top + 3).nodes == P.nodes


class TestHereditary:
    def test_application(self):
        P = full_nf_derivation(XY)
        fams = hereditary_unforgetful_subderivations(P)
        assert len(fams) == 1 and len(fams[0]) == 1
        D = fams[0][0]
        assert D.term == parse_term("y") and is_unforgetful(D.root.context, D.root.type)

    def test_variable(self):
        assert hereditary_unforgetful_subderivations(full_nf_derivation(parse_term("x"))) == []

    def test_forgetful(self):
        P = trivial_construct(XY, {(), (1,)}, {(): A})
        with pytest.raises(ForgetfulDerivation):
            hereditary_unforgetful_subderivations(P)


class TestRegular:
    def test_truncations_increase(self):
        R = full_nf_derivation(parse_term("rec X. f X"))
        chain = R.chain(range(5))
        for P in chain:
            assert check_valid(P)
        assert R.is_unforgetful()


# -- properties --------------------------------------------------------------

seeds = st.integers(0, 10_000)


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_construction_round_trip(seed):
    P = gen.random_nf_derivation(seed, full_types=seed % 2 == 0)
    supp, full = extract(P)
    assert is_dsupport(P.term, supp)
    from rigid_lambda.normal_form import axiom_coder
    assert trivial_construct(P.term, supp, full, axiom_coder(P)).nodes == P.nodes


@given(seeds, st.integers(1, 6))
@settings(max_examples=40, deadline=None)
def test_truncations_are_approximations(seed, n):
    P = gen.random_nf_derivation(seed, full_types=True)
    Pn = truncate_nf(P, n)
    assert check_valid(Pn) and approx_leq(Pn, P)
    assert approx_leq(truncate_nf(P, max(n - 1, 1)), Pn)
