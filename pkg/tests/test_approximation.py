import random

import pytest
from hypothesis import given, settings, strategies as st

import gen
from rigid_lambda.approximation import (ApproximationChain, NotDirected, UnreachableBiposition,
                                        UpUndefinedAtAxiom, approx_leq, deriv_join, deriv_meet,
                                        is_approximable, minimal_approx, reach, root_reachable, top,
                                        up)
from rigid_lambda.derivation import (Derivation, Judgment, Left, Right, bisupport, bp_key,
                                     check_valid)
from rigid_lambda.gallery import fomega_lazy, fomega_prime
from rigid_lambda.lambda_core import parse_term
from rigid_lambda.rigid_types import Arrow, Context, Seq, TVar, parse_type

A = TVar("a")


def identity():
    return Derivation(parse_term(r"\x. x"), {
        (): Judgment(Context(), Arrow(Seq({2: A}), A)),
        (0,): Judgment(Context({"x": Seq({2: A})}), A, 2),
    })


def apply_xy():
    f = parse_type("(2:a)->a")
    return Derivation(parse_term("x y"), {
        (): Judgment(Context({"x": Seq({4: f}), "y": Seq({6: A})}), A),
        (1,): Judgment(Context({"x": Seq({4: f})}), f, 4),
        (2,): Judgment(Context({"y": Seq({6: A})}), A, 6),
    })


class TestOrder:
    def test_reflexive(self):
        assert approx_leq(fomega_prime(3), fomega_prime(3))

    def test_chain(self):
        for n in range(1, 5):
            assert approx_leq(fomega_prime(n), fomega_prime(n + 1))
            assert not approx_leq(fomega_prime(n + 1), fomega_prime(n))

    def test_label_clash(self):
        P = apply_xy()
        Q = Derivation(P.term, {**P.nodes, (): Judgment(P.root.context, TVar("b"))})
        assert not approx_leq(P, Q)

    def test_against_lazy(self):
        # the starved f of the finite rendering is below a fed one
        for n in range(1, 5):
            assert approx_leq(fomega_prime(n), fomega_lazy())


class TestMeetJoin:
    def test_dropping_the_argument(self):
        P = apply_xy()
        small = minimal_approx(P, [Right((), ())])
        assert check_valid(small)
        assert small.nodes[(1,)].type == parse_type("()->a")
        assert bisupport(deriv_meet([small, P])) == bisupport(small)
        assert bisupport(deriv_join([small, P])) == bisupport(P)

    def test_chain_rejects_decrease(self):
        with pytest.raises(NotDirected):
            ApproximationChain([fomega_prime(3), fomega_prime(2)])


class TestUpTop:
    def test_abstraction(self):
        P = identity()
        assert up(P, Right((), (1,))) == Right((0,), ())
        assert up(P, Right((), (2,))) == Left((0,), "x", (2,))

    def test_application(self):
        P = apply_xy()
        assert up(P, Right((), ())) == Right((1,), (1,))

    def test_axiom(self):
        P = apply_xy()
        assert top(P, Left((2,), "y", (6,))) == Right((2,), ())
        with pytest.raises(UpUndefinedAtAxiom):
            up(P, Right((2,), ()))

    def test_top_reaches_axiom(self):
        assert top(apply_xy(), Right((), ())) == Right((1,), (1,))


class TestApproximable:
    def test_finite(self):
        P = apply_xy()
        v = is_approximable(P, bisupport(P))
        assert v and v.witness is P

    def test_chain(self):
        chain = ApproximationChain([fomega_prime(n) for n in range(1, 6)])
        probe = [Left((), "f", (4,)), Left((), "f", (4, 1))]
        v = is_approximable(chain, probe)
        assert v and v.witness.nodes == fomega_prime(3).nodes

    def test_orphan_track_is_not_approximable(self):
        D = fomega_lazy(padding=("x", A))
        assert not is_approximable(D, [Left((), "x", (2,))])
        assert is_approximable(fomega_lazy(), [Left((), "f", (3,))])

    def test_reach_of_finite_quantitative(self):
        P = apply_xy()
        assert reach(P) == bisupport(P)
        assert root_reachable(P)

    def test_minimal_identity(self):
        P = identity()
        assert minimal_approx(P, [Right((), ())]).nodes == P.nodes

    def test_minimal_empty(self):
        with pytest.raises(UnreachableBiposition):
            minimal_approx(identity(), [])


# -- properties --------------------------------------------------------------

@given(st.integers(0, 10_000))
@settings(max_examples=30, deadline=None)
def test_minimal_approx_is_least(seed):
    rng = random.Random(seed)
    P = gen.random_case(seed, full_types=True).P
    B = sorted(bisupport(P), key=bp_key)
    probe = rng.sample(B, min(2, len(B)))
    M = minimal_approx(P, probe)
    assert check_valid(M) and approx_leq(M, P)
    assert set(probe) <= bisupport(M)
    assert bisupport(minimal_approx(P, list(bisupport(M)))) == bisupport(M)
