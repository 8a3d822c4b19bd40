"""Acceptance criteria 1 to 10.

Each criterion records one PASS/FAIL line; conftest prints them at the end of
the run. Run this file directly to get the lines without pytest."""
import itertools
import random
import subprocess
import sys
import time

import pytest

import gen
from rigid_lambda.approximation import approx_leq, deriv_join, deriv_meet, minimal_approx
from rigid_lambda.cli import analyze
from rigid_lambda.derivation import (Right, bisupport, bp_key, check_valid, closure_requirements,
                                     iso_check, links, nr, random_relabel, restrict,
                                     validate_restriction, view)
from rigid_lambda.dynamics import head_normalize, refute_finite_typability, subject_reduce
from rigid_lambda.gallery import y_limits_scenario, fomega_prime, y_pipeline
from rigid_lambda.lambda_core import (Var, alpha_equal, app, collapse, hnf_shape, lam, parse_term)
from rigid_lambda.multiset_bridge import collapse_context, format_mcontext
from rigid_lambda.normal_form import (axiom_coder, construction_of, extract,
                                      hereditary_unforgetful_subderivations, trivial_construct,
                                      truncate_nf)
from rigid_lambda.rigid_types import (Arrow, Seq, TVar, efo, efo_empty, format_type,
                                      is_unforgetful, parse_type)

RESULTS = {}

# pinned budgets in seconds
BUDGET = {1: 1.0, 2: 10.0, 5: 30.0, 7: 5.0, 8: 1.0, 9: 10.0}
N_CASES = 200


def record(n, fn):
    t0 = time.perf_counter()
    try:
        detail = fn()
    except Exception as e:
        RESULTS[n] = f"criterion {n:2d}: FAIL  {type(e).__name__}: {e}"
        raise
    dt = time.perf_counter() - t0
    budget = BUDGET.get(n)
    if budget is not None and dt >= budget:
        RESULTS[n] = f"criterion {n:2d}: FAIL  {detail}; took {dt:.2f}s, budget {budget:.0f}s"
        raise AssertionError(RESULTS[n])
    limit = f" (budget {budget:.0f}s)" if budget else ""
    RESULTS[n] = f"criterion {n:2d}: PASS  {detail}; {dt:.2f}s{limit}"


def bs(P):
    return frozenset(bisupport(P))


def reduction_cases(count=N_CASES):
    """Cases with 1 to 5 expansions, so every case has at least one step."""
    return [gen.random_case(seed, expansions=1 + seed % 5, full_types=seed % 2 == 1)
            for seed in range(count)]


# -- 1 ------------------------------------------------------------------------

def expected_gamma(n):
    return "f:[" + "[a] -> a, " * (n - 1) + "[] -> a]"


def criterion_1():
    for n in range(1, 7):
        P = fomega_prime(n)
        assert check_valid(P), (n, check_valid(P))
        assert approx_leq(P, fomega_prime(n + 1)), f"chain breaks at {n}"
        for k in (n, n + 2):
            _, R = y_pipeline(n, k)
            assert check_valid(R), (n, k, check_valid(R))
            got = format_mcontext(collapse_context(R.root.context))
            assert got == expected_gamma(n), (n, k, got)
            assert R.root.type == TVar("a")
    return "Pi'_n valid and increasing, Pi_n roots equal Gamma_n for n = 1..6, k in {n, n+2}"


# -- 2 ------------------------------------------------------------------------

def expected_drop(P, b):
    reps = [a for a in P.nodes if len(a) == len(b) and collapse(a) == b]
    drop = 0
    for a in reps:
        K = {p[len(a)] for p in P.nodes if len(p) == len(a) + 1 and p[:len(a)] == a and p[-1] >= 2}
        drop += 2 + len(K)
    return drop


def criterion_2():
    steps = 0
    for case in reduction_cases():
        for P, b in case.steps:
            R = subject_reduce(P, b)
            assert nr(R) == nr(P) - expected_drop(P, b), (case.seed, b)
            steps += 1
    assert steps >= N_CASES
    return f"{steps} reduction steps over {N_CASES} generated terms"


# -- 3 ------------------------------------------------------------------------

def criterion_3():
    n = 0
    for case in reduction_cases():
        rng = random.Random(case.seed)
        prev = case.nf
        for P, b in case.steps:
            R = subject_reduce(P, b)
            assert R.nodes == prev.nodes and alpha_equal(R.term, prev.term), (case.seed, b)
            Q = random_relabel(P, rng)
            assert iso_check(P, Q) is not None
            assert iso_check(R, subject_reduce(Q, b)) is not None, (case.seed, b)
            prev = P
            n += 1
    return f"{n} expand/reduce round trips and relabelled reductions"


# -- 4 ------------------------------------------------------------------------

def random_restriction(P, rng):
    B = sorted(bisupport(P), key=bp_key)
    return minimal_approx(P, rng.sample(B, rng.randint(1, min(3, len(B)))))


def criterion_4(pairs=100):
    meet = lambda *fs: deriv_meet(list(fs))
    join = lambda *fs: deriv_join(list(fs))
    for seed in range(pairs):
        rng = random.Random(seed)
        P = gen.random_case(seed, full_types=True).P
        A, B, C = (random_restriction(P, rng) for _ in range(3))
        for X in (A, B, C):
            assert validate_restriction(P, bs(X)) and approx_leq(X, P)
        assert bs(meet(A, B)) == bs(A) & bs(B), seed
        assert bs(join(A, B)) == bs(A) | bs(B), seed
        assert bs(meet(A, B)) == bs(meet(B, A)) and bs(join(A, B)) == bs(join(B, A))
        assert bs(meet(A, A)) == bs(A) == bs(join(A, A))
        assert bs(meet(meet(A, B), C)) == bs(meet(A, meet(B, C)))
        assert bs(join(join(A, B), C)) == bs(join(A, join(B, C)))
        assert bs(join(A, meet(A, B))) == bs(A) == bs(meet(A, join(A, B)))
        assert bs(meet(A, join(B, C))) == bs(join(meet(A, B), meet(A, C)))
        assert bs(join(A, meet(B, C))) == bs(meet(join(A, B), join(A, C)))
        assert check_valid(meet(A, B)) and check_valid(join(A, B))
    return f"{pairs} triples of restrictions, all lattice laws"


# -- 5 ------------------------------------------------------------------------

ROOT = Right((), ())


def restriction_masks(P):
    """All valid restrictions, by brute force over every subset of the bisupport."""
    B = sorted(bisupport(P), key=bp_key)
    return [frozenset(s) for r in range(len(B) + 1) for s in itertools.combinations(B, r)
            if validate_restriction(P, s)]


def restriction_closures(P):
    """All valid restrictions as unions of least closed sets of single bipositions.

    Each rule of a restriction is a necessary inclusion (requirement or link),
    so a valid set contains the least closed set of each member and the
    family is closed under union."""
    B = list(bisupport(P))
    nxt = {p: set(closure_requirements(P, p)) | {ROOT} for p in B}
    for p, q, _ in links(P):
        nxt[p].add(q)
        nxt[q].add(p)

    def least(p):
        out, stack = {p}, [p]
        while stack:
            for q in nxt[stack.pop()]:
                if q not in out:
                    out.add(q)
                    stack.append(q)
        return frozenset(out)

    atoms = {least(p) for p in B}
    found = {least(ROOT)}
    todo = list(found)
    while todo:
        S = todo.pop()
        for a in atoms:
            if S | a not in found:
                found.add(S | a)
                todo.append(S | a)
    return found


def check_monotone(P, b, restrictions):
    R = subject_reduce(P, b)
    preimages = {}
    rs = restrictions(P)
    for B0 in rs:
        assert validate_restriction(P, B0), (P.term, b)
        Q2 = subject_reduce(restrict(P, B0), b)
        assert check_valid(Q2) and approx_leq(Q2, R), (P.term, b)
        preimages.setdefault(bs(Q2), []).append(B0)
    assert all(len(v) == 1 for v in preimages.values()), (P.term, b)
    assert set(preimages) == set(restrictions(R)), (P.term, b)
    return len(rs)


def criterion_5(small=12, large=40):
    seen, counts = set(), {"small": [0, 0], "large": [0, 0]}
    for seed in range(600):
        depth = 2 if seed % 2 else 3
        for P, b in gen.random_case(seed, depth=depth, full_types=seed % 3 > 0).steps:
            size = len(bisupport(P))
            key = (str(P.term), b, str(P.root))
            if size > large or key in seen:
                continue
            seen.add(key)
            if size <= small:
                assert set(restriction_masks(P)) == restriction_closures(P), (P.term, b)
                n, bucket = check_monotone(P, b, restriction_masks), "small"
            else:
                n, bucket = check_monotone(P, b, restriction_closures), "large"
            counts[bucket][0] += 1
            counts[bucket][1] += n
    (d1, r1), (d2, r2) = counts["small"], counts["large"]
    assert d1 >= 20 and d2 >= 50
    return (f"{d1} derivations with <= {small} bipositions ({r1} restrictions, every subset tried); "
            f"{d2} with <= {large} ({r2} restrictions, by closure)")


# -- 6 ------------------------------------------------------------------------

def criterion_6(count=N_CASES):
    checked = 0
    for seed in range(count):
        rng = random.Random(seed)
        P = gen.random_nf_derivation(seed, depth=4)
        F = gen.random_nf_derivation(seed, depth=4, full_types=True)
        # arrow types at full positions lose their heads at level 0, so start at 1
        for Q, lowest in ((P, 0), (random_relabel(P, rng), 0), (F, 1)):
            A, full = extract(Q)
            R = trivial_construct(Q.term, A, full, axiom_coder(Q))
            assert R.term == Q.term and R.nodes == Q.nodes, seed
            C = construction_of(Q)
            B = list(bisupport(Q))
            deg = {b: C.degree(b) for b in B}
            top = max(deg.values())
            for k in range(lowest, top + 1):
                Qk = truncate_nf(Q, k)
                assert check_valid(Qk) and approx_leq(Qk, Q), (seed, k)
                if k <= 4:
                    inside = bs(Qk)
                    assert all((b in inside) == (deg[b] <= k) for b in B), (seed, k)
            probe = rng.sample(B, min(4, len(B)))
            assert set(probe) <= bs(truncate_nf(Q, max(lowest, max(deg[b] for b in probe))))
            assert bs(truncate_nf(Q, max(top, lowest))) == frozenset(B)
            checked += 1
    return f"{checked} NF derivations: round trip, truncations, cover, cutting at k <= 4"


# -- 7 ------------------------------------------------------------------------

def criterion_7(horizon=6):
    s = y_limits_scenario(horizon)
    assert s["m_equiv"] is True
    good, bad = s["P' report"], s["P~' report"]
    assert good and good.status == "quantitative", str(good)
    assert not bad and bad.status == "orphan", str(bad)
    assert bad.witness[1:] == ("f", 3), bad.witness
    for name in ("P'", "P~'"):
        V = s[name + " view"]
        assert check_valid(V), name
        assert V.nodes == view(s[name], horizon).nodes, name
    return f"P' {good.status}, P~' {bad}; m_equiv true; horizon {horizon}"


# -- 8 ------------------------------------------------------------------------

def criterion_8():
    text = r"(\x. x x) (\x. x x)"
    cert = refute_finite_typability(parse_term(text))
    assert cert is not None and cert.length == 1, cert
    report, code = analyze(text, 6)
    assert code == 0 and report["verdict"] == "not-finitely-typable", report
    return f"cycle of length {cert.length}; analyze exit {code}"


def criterion_8_cli():
    out = subprocess.run([sys.executable, "-m", "rigid_lambda", "analyze", r"(\x. x x) (\x. x x)"],
                         capture_output=True, text=True, timeout=60)
    assert out.returncode == 0, out.stderr
    assert '"verdict": "not-finitely-typable"' in out.stdout


# -- 9 ------------------------------------------------------------------------

A = TVar("a")
TRACKS = (2, 3, 4)


def brute_efo(t, sign, pos=(), out=None):
    """EFO^sign(t) computed by applying the defining equations as written."""
    out = set() if out is None else out
    if isinstance(t, Arrow):
        entries = t.tail.as_dict()
        if not entries:
            out.add(pos)
        for k, u in entries.items():
            brute_efo(u, -sign, pos + (k,), out)
        brute_efo(t.head, sign, pos + (1,), out)
    return out


def all_types(depth):
    if depth == 1:
        return [A]
    lower = all_types(depth - 1)
    out = [A]
    for r in range(len(TRACKS) + 1):
        for keys in itertools.combinations(TRACKS, r):
            for args in itertools.product(lower, repeat=r):
                out.extend(Arrow(Seq(dict(zip(keys, args))), h) for h in lower)
    return out


def random_type(rng, depth):
    if depth == 1 or rng.random() < 0.2:
        return A
    keys = [k for k in TRACKS if rng.random() < 0.4]
    return Arrow(Seq({k: random_type(rng, depth - 1) for k in keys}), random_type(rng, depth - 1))


def random_rec_text(rng, depth, guarded=False):
    """Body of rec g; g only occurs below an argument edge (heads alone cannot loop)."""
    if depth == 1 or rng.random() < 0.25:
        return rng.choice("ag" if guarded else "a")
    keys = [k for k in TRACKS if rng.random() < 0.5]
    args = ",".join(f"{k}:{random_rec_text(rng, depth - 1, True)}" for k in keys)
    return f"({args})->{random_rec_text(rng, depth - 1, guarded)}"


def brute_unrolled(t, sign, horizon, pos=(), out=None):
    from rigid_lambda.rigid_types import unroll
    out = set() if out is None else out
    if len(pos) > horizon:
        return out
    t = unroll(t)
    if isinstance(t, Arrow):
        entries = t.tail.as_dict()
        if not entries:
            out.add(pos)
        for k, u in entries.items():
            brute_unrolled(u, -sign, horizon, pos + (k,), out)
        brute_unrolled(t.head, sign, horizon, pos + (1,), out)
    return out


def agree(t):
    for pol, sign in (("+", 1), ("-", -1)):
        want = brute_efo(t, sign)
        assert efo(t, pol, horizon=8) == want, (format_type(t), pol)
        assert efo_empty(t, pol) == (not want), (format_type(t), pol)


def has_witness(t, sign, path=frozenset(), depth=0):
    """Search simple paths of the type graph for an empty forest.

    A shortest witness never visits a (node, polarity) pair twice, so
    searching simple paths is exact."""
    from rigid_lambda.rigid_types import unroll
    t = unroll(t)
    key = (id(t), sign)
    if not isinstance(t, Arrow) or key in path:
        return False
    assert depth < 60
    entries = t.tail.as_dict()
    if not entries:
        return True
    path = path | {key}
    return (any(has_witness(u, -sign, path, depth + 1) for u in entries.values())
            or has_witness(t.head, sign, path, depth + 1))


def criterion_9():
    exhaustive = all_types(3)
    for t in exhaustive:
        agree(t)
    rng = random.Random(9)
    sampled = [random_type(rng, rng.randint(4, 6)) for _ in range(3000)]
    for t in sampled:
        agree(t)
    pool = exhaustive[:: 37] + sampled[:200]
    for _ in range(2000):
        ctx = {x: Seq({2: rng.choice(pool)}) for x in rng.sample("xyz", rng.randint(0, 2))}
        ty = rng.choice(pool)
        want = not any(brute_efo(s.get(2), -1, (2,)) for s in ctx.values()) and not brute_efo(ty, 1)
        assert is_unforgetful(ctx, ty) == want, (ctx, format_type(ty))
    rec = 0
    for _ in range(300):
        t = parse_type("rec g." + random_rec_text(rng, rng.randint(2, 5)))
        for pol, sign in (("+", 1), ("-", -1)):
            assert efo(t, pol, horizon=6) == brute_unrolled(t, sign, 6), (format_type(t), pol)
            assert efo_empty(t, pol) == (not has_witness(t, sign)), (format_type(t), pol)
        rec += 1
    return (f"{len(exhaustive)} types (all of depth <= 3), {len(sampled)} sampled of depth 4..6, "
            f"{rec} recursive (positions up to length 6, exact emptiness), 2000 judgments")


# -- 10 -----------------------------------------------------------------------

def normalize_by_subderivations(P):
    h, Q, trace = head_normalize(P)
    assert len(trace) <= nr(P)
    binders, head, args = hnf_shape(h)
    out = []
    for fam in hereditary_unforgetful_subderivations(Q):
        assert fam, f"argument of {head} has no premise"
        nfs = [normalize_by_subderivations(D) for D in fam]
        assert all(alpha_equal(nfs[0], u) for u in nfs[1:])
        out.append(nfs[0])
    return lam(*binders, app(Var(head), *out))


def criterion_10(count=300):
    n = 0
    for seed in range(count):
        case = gen.random_case(seed)
        P = case.P
        if not is_unforgetful(P.root.context, P.root.type):
            continue
        nf = normalize_by_subderivations(P)
        assert alpha_equal(nf, case.nf.term), (seed, nf)
        n += 1
    assert n >= 100
    return f"{n} unforgetful derivations normalized"


# -- pytest entry points ----------------------------------------------------------

CRITERIA = {1: criterion_1, 2: criterion_2, 3: criterion_3, 4: criterion_4, 5: criterion_5,
            6: criterion_6, 7: criterion_7, 8: criterion_8, 9: criterion_9, 10: criterion_10}


@pytest.mark.parametrize("n", sorted(CRITERIA))
def test_criterion(n):
    record(n, CRITERIA[n])


def test_criterion_8_command_line():
    criterion_8_cli()


if __name__ == "__main__":
    failed = 0
    for n, fn in sorted(CRITERIA.items()):
        try:
            record(n, fn)
        except Exception:
            failed += 1
        print(RESULTS[n])
    sys.exit(1 if failed else 0)
