"""Command-line front end.

Every command prints one document: JSON by default, ``--format text`` for a
short human summary and ``--format dot`` for derivation-valued commands.
Exit codes: 0 definite answer, 2 inconclusive, 1 bad input.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

from .approximation import approx_leq, deriv_join, deriv_meet
from .derivation import (Derivation, DerivationError, SchemaError, check_valid, format_derivation,
                         from_json, is_quantitative, to_dot, to_json)
from .dynamics import (TrackCoder, refute_finite_typability, subject_expand, subject_reduce,
                       subject_substitute)
from .lambda_core import (TermError, alpha_equal, applicative_depth, format_position, format_term,
                          is_001, is_normal_form, is_redex, iter_positions, parse_position,
                          parse_term, reduce_at, subterm_at, unfold)
from .multiset_bridge import collapse_judgment, format_mjudgment, m_equiv
from .normal_form import (ALPHA, ForgetfulDerivation, RegularNF, full_nf_derivation,
                          trivial_construct, truncate_nf, unforgetful_nf_derivation)
from .rigid_types import (TypeError_, efo, efo_empty, format_type, is_unforgetful, parse_type)

DEFAULT_HORIZON = 6
INCONCLUSIVE = "inconclusive"


class InputError(Exception):
    pass


def default_horizon():
    raw = os.environ.get("RIGID_LAMBDA_HORIZON")
    if raw is None:
        return DEFAULT_HORIZON
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"RIGID_LAMBDA_HORIZON must be an integer, got {raw!r}") from None


def make_coder(spec):
    try:
        return TrackCoder(spec or "canonical")
    except ValueError as e:
        raise InputError(str(e)) from None


def read_doc(path):
    try:
        if path == "-":
            text = sys.stdin.read()
        else:
            with open(path, encoding="utf-8") as fh:
                text = fh.read()
    except OSError as e:
        raise InputError(f"cannot read {path}: {e.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}") from None


def read_derivation(path):
    doc = read_doc(path)
    if isinstance(doc, dict) and "derivation" in doc and "nodes" not in doc:
        doc = doc["derivation"]
    return from_json(doc)


def mjudgment(j):
    return format_mjudgment(*collapse_judgment(j))


# -- commands ------------------------------------------------------------------------

def cmd_parse(text):
    t = parse_term(text)
    return {"term": format_term(t), "normal_form": is_normal_form(t), "lambda_001": is_001(t)}, 0


def cmd_type_nf(text, horizon, coder, require_unforgetful=False):
    t = parse_term(text)
    D = full_nf_derivation(t, coder=coder)
    if isinstance(D, RegularNF):
        ctx, ty = D.collapsed_root()
        ok = D.is_unforgetful()
        P = D.truncation(horizon)
        doc = {"derivation": to_json(P), "horizon": horizon, "unforgetful": ok,
               "collapsed_root": format_mjudgment(ctx, ty)}
    else:
        ok = is_unforgetful(D.root.context, D.root.type)
        P = D
        doc = {"derivation": to_json(P), "unforgetful": ok, "collapsed_root": mjudgment(D.root)}
    if require_unforgetful and not ok:
        raise ForgetfulDerivation("the full-support derivation is forgetful (vacuous abstraction)")
    return doc, 0, P


def cmd_reduce(path, position):
    P = read_derivation(path)
    R = subject_reduce(P, parse_position(position))
    return {"derivation": to_json(R)}, 0, R


def cmd_expand(path, text, position, coder):
    P = read_derivation(path)
    R = subject_expand(P, parse_term(text), parse_position(position), coder)
    return {"derivation": to_json(R)}, 0, R


def cmd_truncate(path, n):
    P = read_derivation(path)
    R = truncate_nf(P, n)
    return {"derivation": to_json(R), "level": n}, 0, R


def cmd_approx(op, paths):
    family = [read_derivation(p) for p in paths]
    if op == "leq":
        if len(family) != 2:
            raise InputError("approx leq takes exactly two derivations")
        return {"leq": approx_leq(family[0], family[1])}, 0, None
    R = deriv_meet(family) if op == "meet" else deriv_join(family)
    return {"derivation": to_json(R), "op": op}, 0, R


def cmd_efo(text, polarity, horizon):
    u = parse_type(text)
    pos = sorted(efo(u, polarity, horizon))
    return {"type": format_type(u), "polarity": polarity, "empty": efo_empty(u, polarity),
            "horizon": horizon, "positions": [format_position(p) for p in pos]}, 0


# -- analysis -------------------------------------------------------------------------

def _redexes_within(t, horizon):
    return sorted(b for b in iter_positions(t, horizon) if is_redex(subterm_at(t, b)))


def _expand_back(P, terms, seq, coder):
    for i in range(len(seq) - 1, -1, -1):
        P = subject_expand(P, terms[i], seq[i], coder)
    return P


def _typed_evidence(D, horizon=None):
    j = D.root
    out = {"derivation": to_json(D), "valid": bool(check_valid(D)),
           "unforgetful": is_unforgetful(j.context, j.type), "collapsed_root": mjudgment(j)}
    if horizon is not None:
        out["horizon"] = horizon
    return out


def analyze(text, horizon, coder=None, max_steps=200):
    t = parse_term(text)
    report = {"term": format_term(t), "horizon": horizon}
    if is_normal_form(t):
        report["verdict"] = "WN-with-NF"
        report["normal_form"] = format_term(t)
        D = full_nf_derivation(t, coder=coder)
        if isinstance(D, RegularNF):
            ctx, ty = D.collapsed_root()
            chain = D.chain(range(horizon + 1))
            report["evidence"] = {
                "kind": "truncation-chain", "horizon": horizon,
                "unforgetful": D.is_unforgetful(), "collapsed_root": format_mjudgment(ctx, ty),
                "chain": [{"level": n, "nodes": len(P.nodes), "valid": bool(check_valid(P)),
                           "quantitative": is_quantitative(P)} for n, P in enumerate(chain)],
                "derivation": to_json(chain[-1])}
        else:
            report["evidence"] = {"kind": "derivation", **_typed_evidence(D)}
        return report, 0

    cert = refute_finite_typability(t)
    if cert is not None:
        report["verdict"] = "not-finitely-typable"
        report["evidence"] = {"kind": "head-cycle", "summary": str(cert), **cert.to_json()}
        return report, 0

    terms, seq = [t], []
    for _ in range(max_steps):
        cur = terms[-1]
        if is_normal_form(cur):
            D = unforgetful_or_full(cur, coder)
            R = _expand_back(D, terms, seq, coder)
            report.update(verdict="WN-with-NF", normal_form=format_term(cur))
            report["evidence"] = {"kind": "expanded-derivation", "steps": [format_position(b) for b in seq],
                                  **_typed_evidence(R)}
            return report, 0
        rs = _redexes_within(cur, horizon)
        if not rs:
            nf_view = unfold(cur, horizon).tree
            A = set(iter_positions(nf_view))
            D = trivial_construct(nf_view, A, lambda a: ALPHA)
            D = subject_substitute(D, cur)
            R = _expand_back(D, terms, seq, coder)
            report.update(verdict="WN-at-horizon", normal_form_view=format_term(nf_view))
            report["evidence"] = {"kind": "expanded-view-derivation",
                                  "steps": [format_position(b) for b in seq],
                                  **_typed_evidence(R, horizon)}
            return report, 0
        b = rs[0]
        nxt = reduce_at(cur, b)
        seq.append(b)
        if any(alpha_equal(nxt, old) for old in terms):
            terms.append(nxt)
            report["verdict"] = INCONCLUSIVE
            report["note"] = (f"reduction within the horizon cycles at depth {applicative_depth(b)}; "
                              "the subject is finitely typable away from the loop")
            report["steps"] = [format_position(p) for p in seq]
            return report, 2
        terms.append(nxt)
    report["verdict"] = INCONCLUSIVE
    report["note"] = f"no normal form view after {max_steps} steps"
    return report, 2



def unforgetful_or_full(t, coder):
    try:
        return unforgetful_nf_derivation(t, coder=coder)
    except ForgetfulDerivation:
        return full_nf_derivation(t, coder=coder)


# -- demos ------------------------------------------------------------------------------

def demo(name, horizon):
    from . import gallery as g
    if name == "Y":
        rows = []
        prev = None
        for n in range(1, horizon + 1):
            Pn, Rn = g.y_pipeline(n)
            rows.append({
                "n": n,
                "fomega_valid": bool(check_valid(Pn)),
                "above_previous": prev is None or approx_leq(prev, Pn),
                "fomega_root": str(Pn.root),
                "Y_valid": bool(check_valid(Rn)),
                "Y_root": str(Rn.root),
                "Y_collapsed_root": mjudgment(Rn.root),
                "matches_gamma_n": collapse_judgment(Rn.root)[0] == g.gamma_n(n),
            })
            prev = Pn
        ok = all(r["fomega_valid"] and r["above_previous"] and r["Y_valid"] and r["matches_gamma_n"]
                 for r in rows)
        return {"demo": "Y", "horizon": horizon, "ok": ok, "levels": rows}, 0 if ok else 2
    if name == "fomega":
        R = RegularNF(g.FOMEGA)
        ctx, ty = R.collapsed_root()
        chain = R.chain(range(horizon + 1))
        pad = g.fomega_lazy(("x", parse_type("b")))
        from .multiset_bridge import is_quantitative_m
        doc = {"demo": "fomega", "horizon": horizon, "collapsed_root": format_mjudgment(ctx, ty),
               "unforgetful": R.is_unforgetful(),
               "truncations": [{"level": n, "root": str(P.root), "valid": bool(check_valid(P)),
                                "quantitative": is_quantitative(P)} for n, P in enumerate(chain)],
               "padded_m_quantitative": is_quantitative_m(pad),
               "unpadded_m_quantitative": is_quantitative_m(g.fomega_lazy())}
        return doc, 0
    if name == "deltadelta":
        return analyze(r"(\x. x x) (\x. x x)", horizon)
    if name == "appF":
        s = g.y_limits_scenario(horizon)
        doc = {"demo": "appF", "horizon": horizon, "m_equiv": s["m_equiv"]}
        for key in ("P", "P~"):
            rep = s[key + "' report"]
            V = s[key + "' view"]
            doc[key + "'"] = {"quantitative": bool(rep), "report": str(rep),
                              "view_nodes": len(V.nodes), "view_valid": bool(check_valid(V)),
                              "root": str(V.root), "collapsed_root": mjudgment(V.root)}
        return doc, 0
    raise InputError(f"unknown demo {name!r}")


# -- rendering -------------------------------------------------------------------------

def _text(doc):
    lines = []

    def walk(d, indent=""):
        for k, v in d.items():
            if k == "derivation" and isinstance(v, dict):
                lines.append(f"{indent}{k}: {len(v.get('nodes', {}))} nodes")
            elif isinstance(v, dict):
                lines.append(f"{indent}{k}:")
                walk(v, indent + "  ")
            elif isinstance(v, list) and v and isinstance(v[0], dict):
                lines.append(f"{indent}{k}:")
                for item in v:
                    walk(item, indent + "  - ")
            else:
                lines.append(f"{indent}{k}: {v}")

    walk(doc)
    return "\n".join(lines)


def render(doc, fmt, derivation=None):
    if fmt == "dot":
        if derivation is None:
            raise InputError("--format dot needs a command that produces a derivation")
        return to_dot(derivation)
    if fmt == "text":
        if derivation is not None:
            return format_derivation(derivation)
        return _text(doc)
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False)


def _global_options(parser, suppress=False):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--horizon", type=int, default=d(None),
                        help=f"applicative depth for views (default {DEFAULT_HORIZON} or $RIGID_LAMBDA_HORIZON)")
    parser.add_argument("--format", choices=("json", "text", "dot"), default=d("json"))
    parser.add_argument("--coder", default=d("canonical"), help="track coder: canonical or seed:N")
    parser.add_argument("--out", default=d(None), help="write the document here instead of stdout")


def build_parser():
    p = argparse.ArgumentParser(prog="rigid-lambda",
                                description="Rigid intersection type derivations for infinitary lambda terms.")
    _global_options(p)
    # the same options are accepted after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    _global_options(common, suppress=True)
    sub = p.add_subparsers(dest="cmd", required=True)
    add = lambda name, **kw: sub.add_parser(name, parents=[common], **kw)

    s = add("parse", aliases=["format"], help="parse and pretty-print a term")
    s.add_argument("term")
    s = add("type-nf", help="full-support derivation of a normal form")
    s.add_argument("term")
    s.add_argument("--require-unforgetful", action="store_true")
    s = add("reduce", help="subject reduction of a derivation document")
    s.add_argument("derivation")
    s.add_argument("position")
    s = add("expand", help="subject expansion towards a given term")
    s.add_argument("derivation")
    s.add_argument("term")
    s.add_argument("position")
    s = add("truncate", help="degree truncation of a normal form derivation")
    s.add_argument("derivation")
    s.add_argument("n", type=int)
    s = add("approx", help="approximation order, meet and join")
    s.add_argument("op", choices=("leq", "meet", "join"))
    s.add_argument("derivations", nargs="+")
    s = add("efo", help="positions of empty sequences in a type")
    s.add_argument("type")
    s.add_argument("polarity", choices=("+", "-"))
    s = add("analyze", help="decide or certify weak normalization at a horizon")
    s.add_argument("term")
    s.add_argument("--max-steps", type=int, default=200)
    s = add("demo", help="reproduce a worked example")
    s.add_argument("name", choices=("Y", "fomega", "deltadelta", "appF"))
    return p


def run(args):
    horizon = args.horizon if args.horizon is not None else default_horizon()
    if horizon < 0:
        raise InputError("--horizon must be non-negative")
    coder = make_coder(args.coder)
    cmd = args.cmd
    deriv = None
    if cmd in ("parse", "format"):
        doc, code = cmd_parse(args.term)
    elif cmd == "type-nf":
        doc, code, deriv = cmd_type_nf(args.term, horizon, coder, args.require_unforgetful)
    elif cmd == "reduce":
        doc, code, deriv = cmd_reduce(args.derivation, args.position)
    elif cmd == "expand":
        doc, code, deriv = cmd_expand(args.derivation, args.term, args.position, coder)
    elif cmd == "truncate":
        doc, code, deriv = cmd_truncate(args.derivation, args.n)
    elif cmd == "approx":
        doc, code, deriv = cmd_approx(args.op, args.derivations)
    elif cmd == "efo":
        doc, code = cmd_efo(args.type, args.polarity, horizon)
    elif cmd == "analyze":
        doc, code = analyze(args.term, horizon, coder, args.max_steps)
    else:
        doc, code = demo(args.name, horizon)
    return render(doc, args.format, deriv), code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        text, code = run(args)
    except SchemaError as e:
        print(f"error: schema violation at {e}", file=sys.stderr)
        return 1
    except (InputError, TermError, TypeError_, DerivationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
