import json
import subprocess
import sys

import pytest

from rigid_lambda.cli import main
from rigid_lambda.derivation import check_valid, from_json


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def doc_of(out):
    return json.loads(out)


def test_parse_round_trip(capsys):
    code, out, _ = run(capsys, "parse", r"(\x. x x) (\x. x x)")
    d = doc_of(out)
    assert code == 0 and d["term"] == r"(\x. x x) (\x. x x)" and d["normal_form"] is False
    code, out2, _ = run(capsys, "parse", d["term"])
    assert doc_of(out2)["term"] == d["term"]


def test_parse_error_has_location(capsys):
    code, _, err = run(capsys, "parse", r"\x. (x")
    assert code == 1 and "line 1, column 7" in err


def test_analyze_delta_delta(capsys):
    code, out, _ = run(capsys, "analyze", r"(\x.x x)(\x.x x)")
    d = doc_of(out)
    assert code == 0 and d["verdict"] == "not-finitely-typable"
    assert d["evidence"]["kind"] == "head-cycle" and d["evidence"]["cycle_length"] == 1


def test_analyze_fomega_with_trailing_horizon(capsys):
    code, out, _ = run(capsys, "analyze", "rec X. f X", "--horizon", "4")
    d = doc_of(out)
    assert code == 0 and d["verdict"] == "WN-with-NF" and d["horizon"] == 4
    assert d["evidence"]["unforgetful"] is True
    assert d["evidence"]["collapsed_root"] == "f:[[a] -> a]w ⊢ a"
    assert check_valid(from_json(d["evidence"]["derivation"]))


def test_analyze_fixpoint_at_horizon(capsys):
    code, out, _ = run(capsys, "--horizon", "3", "analyze", r"(\x. f (x x)) (\x. f (x x))")
    d = doc_of(out)
    assert code == 0 and d["verdict"] == "WN-at-horizon"


def test_analyze_inconclusive(capsys):
    code, out, _ = run(capsys, "analyze", r"x ((\x. x x) (\x. x x))")
    assert code == 2 and doc_of(out)["verdict"] == "inconclusive"


def test_analyze_erased_loop(capsys):
    code, out, _ = run(capsys, "analyze", r"(\x. y) ((\x. x x) (\x. x x))")
    d = doc_of(out)
    assert code == 0 and d["verdict"] == "WN-with-NF" and d["normal_form"] == "y"


def test_reduce_expand_round_trip(capsys, tmp_path):
    code, out, _ = run(capsys, "type-nf", "x y")
    nf = tmp_path / "nf.json"
    nf.write_text(out)
    code, out, _ = run(capsys, "expand", str(nf), r"(\v. v y) x", "e")
    assert code == 0
    ex = tmp_path / "ex.json"
    ex.write_text(out)
    assert check_valid(from_json(doc_of(out)["derivation"]))
    code, out, _ = run(capsys, "reduce", str(ex), "e")
    assert code == 0
    assert from_json(doc_of(out)["derivation"]).nodes == from_json(json.loads(nf.read_text())["derivation"]).nodes


def test_truncate_and_approx(capsys, tmp_path):
    code, out, _ = run(capsys, "type-nf", r"\f. f (x y) (\z. z)")
    full = tmp_path / "full.json"
    full.write_text(out)
    code, out, _ = run(capsys, "truncate", str(full), "1")
    small = tmp_path / "small.json"
    small.write_text(out)
    assert code == 0 and check_valid(from_json(doc_of(out)["derivation"]))
    code, out, _ = run(capsys, "approx", "leq", str(small), str(full))
    assert doc_of(out) == {"leq": True}
    code, out, _ = run(capsys, "approx", "meet", str(small), str(full))
    assert from_json(doc_of(out)["derivation"]).nodes == from_json(json.loads(small.read_text())["derivation"]).nodes


def test_efo(capsys):
    code, out, _ = run(capsys, "efo", "()->a", "+")
    assert doc_of(out)["positions"] == ["e"]
    code, out, _ = run(capsys, "efo", "(2:a)->a", "-")
    assert doc_of(out)["empty"] is True


def test_schema_violation(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"term": "x", "nodes": {"e": {"context": {}, "type": 3}}}))
    code, _, err = run(capsys, "reduce", str(bad), "e")
    assert code == 1 and "schema violation at /nodes" in err


def test_dot_and_text(capsys):
    code, out, _ = run(capsys, "--format", "dot", "type-nf", "x y")
    assert out.startswith("digraph")
    code, out, _ = run(capsys, "--format", "text", "type-nf", "x y")
    assert "x y" in out


@pytest.mark.parametrize("name", ["Y", "fomega", "deltadelta", "appF"])
def test_demos(capsys, name):
    code, out, _ = run(capsys, "demo", name, "--horizon", "4")
    assert code == 0
    assert doc_of(out)


def test_demo_y_prints_gamma(capsys):
    code, out, _ = run(capsys, "demo", "Y")
    text = out
    assert "[[a] -> a, [] -> a]" in text


def test_out_file(capsys, tmp_path):
    target = tmp_path / "o.json"
    code, out, _ = run(capsys, "--out", str(target), "parse", "x")
    assert code == 0 and out == "" and json.loads(target.read_text())["term"] == "x"


def test_env_horizon(monkeypatch, capsys):
    monkeypatch.setenv("RIGID_LAMBDA_HORIZON", "2")
    code, out, _ = run(capsys, "analyze", "rec X. f X")
    assert doc_of(out)["horizon"] == 2


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "rigid_lambda", "parse", "x"], capture_output=True, text=True)
    assert r.returncode == 0 and json.loads(r.stdout)["term"] == "x"


def test_deterministic_output(capsys):
    _, a, _ = run(capsys, "analyze", r"(\x. y) ((\x. x x) (\x. x x))")
    _, b, _ = run(capsys, "analyze", r"(\x. y) ((\x. x x) (\x. x x))")
    assert a == b
