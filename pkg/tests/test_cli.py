import json

import pytest

from blab.cli import parse_and_dispatch


def run(tmp_path, *argv):
    return parse_and_dispatch([str(a) for a in argv])


def test_exp_i_writes_report(tmp_path):
    out = tmp_path / "rep.json"
    code = run(tmp_path, "exp", "i", "--n", 8, "--M", 200, "--q", 0.1, "--trials", 200, "--seed", 7, "--out", out)
    assert code == 0
    rep = json.loads(out.read_text())
    assert rep["seed"] == 7 and rep["config"]["M"] == 200
    assert rep["runtime_ms"] is None


def test_same_argv_same_bytes(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    args = ["exp", "hoeffding", "--M", 50, "--trials", 2000, "--seed", 11]
    run(tmp_path, *args, "--out", a)
    run(tmp_path, *args, "--out", b)
    assert a.read_bytes() == b.read_bytes()


def test_build_then_eval(tmp_path, capsys):
    net = tmp_path / "net.json"
    assert run(tmp_path, "build", "--kind", "unstable", "--n", 2, "--kappa", 1, "--out", net) == 0
    assert json.loads(net.read_text())["config"]["kind"] == "unstable"
    capsys.readouterr()
    assert run(tmp_path, "eval", net, "--x", "0,0") == 0
    assert capsys.readouterr().out.strip() == "1"


def test_build_deep(tmp_path):
    net = tmp_path / "deep.json"
    assert run(tmp_path, "build", "--kind", "robust", "--n", 2, "--depth", 4, "--hidden", 3, "--out", net) == 0
    assert json.loads(net.read_text())["architecture"] == [1, 3, 3, 4, 2]


@pytest.mark.parametrize(
    "argv",
    [
        ["sample", "--n", 4, "--M", 0],
        ["exp", "i", "--n", 4, "--alpha", 0.5],
        ["exp", "i", "--q", 0.7],
        ["exp", "i", "--M", 10, "--r", 3, "--s", 3],
        ["build", "--kind", "robust", "--n", 3, "--width", 5, "--depth", 3],
        ["exp", "nope"],
        ["sample", "--n", 4, "--M", 10, "--bogus"],
    ],
)
def test_invalid_input_exits_2(tmp_path, argv, capsys):
    assert run(tmp_path, *argv) == 2
    assert capsys.readouterr().err


def test_alpha_diagnostic_names_constraint(tmp_path, capsys):
    run(tmp_path, "exp", "i", "--n", 4, "--alpha", 0.5)
    assert "eps/2" in capsys.readouterr().err


def test_sample_csv_with_meta(tmp_path):
    out = tmp_path / "d.csv"
    assert run(tmp_path, "sample", "--n", 3, "--M", 20, "--format", "csv", "--seed", 5, "--out", out) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "x1,x2,x3,label" and len(lines) == 21
    meta = json.loads((tmp_path / "d.csv.meta.json").read_text())
    assert meta["seed"] == 5 and meta["spec"]["n"] == 3


def test_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("BLAB_SEED", "42")
    out = tmp_path / "s.json"
    run(tmp_path, "sample", "--n", 2, "--M", 5, "--out", out)
    assert json.loads(out.read_text())["seed"] == 42


def test_attack_and_certify(tmp_path):
    log = tmp_path / "log.csv"
    assert run(tmp_path, "attack", "--n", 4, "--trials", 20_000, "--log", log, "--out", tmp_path / "a.json") == 0
    assert log.read_text().startswith("trial,zeta_norm,flipped")
    assert run(tmp_path, "attack", "--kind", "robust", "--n", 4, "--trials", 5000, "--out", tmp_path / "b.json") == 0
    assert run(tmp_path, "certify", "--n", 4, "--M", 500, "--out", tmp_path / "c.json") == 0
    assert run(tmp_path, "certify", "--variant", "shifted_vertices", "--k", 16, "--n", 4, "--M", 500,
               "--out", tmp_path / "d.json") == 0


def test_exp_iiib_csv(tmp_path):
    out = tmp_path / "r.csv"
    assert run(tmp_path, "exp", "iiib", "--n", 4, "--k", 2, "--M", 10, "--trials", 5000, "--format", "csv",
               "--out", out) == 0
    assert (tmp_path / "r.csv.meta.json").exists()
