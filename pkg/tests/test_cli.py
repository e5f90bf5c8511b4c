import csv
import io
import json
from importlib import resources

import jsonschema
import pytest

from ssvcert.cli import run_cli

SCHEMA = json.loads(resources.files("ssvcert").joinpath("schemas/report.schema.json").read_text())


def run(capsys, *argv):
    code = run_cli(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "x.txt"
    assert run_cli(["gen", "--n", "40", "--d", "3", "--seed", "1", "--out", str(path)]) == 0
    return str(path)


def test_gen_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for p in (a, b):
        assert run_cli(["gen", "--dist", "rademacher", "--n", "20", "--d", "2", "--seed", "3", "--out", str(p)]) == 0
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize("method", ["trivial", "pairwise", "m4", "schatten"])
def test_certify_json_valid(data, capsys, method):
    code, out, _ = run(capsys, "certify", "--in", data, "--eta", "0.1", "--method", method)
    assert code == 0
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert doc["command"] == "certify" and doc["result"]["method"] == method


def test_certify_csv(data, capsys):
    code, out, _ = run(capsys, "certify", "--in", data, "--eta", "0.1", "--method", "m4", "--report", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1 and rows[0]["method"] == "m4"


def test_oracle_and_certificate_order(data, capsys):
    _, out, _ = run(capsys, "oracle", "--in", data, "--eta", "0.1")
    exact = json.loads(out)["result"]["value"]
    _, out, _ = run(capsys, "certify", "--in", data, "--eta", "0.1", "--method", "pairwise")
    assert json.loads(out)["result"]["value"] >= exact


def test_oracle_size_cap_exit_3(tmp_path, capsys):
    path = tmp_path / "big.txt"
    run_cli(["gen", "--n", "200", "--d", "2", "--out", str(path)])
    code, _, err = run(capsys, "oracle", "--in", str(path), "--eta", "0.2")
    assert code == 3 and "1000000" in err


def test_usage_errors(capsys, data):
    assert run(capsys, "certify", "--in", data, "--eta", "0.1", "--bogus")[0] == 2
    assert run(capsys, "nonsense")[0] == 2
    assert run(capsys, "certify", "--in", "/nonexistent", "--eta", "0.1")[0] == 2


def test_apps_commands(capsys, tmp_path):
    path = tmp_path / "t.txt"
    run_cli(["gen", "--n", "300", "--d", "3", "--out", str(path)])
    for argv in (["distortion", "--in", str(path), "--methods", "pairwise,m4"],
                 ["two-to-p", "--in", str(path), "--p", "3"],
                 ["sparse-pca", "--in", str(path), "--eta", "0.4", "--beta", "5"]):
        code, out, _ = run(capsys, *argv)
        assert code == 0
        jsonschema.validate(json.loads(out), SCHEMA)


def test_robust_commands(capsys):
    code, out, _ = run(capsys, "robust-cov", "--n", "1000", "--d", "3", "--seeds", "2", "--adversary", "cov_spike",
                       "--report", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["seed"] for r in rows] == ["0", "1"]
    code, out, _ = run(capsys, "robust-mean", "--n", "1000", "--d", "3", "--seeds", "2")
    doc = json.loads(out)
    jsonschema.validate(doc, SCHEMA)
    assert doc["result"]["summary"]["seeds"] == 2
    code2, out2, _ = run(capsys, "robust-mean", "--n", "1000", "--d", "3", "--seeds", "2")
    assert out == out2


def test_lowdeg_commands(capsys):
    code, out, _ = run(capsys, "lowdeg", "advantage", "--kind", "cov", "--n", "10")
    assert code == 0 and json.loads(out)["result"]["value"] >= 1
    code, out, _ = run(capsys, "lowdeg", "instance", "--kind", "mean", "--eta", "0.1", "--D", "4")
    doc = json.loads(out)
    assert doc["result"]["check"]["ok"]
    code, out, _ = run(capsys, "lowdeg", "advantage", "--kind", "cov", "--sweep-n", "1,10,100")
    vals = [float(r["value"]) for r in csv.DictReader(io.StringIO(out))]
    assert vals == sorted(vals)


def test_sweep(capsys):
    code, out, _ = run(capsys, "sweep", "--d", "3", "--etas", "0.1,0.3", "--ratios", "2,8,32", "--seeds", "2")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [r["eta"] for r in rows] == ["0.1", "0.3"]
