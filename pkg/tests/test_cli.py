import json

from lforge.cli import main
from lforge.mpdo import loads_spec, dumps_spec


def _strip_time(text):
    doc = json.loads(text)
    doc.pop("timestamp", None)
    return doc


def test_pauli_synthesize_and_verify(tmp_path, capsys):
    out = tmp_path / "r.json"
    assert main(["synthesize", "--model", "pauli", "--J", "3", "--k", "2", "--seed", "7", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    for key in ("format_version", "verdict", "k", "dims", "factors", "d0", "rho_spectra", "ranks",
                "s_sequence", "seeds", "tolerances", "timings"):
        assert key in doc
    assert doc["format_version"] == 1 and doc["verdict"] == "parent_exists"
    assert sorted(map(tuple, doc["factors"])) == [(2, 1), (2, 1)]
    assert "parent_exists" in capsys.readouterr().out
    assert main(["verify", str(out), "--L", "4"]) == 0
    assert "kernel dim 2" in capsys.readouterr().out


def test_ising_exit_code_and_ranks(tmp_path):
    out = tmp_path / "r.json"
    assert main(["synthesize", "--model", "ising", "--beta", "1", "--k", "2", "--out", str(out)]) == 11
    doc = json.loads(out.read_text())
    assert doc["mpdo_form"] == {"rank_C": 4, "threshold": 6}
    assert doc["lindbladian"] is not None
    # verification of a report that fails patching fails
    assert main(["verify", str(out), "--L", "3"]) == 1


def test_local_stage_exit_code_and_verify_input_error(tmp_path):
    out = tmp_path / "r.json"
    assert main(["synthesize", "--model", "pauli", "--J", "1,2", "--k", "2", "--out", str(out)]) == 10
    assert main(["verify", str(out)]) == 2


def test_determinism(tmp_path, monkeypatch):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    monkeypatch.setenv("LFORGE_SEED", "11")
    for p in (a, b):
        assert main(["synthesize", "--model", "domain-wall", "--p", "0", "--k", "2", "--out", str(p)]) == 0
    assert _strip_time(a.read_text()) == _strip_time(b.read_text())
    assert json.loads(a.read_text())["seeds"]["master"] == 11


def test_sweep_document(tmp_path):
    out = tmp_path / "s.json"
    code = main(["synthesize", "--model", "ising", "--k-min", "2", "--k-max", "3", "--out", str(out)])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["k"] == [2, 3]
    assert [d["verdict"] for d in doc["sweep"]] == ["patching_failed", "parent_exists"]


def test_spec_file_and_oracle_check(tmp_path):
    spec = tmp_path / "m.json"
    assert main(["model", "ising", "--beta", "0.5", "--out", str(spec)]) == 0
    text = spec.read_text()
    assert json.loads(text)["s"] == 2
    assert dumps_spec(*loads_spec(text)) == text
    out = tmp_path / "r.json"
    assert main(["synthesize", "--spec", str(spec), "--k", "3", "--oracle-check", "--out", str(out)]) == 0
    oracle = json.loads(out.read_text())["oracle"]
    assert oracle["growth_matches_kernel"] and oracle["kernel_matches_target"]


def test_model_outputs(capsys):
    assert main(["model", "pauli", "--J", "1,2,3"]) == 0
    assert json.loads(capsys.readouterr().out)["s"] == 4
    assert main(["model", "domain-wall", "--p", "0.25"]) == 0
    loads_spec(capsys.readouterr().out)


def test_input_errors(tmp_path, capsys):
    assert main(["model", "heisenberg"]) == 2
    assert "available" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"s": 2,\n  oops}')
    assert main(["synthesize", "--spec", str(bad), "--k", "2"]) == 2
    assert "line 2" in capsys.readouterr().err
    assert main(["synthesize", "--model", "ising"]) == 2
    assert main(["synthesize", "--model", "ising", "--k", "1"]) == 2
    assert main(["synthesize", "--model", "ising", "--spec", str(bad), "--k", "2"]) == 2
    assert main(["verify", str(tmp_path / "missing.json")]) == 2
