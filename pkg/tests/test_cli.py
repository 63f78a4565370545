import csv
import json

import pytest
from conftest import ANIMAL_DIMACS

from spl.cli import main


@pytest.fixture
def animal_files(tmp_path):
    cnf = tmp_path / "animals.cnf"
    cnf.write_text(ANIMAL_DIMACS)
    out = tmp_path / "out"
    assert main(["compile", str(cnf), "--out-dir", str(out)]) == 0
    return cnf, out / "animals.circuit", out


def _query(capsys, circuit, *extra):
    capsys.readouterr()
    assert main(["query", str(circuit), *extra, "--out-dir", str(circuit.parent)]) == 0
    return capsys.readouterr().out.strip()


def test_compile_reports_support(animal_files, capsys):
    cnf, circuit, out = animal_files
    assert circuit.exists() and (out / "manifest.json").exists()
    assert main(["compile", str(cnf), "--out-dir", str(out)]) == 0
    assert "support: 5" in capsys.readouterr().out
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "compile" and manifest["inputs"]["cnf"]["sha256"]


def test_compile_vtree_strategies_agree(tmp_path, capsys):
    cnf = tmp_path / "f.cnf"
    cnf.write_text("p cnf 5 3\n1 -2 0\n2 3 -4 0\n-1 5 0\n")
    supports = []
    for strat in ("right-linear", "balanced"):
        assert main(["compile", str(cnf), "--vtree", strat, "--out-dir", str(tmp_path / strat)]) == 0
        supports.append([ln for ln in capsys.readouterr().out.splitlines() if ln.startswith("support")])
    assert supports[0] == supports[1]


def test_compile_unsat_warns(tmp_path, caplog):
    cnf = tmp_path / "u.cnf"
    cnf.write_text("p cnf 1 2\n1 0\n-1 0\n")
    assert main(["compile", str(cnf), "--out-dir", str(tmp_path)]) == 0
    assert "unsatisfiable" in caplog.text


def test_queries_on_animals(animal_files, capsys):
    _, circuit, _ = animal_files
    assert _query(capsys, circuit, "count") == "5"
    assert _query(capsys, circuit, "wmc", "--weights", "0.5") == "0.625"
    assert _query(capsys, circuit, "wmc", "--weights", "0.9", "0.9", "0.1") == "0.109"
    assert _query(capsys, circuit, "map", "--weights", "0.9", "0.9", "0.1") == "1 1 1 p=0.081"
    assert _query(capsys, circuit, "eval", "--assignment", "1 0 1") == "1"
    assert _query(capsys, circuit, "eval", "--assignment", "1 0 0") == "0"
    assert float(_query(capsys, circuit, "loss", "--weights", "0.9", "0.9", "0.1")) == pytest.approx(2.21640739675)


@pytest.mark.parametrize(
    "argv",
    [
        ["query", "{c}", "wmc", "--weights", "0.5", "0.5"],
        ["query", "{c}", "wmc", "--weights", "1.5"],
        ["query", "{c}", "eval", "--assignment", "1 0"],
        ["query", "{c}", "eval"],
        ["query", "{d}/missing.circuit", "count"],
    ],
)
def test_query_user_errors_exit_2(animal_files, argv):
    _, circuit, out = animal_files
    argv = [a.format(c=circuit, d=out) for a in argv]
    assert main(argv + ["--out-dir", str(out)]) == 2


def test_malformed_cnf_exits_2(tmp_path):
    cnf = tmp_path / "bad.cnf"
    cnf.write_text("p cnf x y\n")
    assert main(["compile", str(cnf), "--out-dir", str(tmp_path)]) == 2


def test_unknown_flag_is_rejected(animal_files):
    _, circuit, _ = animal_files
    with pytest.raises(SystemExit) as exc:
        main(["query", str(circuit), "count", "--frobnicate"])
    assert exc.value.code == 2


def test_overparam_command(animal_files, capsys):
    _, circuit, out = animal_files
    target = out / "op.circuit"
    assert main(["overparam", str(circuit), "--overparam-k", "2", "--mixtures-m", "2", "-o", str(target), "--out-dir", str(out)]) == 0
    assert _query(capsys, target, "count") == "5"


def test_gen_data_is_reproducible(tmp_path):
    paths = []
    for name in ("a", "b"):
        p = tmp_path / f"{name}.data"
        argv = ["gen-data", "--task", "hmlc", "--labels", "5", "--count", "30", "-o", str(p)]
        assert main(argv + ["--seed", "3", "--out-dir", str(tmp_path)]) == 0
        paths.append(p)
    assert paths[0].read_text() == paths[1].read_text()
    assert paths[0].read_text().startswith("spl-data v1 32 5 30")


def _read_metrics(path):
    with open(path) as fh:
        return next(csv.DictReader(fh))


@pytest.mark.parametrize("model", ["spl", "fil"])
def test_train_and_eval(tmp_path, capsys, model):
    out = tmp_path / model
    argv = ["train", "--task", "simple-path", "--rows", "3", "--cols", "3", "--count", "200"]
    argv += ["--model", model, "--epochs", "3", "--hidden", "16", "--out-dir", str(out)]
    assert main(argv) == 0
    printed = capsys.readouterr().out
    assert "Consistent" in printed
    m = _read_metrics(out / "metrics.csv")
    if model == "spl":
        assert float(m["consistent"]) == 1.0
    with open(out / "train_log.csv") as fh:
        assert next(csv.reader(fh)) == ["epoch", "train_loss", "val_exact", "val_hamming", "val_consistent"]
    assert main(["eval", str(out / "checkpoint.bin"), "--out-dir", str(out)]) == 0
    assert _read_metrics(out / "eval_metrics.csv")["exact"] == m["exact"]


def test_train_is_deterministic(tmp_path):
    logs = []
    for name in ("a", "b"):
        out = tmp_path / name
        argv = ["train", "--task", "preference", "--count", "80", "--epochs", "2", "--hidden", "8"]
        assert main(argv + ["--seed", "1", "--out-dir", str(out)]) == 0
        logs.append((out / "train_log.csv").read_text() + (out / "metrics.csv").read_text())
    assert logs[0] == logs[1]


def test_eval_rejects_garbage_checkpoint(tmp_path):
    bad = tmp_path / "x.bin"
    bad.write_bytes(b"nope")
    assert main(["eval", str(bad), "--out-dir", str(tmp_path)]) == 2
