import json

import pytest

from nyqtune.cli import main

SMALL_GA = ["--population", "12", "--generations", "8"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(autouse=True)
def _no_env_seed(monkeypatch):
    monkeypatch.delenv("NYQTUNE_SEED", raising=False)


def test_bench_list(capsys):
    code, out, _ = run(capsys, "bench", "list")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 38
    assert lines[0].startswith("P1,")


def test_bench_show(capsys):
    code, out, _ = run(capsys, "bench", "show", "--bench", "P1:3")
    doc = json.loads(out)
    assert code == 0 and doc["table"]["J_min"] == pytest.approx(0.35763)


@pytest.mark.parametrize("argv", [["frobnicate"], ["bench", "show", "--bench", "P9:1"],
                                  ["reduce", "--bench", "P1:3", "--seed", "x"]])
def test_usage_errors(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_seed_required(capsys, tmp_path):
    code, _, err = run(capsys, "reduce", "--bench", "P1:3", "--out", str(tmp_path))
    assert code == 2 and "seed" in err


def test_seed_from_env(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("NYQTUNE_SEED", "4")
    code, _, _ = run(capsys, "reduce", "--bench", "P1:3", *SMALL_GA, "--out", str(tmp_path))
    assert code == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 4


def test_reduce_outputs_and_determinism(capsys, tmp_path):
    docs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code, stdout, _ = run(capsys, "reduce", "--bench", "P3:10", "--seed", "3", *SMALL_GA,
                              "--grid-unit", "hz", "--out", str(out))
        assert code == 0
        docs.append((out / "reduction.json").read_bytes())
        header = (out / "nyquist.csv").read_text().splitlines()[0]
        assert header == "omega,re_true,im_true,re_model,im_model"
        man = json.loads((out / "manifest.json").read_text())
        assert man["seed"] == 3 and man["config"]["objective"]["grid_unit"] == "Hz"
        assert set(man["outputs"]) >= {"reduction.json", "nyquist.csv"}
    assert docs[0] == docs[1]


def test_rules_eval(capsys):
    code, out, _ = run(capsys, "rules", "eval", "--kind", "fopid", "--tau-max", "1.2",
                       "--tau-min", "0.8", "--L", "0.3")
    doc = json.loads(out)
    assert code == 0
    assert set(doc) == {"Kp", "Ki", "Kd", "lambda", "mu"}
    code, out, _ = run(capsys, "rules", "eval", "--tau-max", "1.2", "--tau-min", "0.8", "--L", "0.3")
    assert set(json.loads(out)) == {"Kp", "Ki", "Kd"}


def test_rules_eval_rejects_bad_input(capsys):
    assert run(capsys, "rules", "eval", "--tau-max", "1", "--tau-min", "-1", "--L", "0.3")[0] == 2


def test_rules_eval_non_unit_gain(capsys):
    code, _, err = run(capsys, "rules", "eval", "--tau-max", "1", "--tau-min", "0.5", "--L", "0.3",
                       "--K", "2")
    assert code == 1 and "unit" in err


def test_tune_and_replay(capsys, tmp_path):
    code, out, _ = run(capsys, "tune", "--bench", "P2:0.5", "--seed", "2", *SMALL_GA,
                       "--out", str(tmp_path))
    assert code == 0
    first = (tmp_path / "tuning.json").read_bytes()
    doc = json.loads(first)
    assert doc["kind"] == "PID" and doc["J"] > 0
    assert (tmp_path / "trajectory.csv").read_text().startswith("t,")
    code, _, _ = run(capsys, "replay", str(tmp_path / "manifest.json"))
    assert code == 0 and (tmp_path / "tuning.json").read_bytes() == first


def test_rules_compare(capsys, tmp_path):
    code, out, _ = run(capsys, "rules", "compare", "--bench", "P1:5", "--seed", "1", *SMALL_GA,
                       "--out", str(tmp_path))
    doc = json.loads((tmp_path / "comparison.json").read_text())
    assert code == 0 and doc["ratio"] > 0
    assert (tmp_path / "comparison.csv").read_text().splitlines()[0] == "t,y_GA,y_rule,u_GA,u_rule"


def test_gp_run_missing_dataset(capsys, tmp_path):
    code, _, _ = run(capsys, "gp", "run", "--dataset", str(tmp_path / "nope.csv"), "--target", "Kp",
                     "--seed", "1", "--out", str(tmp_path))
    assert code == 1


@pytest.fixture(scope="module")
def pipeline_runs(tmp_path_factory):
    outs = []
    for name in ("a", "b"):
        out = tmp_path_factory.mktemp(name)
        assert main(["pipeline", "full", "--seed", "1", "--kinds", "pid", "--population", "10",
                     "--generations", "5", "--gp-population", "40", "--gp-generations", "4",
                     "--out", str(out)]) == 0
        outs.append(out)
    return outs


def test_pipeline_outputs(pipeline_runs):
    out = pipeline_runs[0]
    table = (out / "table_reduction.csv").read_text().splitlines()
    assert table[0] == "class,parameter,J_min,K,tau_max,tau_min,L"
    assert len(table) == 39
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["comparisons"]) == 4
    assert summary["plants_completed"] == 38
    assert "ratio" in summary["catalog"]["PID"]
    for name in ("Kp", "Ki", "Kd"):
        assert (out / f"gp_pid_{name}_archive.json").exists()


def test_pipeline_deterministic(pipeline_runs):
    a, b = pipeline_runs
    for name in ("summary.json", "dataset.json", "dataset.csv", "gp_pid_Kp_archive.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_gp_run_on_pipeline_dataset(capsys, pipeline_runs, tmp_path):
    ds = pipeline_runs[0] / "dataset.csv"
    argv = ["gp", "run", "--dataset", str(ds), "--target", "Ki", "--seed", "5",
            "--gp-population", "30", "--gp-generations", "3"]
    code, out, _ = run(capsys, *argv, "--out", str(tmp_path / "a"))
    assert code == 0 and "expression_string" in json.loads(out)
    run(capsys, *argv, "--out", str(tmp_path / "b"))
    assert (tmp_path / "a" / "archive.json").read_bytes() == (tmp_path / "b" / "archive.json").read_bytes()
    assert run(capsys, *argv[:4], "lambda", *argv[5:], "--out", str(tmp_path / "c"))[0] == 2
