import json

import numpy as np
from pytest import approx, fixture, mark

from latentknn import __version__
from latentknn.cli import run
from latentknn.obsdata import ObservationTensor, load_observations, load_tensor, save_tensor
from latentknn.synthgen import LatentModelSpec, sample_instance

WORKED = "2,3\n1,1,1.0\n1,2,2.0\n2,1,0.0\n2,2,1.0\n2,3,5.0\n"

MODEL = {
    "m": 20,
    "n": 20,
    "latent_fn": "logistic-of-sum",
    "latent_measure": {"kind": "uniform-cube", "d": 1},
    "noise": {"kind": "uniform", "bound": 0.1},
    "p": 0.5,
}


@fixture
def worked_file(tmp_path):
    path = tmp_path / "worked.csv"
    path.write_text(WORKED)
    return path


@fixture
def model_file(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps(MODEL))
    return path


@fixture
def synth_dir(tmp_path, model_file):
    out = tmp_path / "synth"
    assert run(["--quiet", "synth", "--spec", str(model_file), "--seed", "3", "--out-dir", str(out)]) == 0
    return out


def test_complete_worked_instance(tmp_path, worked_file):
    out = tmp_path / "est"
    code = run(["--quiet", "complete", "--input", str(worked_file), "--k", "1", "--beta", "2", "--out-dir", str(out)])
    assert code == 0
    assert (out / "estimate.csv").read_text() == "1.0,2.0,6.0\n0.0,1.0,5.0\n"

    report = json.loads((out / "report.json").read_text())
    assert report["shape"] == [2, 3]
    assert report["summary"]["estimated"] == 1
    assert report["manifest"]["command"] == "complete"
    assert "duration_seconds" not in report["manifest"]
    assert json.loads((out / "manifest.json").read_text())["duration_seconds"] is not None


def test_complete_falls_back(tmp_path, worked_file):
    out = tmp_path / "est"
    args = ["--quiet", "complete", "--input", str(worked_file), "--beta", "3", "--fallback", "global-mean"]
    assert run(args + ["--out-dir", str(out)]) == 0
    estimate = load_observations(out / "estimate.csv", "dense-csv")
    assert estimate.value(0, 2) == approx(9.0 / 5)


def test_bad_beta_is_config_error(tmp_path, worked_file):
    assert run(["complete", "--input", str(worked_file), "--beta", "1", "--out-dir", str(tmp_path)]) == 2


def test_usage_errors(tmp_path):
    assert run(["complete", "--out-dir", str(tmp_path)]) == 2
    assert run(["complete", "--input", "x.csv", "--k", "many", "--out-dir", str(tmp_path)]) == 2
    assert run([]) == 2


def test_malformed_input_is_data_error(tmp_path, capsys):
    path = tmp_path / "bad.csv"
    path.write_text("2,2\n1,1,5.0\n1,x,2.0\n")
    assert run(["complete", "--input", str(path), "--out-dir", str(tmp_path / "out")]) == 3
    assert "line 3" in capsys.readouterr().err


def test_duplicate_and_missing_input(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("2,2\n1,1,5.0\n1,1,4.0\n")
    assert run(["complete", "--input", str(path), "--out-dir", str(tmp_path / "out")]) == 3
    assert run(["complete", "--input", str(tmp_path / "absent.csv"), "--out-dir", str(tmp_path / "out")]) == 3


def test_version(capsys):
    assert run(["--version"]) == 0
    assert __version__ in capsys.readouterr().out


def test_synth_artifacts(synth_dir, tmp_path, model_file):
    for name in ("observed.csv", "truth.csv", "spec.json", "manifest.json"):
        assert (synth_dir / name).exists()
    obs = load_observations(synth_dir / "observed.csv")
    truth = load_observations(synth_dir / "truth.csv", "dense-csv")
    assert obs.shape == truth.shape == (20, 20)
    assert len(truth) == 400

    again = tmp_path / "again"
    run(["--quiet", "synth", "--spec", str(model_file), "--seed", "3", "--out-dir", str(again)])
    assert (again / "observed.csv").read_bytes() == (synth_dir / "observed.csv").read_bytes()
    assert (again / "spec.json").read_bytes() == (synth_dir / "spec.json").read_bytes()


def test_thread_count_does_not_change_output(tmp_path, synth_dir):
    outputs = []
    for threads in ("1", "8"):
        out = tmp_path / f"est{threads}"
        code = run(["--quiet", "--threads", threads, "complete", "--input", str(synth_dir / "observed.csv"),
                    "--k", "3", "--out-dir", str(out)])
        assert code == 0
        outputs.append(((out / "estimate.csv").read_bytes(), (out / "report.json").read_bytes()))
    assert outputs[0] == outputs[1]


def test_evaluate_estimate_against_itself(tmp_path, worked_file, capsys):
    out = tmp_path / "est"
    run(["--quiet", "complete", "--input", str(worked_file), "--k", "1", "--out-dir", str(out)])
    capsys.readouterr()
    estimate = str(out / "estimate.csv")
    assert run(["evaluate", "--estimate", estimate, "--truth", estimate]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["mse"] == 0.0
    assert result["rmse"] == 0.0
    assert result["cells"] == 6


def test_split_complete_evaluate(tmp_path, synth_dir):
    split = tmp_path / "split"
    args = ["--quiet", "split", "--input", str(synth_dir / "observed.csv"), "--fraction", "0.2", "--seed", "1"]
    assert run(args + ["--out-dir", str(split)]) == 0
    report = json.loads((split / "report.json").read_text())
    total = len(load_observations(synth_dir / "observed.csv"))
    assert report["train_entries"] + report["test_entries"] == total
    assert report["test_entries"] == total // 5

    est = tmp_path / "est"
    assert run(["--quiet", "complete", "--input", str(split / "train.csv"), "--beta", "auto", "--k", "auto",
                "--out-dir", str(est)]) == 0
    scores = tmp_path / "scores.json"
    code = run(["evaluate", "--estimate", str(est / "estimate.csv"), "--truth", str(synth_dir / "truth.csv"),
                "--test", str(split / "test.csv"), "--metrics", "mse,rmse", "--output", str(scores)])
    assert code == 0
    result = json.loads(scores.read_text())
    assert result["rmse"] == approx(np.sqrt(result["mse"]))
    assert result["manifest"]["config"]["scope"] == "test-set"


@mark.parametrize("against, expected", [([], 2.0), (["--score-against", "truth"], 2.0),
                                         (["--score-against", "holdout"], 2.5)])
def test_evaluate_test_cells_against_truth_or_holdout(tmp_path, capsys, against, expected):
    estimate = tmp_path / "estimate.csv"
    estimate.write_text("1.0,2.0\n3.0,4.0\n")
    truth = tmp_path / "truth.csv"
    truth.write_text("1.0,2.0\n3.0,6.0\n")
    test = tmp_path / "test.csv"
    # held-out (1,1) is a noisy 2.0 where the truth is 1.0
    test.write_text("2,2\n1,1,2.0\n2,2,6.0\n")

    code = run(["evaluate", "--estimate", str(estimate), "--truth", str(truth), "--test", str(test),
                "--metrics", "mse"] + against)
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["mse"] == approx(expected)
    assert result["cells"] == 2


def test_evaluate_truth_must_cover_test_cells(tmp_path):
    estimate = tmp_path / "estimate.csv"
    estimate.write_text("1.0,2.0\n3.0,4.0\n")
    truth = tmp_path / "truth.csv"
    truth.write_text("1.0,2.0\n3.0,NA\n")
    test = tmp_path / "test.csv"
    test.write_text("2,2\n2,2,6.0\n")
    args = ["evaluate", "--estimate", str(estimate), "--truth", str(truth), "--test", str(test)]
    assert run(args) == 3
    assert run(args + ["--score-against", "holdout", "--metrics", "mse"]) == 0


def test_evaluate_constant_truth_is_numeric_error(tmp_path):
    truth = tmp_path / "truth.csv"
    truth.write_text("1.0,1.0\n1.0,1.0\n")
    code = run(["evaluate", "--estimate", str(truth), "--truth", str(truth), "--metrics", "rse"])
    assert code == 4


def test_evaluate_unknown_metric(tmp_path):
    truth = tmp_path / "truth.csv"
    truth.write_text("1.0,2.0\n")
    assert run(["evaluate", "--estimate", str(truth), "--truth", str(truth), "--metrics", "mae"]) == 2


def test_bound_matrix_report(capsys):
    code = run(["bound", "--kind", "matrix", "--m", "10000", "--n", "10000", "--p", "0.1",
                "--beta", "50", "--k", "1.25", "--gamma-sq", "0.0833"])
    assert code == 0
    report = json.loads(capsys.readouterr().out)
    assert report["F2"] == approx(0.2714417616594907)
    assert report["kind"] == "matrix"
    assert report["mse_bound"] >= 0


def test_bound_auto_parameters(capsys):
    assert run(["bound", "--m", "10000", "--n", "10000", "--p", "0.1", "--beta", "auto", "--k", "auto"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["params"]["beta"] == approx(50)
    assert report["params"]["k"] == approx(1.25)


def test_bound_tail_and_domain_errors(capsys, tmp_path):
    out = tmp_path / "tail.json"
    assert run(["bound", "--kind", "tail", "--m", "10000", "--n", "10000", "--p", "0.1", "--eps", "0.5",
                "--output", str(out)]) == 0
    assert 0.0 <= json.loads(out.read_text())["bound"] <= 1.0
    assert run(["bound", "--kind", "tail", "--m", "10000", "--n", "10000", "--p", "0.1", "--eps", "0.1"]) == 4
    assert run(["bound", "--kind", "tail", "--m", "10000", "--n", "10000", "--p", "0.1"]) == 2
    assert run(["bound", "--kind", "matrix", "--n", "10", "--p", "0.1"]) == 2


def test_bound_tensor(capsys):
    assert run(["bound", "--kind", "tensor", "--shape", "20,20,20", "--p", "0.5"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_prime"] == 361
    assert report["validity_flags"]["theta_below_one"] is True
    # both column dimensions of size 2 give theta = 2
    assert run(["bound", "--kind", "tensor", "--shape", "5,2,2", "--p", "0.5"]) == 4


def test_tensor_complete(tmp_path):
    instance = sample_instance(LatentModelSpec(shape=(4, 5, 6), p=0.6, seed=2))
    source = tmp_path / "tensor.csv"
    save_tensor(instance.observed, source)
    out = tmp_path / "tensor"
    code = run(["--quiet", "tensor-complete", "--input", str(source), "--partition", "explicit:1|2,3",
                "--exact-exclusion", "--k", "2", "--out-dir", str(out)])
    assert code == 0

    estimate = load_tensor(out / "estimate.csv")
    assert estimate.shape == (4, 5, 6)
    assert len(estimate) == 120
    report = json.loads((out / "report.json").read_text())
    assert report["flattened"] == [4, 30]
    assert report["n_prime"] == 20
    assert report["manifest"]["config"]["partition"] == "1|2,3"
    flat = load_observations(out / "estimate_flat.csv", "dense-csv")
    assert flat.shape == (4, 30)


def test_tensor_complete_bad_partition(tmp_path):
    source = tmp_path / "tensor.csv"
    save_tensor(ObservationTensor.from_dense(np.ones((2, 2, 2))), source)
    for partition in ("diagonal", "explicit:1|1"):
        assert run(["tensor-complete", "--input", str(source), "--partition", partition,
                    "--out-dir", str(tmp_path / "out")]) == 2


def test_sweep(tmp_path, model_file):
    out = tmp_path / "sweep"
    code = run(["--quiet", "sweep", "--spec", str(model_file), "--sizes", "8,10", "--seeds", "2",
                "--k", "2", "--out-dir", str(out)])
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert lines[0].split(",")[:2] == ["size", "seed"]
    assert len(lines) == 5
    report = json.loads((out / "report.json").read_text())
    assert report["summary"]["runs"] == 4
    assert set(report["mean_mse_estimated"]) == {"8", "10"}


def test_sweep_output_independent_of_threads(tmp_path, model_file):
    outputs = []
    for index, threads in enumerate(("1", "8", "8")):
        out = tmp_path / f"sweep{index}"
        code = run(["--quiet", "--threads", threads, "sweep", "--spec", str(model_file), "--sizes", "12,16",
                    "--seeds", "3", "--k", "2", "--out-dir", str(out)])
        assert code == 0
        outputs.append(((out / "sweep.csv").read_bytes(), (out / "report.json").read_bytes()))
    assert outputs[0] == outputs[1] == outputs[2]


def test_config_command(capsys, isolated_config):
    assert run(["config", "--set", "k=10", "--set", "fallback=global-mean"]) == 0
    shown = json.loads(capsys.readouterr().out)
    assert shown["k"] == 10
    assert shown["fallback"] == "global-mean"
    assert (isolated_config / "latentknn_config.json").exists()

    assert run(["config", "--reset"]) == 0
    assert json.loads(capsys.readouterr().out)["k"] == 5
    assert run(["config", "--set", "neighbours=3"]) == 2
    assert run(["config", "--set", "k"]) == 2


@mark.parametrize("setting, flag", [("k=1", []), ("k=5", ["--k", "1"])])
def test_flags_override_settings(tmp_path, worked_file, setting, flag):
    run(["config", "--set", setting])
    out = tmp_path / "est"
    assert run(["--quiet", "complete", "--input", str(worked_file), "--out-dir", str(out)] + flag) == 0
    report = json.loads((out / "report.json").read_text())
    assert report["manifest"]["config"]["estimator"]["k"] == 1
