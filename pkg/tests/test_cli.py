import json

import numpy as np
import pytest

from mkfn import cli
from mkfn.data_io import load_model, save_cross_kernels, save_features_csv, save_kernel_bank
from conftest import random_bank


def _csv(path, rows, labels=None):
    with open(path, "w") as fh:
        for k, r in enumerate(rows):
            vals = [repr(float(v)) for v in r]
            if labels is not None:
                vals.append(str(int(labels[k])))
            fh.write(",".join(vals) + "\n")
    return str(path)


@pytest.fixture
def data(tmp_path):
    rng = np.random.default_rng(3)
    train = rng.standard_normal((30, 4))
    val = np.vstack([rng.standard_normal((10, 4)), rng.standard_normal((10, 4)) + 3])
    lab = np.r_[np.ones(10), -np.ones(10)]
    return {
        "dir": tmp_path,
        "train": _csv(tmp_path / "train.csv", train),
        "train_lab": _csv(tmp_path / "train_lab.csv", train, np.ones(30)),
        "val": _csv(tmp_path / "val.csv", val, lab),
        "test": _csv(tmp_path / "test.csv", val),
        "X": train,
    }


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_train_deterministic_bytes(data):
    d = data["dir"]
    for name in ("a", "b"):
        assert run("train", "--features", data["train"], "--output", d / name, "--per-attribute") == 0
    assert (d / "a").read_bytes() == (d / "b").read_bytes()
    assert len(load_model(d / "a").beta) == 4


def test_grad_matches_fixed_point(data):
    d = data["dir"]
    assert run("train", "--features", data["train"], "--output", d / "fp", "--p", "4/3", "--per-attribute",
               "--tol", "1e-12", "--max-iter", "500") == 0
    assert run("train", "--features", data["train"], "--output", d / "ga", "--p", "4/3", "--per-attribute",
               "--method", "lp-mkl-grad") == 0
    assert np.max(np.abs(load_model(d / "fp").beta - load_model(d / "ga").beta)) <= 1e-6


@pytest.mark.parametrize("method", ["lp-mkl", "fn-average", "fn-product"])
def test_grid_train_and_score(data, capsys, method):
    d = data["dir"]
    # --label-col applies to every CSV read by the command
    code = run("train", "--features", data["train_lab"], "--output", d / "m", "--grid", "--val", data["val"],
               "--label-col", "-1", "--per-attribute", "--method", method, "--format", "json-lines",
               "--p-list", "4/3,2", "--delta-mults", "1e-2,1", "--width-factors", "0.5")
    assert code == 0
    summary = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert "val_auc" in summary[0]
    assert run("score", "--model", d / "m", "--features", data["test"], "--output", d / "s") == 0
    s = np.loadtxt(d / "s")
    assert s.shape == (20,) and np.all(s <= 0)


def test_score_training_points(data, capsys):
    d = data["dir"]
    run("train", "--features", data["train"], "--output", d / "m", "--delta", "1e-9")
    assert run("score", "--model", d / "m", "--features", data["train"], "--raw") == 0
    out = np.loadtxt(capsys.readouterr().out.splitlines())
    assert np.allclose(out[:, 1], 1.0, atol=1e-4)


def test_score_empty_and_rerun(data, capsys):
    d = data["dir"]
    run("train", "--features", data["train"], "--output", d / "m")
    (d / "empty.csv").write_text("")
    capsys.readouterr()
    assert run("score", "--model", d / "m", "--features", d / "empty.csv") == 0
    assert capsys.readouterr().out == ""
    run("score", "--model", d / "m", "--features", data["test"], "--output", d / "s1")
    run("score", "--model", d / "m", "--features", data["test"], "--output", d / "s2")
    assert (d / "s1").read_bytes() == (d / "s2").read_bytes()


def test_score_recipe_mismatch(data, tmp_path):
    d = data["dir"]
    run("train", "--features", data["train"], "--output", d / "m")
    bad = _csv(tmp_path / "bad.csv", np.zeros((3, 2)))
    assert run("score", "--model", d / "m", "--features", bad) == cli.EXIT_DATA


def test_kernel_train_and_cross_score(tmp_path, rng, capsys):
    bank = random_bank(rng, 10, 3)
    save_kernel_bank(bank, tmp_path / "k.txt")
    cross = rng.uniform(size=(3, 10, 6))
    save_cross_kernels(cross, tmp_path / "c.txt")
    (tmp_path / "lab.txt").write_text("1\n1\n1\n-1\n-1\n-1\n")
    assert run("train", "--kernels", tmp_path / "k.txt", "--output", tmp_path / "m") == 0
    assert run("score", "--model", tmp_path / "m", "--cross", tmp_path / "c.txt", "--format", "json-lines") == 0
    recs = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert [r["index"] for r in recs] == list(range(6))
    model = load_model(tmp_path / "m")
    assert np.allclose([r["score"] for r in recs], model.score_bank(cross), atol=1e-15)
    assert run("train", "--kernels", tmp_path / "k.txt", "--output", tmp_path / "g", "--grid",
               "--val", tmp_path / "c.txt", "--val-labels", tmp_path / "lab.txt",
               "--p-list", "2", "--delta-mults", "1e-2") == 0
    # features scoring is impossible without a recipe
    assert run("score", "--model", tmp_path / "m", "--features", _csv(tmp_path / "x.csv", np.zeros((2, 2)))) \
        == cli.EXIT_DATA


def test_grid_l1_cycle_reports_nonconvergence(data):
    d = data["dir"]
    code = run("train", "--features", data["train_lab"], "--output", d / "m", "--grid", "--val", data["val"],
               "--label-col", "-1", "--per-attribute", "--p-list", "1", "--delta-mults", "1e-2",
               "--width-factors", "0.5")
    model = load_model(d / "m")
    assert code == (0 if model.converged else cli.EXIT_NOT_CONVERGED)
    assert np.count_nonzero(model.beta) == 1


def test_eval_labelled_csv(tmp_path, capsys):
    rng = np.random.default_rng(0)
    X = np.vstack([rng.standard_normal((40, 3)), rng.standard_normal((20, 3)) + 2.5])
    lab = np.r_[np.ones(40), -np.ones(20)]
    path = _csv(tmp_path / "all.csv", X, lab)
    code = run("eval", "--features", path, "--label-col", "-1", "--per-attribute", "--trials", "2",
               "--p-list", "2", "--delta-mults", "1e-2,1", "--width-factors", "0.5")
    assert code == 0
    cap = capsys.readouterr()
    out = cap.out.splitlines()
    assert out[-1].startswith("# summary") and len(out) == 4
    assert "J=3" in cap.err


def test_eval_synthetic(capsys):
    assert run("eval", "--synthetic", "2", "--trials", "1", "--scale", "0.05", "--method", "fn-average",
               "--format", "json-lines", "--delta-mults", "1") == 0
    recs = [json.loads(x) for x in capsys.readouterr().out.splitlines()]
    assert 0.0 <= recs[0]["auc"] <= 1.0


def test_synth_reproducible(tmp_path):
    argv = ["synth", "--experiment", "noisy", "--trials", "1", "--scale", "0.05", "--noise-range", "0,6",
            "--delta-mults", "1", "--width-factors", "0.5"]
    assert run(*argv, "--output", tmp_path / "a") == 0
    assert run(*argv, "--output", tmp_path / "b") == 0
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()
    assert run("synth", "--experiment", "views", "--trials", "1", "--scale", "0.05", "--j-range", "1,2",
               "--delta-mults", "1", "--width-factors", "0.5", "--output", tmp_path / "v") == 0
    assert (tmp_path / "v").read_text().strip()


def test_joint_train(tmp_path, rng):
    for c, n in enumerate((8, 11)):
        save_kernel_bank(random_bank(rng, n, 3), tmp_path / f"k{c}.txt")
    assert run("joint-train", "--kernels", tmp_path / "k0.txt", "--kernels", tmp_path / "k1.txt",
               "--task-names", "left,right", "--output", tmp_path / "j") == 0
    model = load_model(tmp_path / "j")
    assert model.task_names == ("left", "right") and len(model.alphas) == 2
    save_cross_kernels(rng.uniform(size=(3, 11, 2)), tmp_path / "c.txt")
    assert run("score", "--model", tmp_path / "j", "--cross", tmp_path / "c.txt", "--task", "1") == 0
    assert run("score", "--model", tmp_path / "j", "--cross", tmp_path / "c.txt", "--task", "0") == cli.EXIT_DATA
    assert run("score", "--model", tmp_path / "j", "--cross", tmp_path / "c.txt", "--task", "5") == cli.EXIT_USAGE


def test_bench(capsys):
    assert run("bench", "--n-list", "20", "--j-list", "2", "--repeats", "1") == 0
    assert capsys.readouterr().out.strip()


def test_not_converged_still_writes(data):
    d = data["dir"]
    code = run("train", "--features", data["train"], "--per-attribute", "--p", "4/3", "--max-iter", "1",
               "--tol", "1e-15", "--output", d / "m")
    assert code == cli.EXIT_NOT_CONVERGED
    assert not load_model(d / "m").converged


@pytest.mark.parametrize("argv, code", [
    (["train", "--bogus"], cli.EXIT_USAGE),
    (["train", "--features", "x.csv"], cli.EXIT_USAGE),
    (["train", "--features", "/nonexistent.csv", "--output", "/tmp/never"], cli.EXIT_DATA),
    (["score", "--model", "/nonexistent"], cli.EXIT_USAGE),
    (["score", "--model", "/nonexistent", "--cross", "c"], cli.EXIT_DATA),
    (["eval", "--trials", "1"], cli.EXIT_USAGE),
    (["bench", "--threads", "0"], cli.EXIT_USAGE),
])
def test_exit_codes(argv, code):
    assert cli.main(argv) == code


def test_fraction_parsing():
    assert cli.eval_fraction("4/3") == pytest.approx(4 / 3)
    assert cli.eval_fraction("2") == 2.0
    with pytest.raises(ZeroDivisionError):
        cli.eval_fraction("1/0")
    assert cli.main(["bench", "--p", "1/0"]) == cli.EXIT_USAGE
