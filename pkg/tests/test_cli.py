import csv
import json

import numpy as np
import pytest

from mdnmf.cli import main
from mdnmf.io import read_matrix, write_matrix
from mdnmf.audio import read_wav


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def digits(tmp_path_factory):
    out = tmp_path_factory.mktemp("digits")
    assert run("synth-mix", "--kind", "image", "--synthetic", "0,1", "--n", 30, "--seed", 4, "--out", out) == 0
    return out


def read_csv(path):
    with open(path) as f:
        return list(csv.reader(f))


# ---------------------------------------------------------------- synth-mix

def test_synth_mix_image_average(digits):
    s0, s1 = read_matrix(digits / "source_0.nmf"), read_matrix(digits / "source_1.nmf")
    np.testing.assert_allclose(read_matrix(digits / "mixed.nmf"), 0.5 * s0 + 0.5 * s1)
    np.testing.assert_allclose(read_matrix(digits / "component_1.nmf"), 0.5 * s1)
    assert s0.shape == (784, 30)
    manifest = json.loads((digits / "manifest.json").read_text())
    assert manifest["command"] == "synth-mix" and manifest["config"]["weights"] == [0.5, 0.5]


def test_synth_mix_unit_weight_returns_source(tmp_path):
    assert run("synth-mix", "--synthetic", "0,1", "--n", 5, "--weights", 1, 0, "--out", tmp_path) == 0
    np.testing.assert_array_equal(read_matrix(tmp_path / "mixed.nmf"), read_matrix(tmp_path / "source_0.nmf"))


def test_synth_mix_audio(tmp_path):
    assert run("synth-mix", "--kind", "audio", "--synthetic", "x", "--seconds", 0.5, "--out", tmp_path) == 0
    speech, rate = read_wav(tmp_path / "speech.wav")
    noise, _ = read_wav(tmp_path / "noise.wav")
    mixture, _ = read_wav(tmp_path / "mixture.wav")
    assert rate == 16000 and speech.size == mixture.size == 8000
    # float32 storage limits the achieved SNR precision
    assert 10 * np.log10((speech @ speech) / (noise @ noise)) == pytest.approx(3.0, abs=1e-4)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["snr_db"] == 3.0 and manifest["noise_scale"] > 0


def test_synth_mix_bad_inputs(tmp_path):
    assert run("synth-mix", "--out", tmp_path) == 2
    assert run("synth-mix", "--sources", tmp_path / "missing.nmf", "--out", tmp_path) == 2
    assert run("synth-mix", "--synthetic", "0,1", "--weights", 1, "--out", tmp_path) == 2


# ---------------------------------------------------------------- train

def train_args(digits, out, mode, *extra):
    return ["train", "--mode", mode, "--weak", digits / "source_0.nmf", digits / "source_1.nmf",
            "--d", 4, "--epochs", 3, "--batch-size", 16, "--lam", 1e-2, "--seed", 0, "--out", out, *extra]


@pytest.mark.parametrize("mode", ["nmf", "enmf", "mdnmf"])
def test_train_weak_modes(digits, tmp_path, mode):
    extra = ["--mixed", digits / "mixed.nmf"] if mode == "mdnmf" else []
    assert run(*train_args(digits, tmp_path, mode, *extra)) == 0
    for i in range(2):
        W = read_matrix(tmp_path / f"basis_{i}.nmf")
        assert W.shape == (784, 4) and np.all(W >= 0)
        np.testing.assert_allclose(np.linalg.norm(W, axis=0), 1.0)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["mode"] == mode
    assert (tmp_path / "trace_0.csv").exists() == (mode != "enmf")


@pytest.mark.parametrize("mode", ["dnmf", "d+mdnmf"])
def test_train_strong_modes(digits, tmp_path, mode):
    args = ["train", "--mode", mode, "--strong", digits / "component_0.nmf", digits / "component_1.nmf",
            "--mixed", digits / "mixed.nmf", "--d", 4, "--epochs", 3, "--lam", 1e-2, "--out", tmp_path]
    if mode == "d+mdnmf":
        args[3:3] = ["--weak", digits / "source_0.nmf", digits / "source_1.nmf"]
        args += ["--tau-a", 0.2]
    assert run(*args) == 0
    rows = read_csv(tmp_path / "trace_0.csv")
    assert rows[0] == ["epoch", "loss"] and len(rows) == 5
    assert all(np.isfinite(float(r[1])) for r in rows[1:])


def test_mdnmf_without_adversarial_pool_fails(tmp_path, digits):
    args = ["train", "--mode", "mdnmf", "--weak", digits / "source_0.nmf", "--d", 2, "--out", tmp_path]
    assert run(*args) == 2


def test_missing_path_fails_before_work(tmp_path):
    assert run("train", "--mode", "nmf", "--weak", tmp_path / "nope.nmf", "--out", tmp_path / "o") == 2
    assert not (tmp_path / "o").exists()


def test_inconsistent_preset_override_fails(digits, tmp_path):
    assert run(*train_args(digits, tmp_path, "nmf", "--tau-a", 0.5)) == 2


def test_rank_one_fit_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    U = np.outer(rng.random(6) + 0.1, rng.random(20) + 0.1)
    write_matrix(tmp_path / "u.nmf", U)
    assert run("train", "--mode", "nmf", "--weak", tmp_path / "u.nmf", "--d", 1, "--lam", 0.0,
               "--gamma", 1e-300, "--epochs", 200, "--out", tmp_path / "o") == 0
    final = float(read_csv(tmp_path / "o" / "trace_0.csv")[-1][1])
    assert final <= 1e-8


def test_semi_supervised_mode(digits, tmp_path):
    assert run(*train_args(digits, tmp_path / "known", "nmf")) == 0
    assert run("train", "--mode", "semi", "--known", tmp_path / "known" / "basis_0.nmf",
               "--mixed", digits / "mixed.nmf", "--d", 3, "--epochs", 5, "--lam", 1e-3,
               "--out", tmp_path / "semi") == 0
    assert read_matrix(tmp_path / "semi" / "basis_1.nmf").shape == (784, 3)
    assert run("convergence-report", "--traces", tmp_path / "semi" / "trace_1.csv") == 0
    assert run("train", "--mode", "semi", "--mixed", digits / "mixed.nmf", "--out", tmp_path / "x") == 2


def test_threads_flag(digits, tmp_path):
    assert run(*train_args(digits, tmp_path, "nmf", "--threads", 1)) == 0


def test_reruns_are_byte_identical(digits, tmp_path):
    for name in ("a", "b"):
        assert run(*train_args(digits, tmp_path / name, "mdnmf", "--mixed", digits / "mixed.nmf")) == 0
    for f in ("trace_0.csv", "trace_1.csv", "basis_0.nmf", "basis_1.nmf", "manifest.json"):
        assert (tmp_path / "a" / f).read_bytes() != b""
        if f != "manifest.json":
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_config_file_with_flag_override(digits, tmp_path):
    cfg = {"mode": "nmf", "data": {"weak": [str(digits / "source_0.nmf")]},
           "train": {"d": 2, "epochs": 2, "lam": 0.1}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("train", "--config", tmp_path / "c.json", "--d", 3, "--out", tmp_path / "o") == 0
    assert read_matrix(tmp_path / "o" / "basis_0.nmf").shape[1] == 3
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["train"] == {"d": 3, "epochs": 2, "lam": 0.1}


# ---------------------------------------------------------------- separate

def test_separate_orthogonal_toy(tmp_path):
    write_matrix(tmp_path / "w0.nmf", np.array([[1.0], [0.0]]))
    write_matrix(tmp_path / "w1.nmf", np.array([[0.0], [1.0]]))
    V = np.array([[0.6, 0.1, 0.3], [0.4, 0.8, 0.3]])
    truth0, truth1 = V * [[1], [0]], V * [[0], [1]]
    write_matrix(tmp_path / "v.nmf", V)
    write_matrix(tmp_path / "t0.nmf", truth0)
    write_matrix(tmp_path / "t1.nmf", truth1)
    cfg = {"separation": {"eps": 1e-300, "max_iters": 5000, "rel_tol": 1e-15}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert run("separate", "--config", tmp_path / "c.json", "--bases", tmp_path / "w0.nmf", tmp_path / "w1.nmf",
               "--input", tmp_path / "v.nmf", "--lam", 1e-12, "--truth", tmp_path / "t0.nmf", tmp_path / "t1.nmf",
               "--out", tmp_path / "o") == 0
    np.testing.assert_allclose(read_matrix(tmp_path / "o" / "part_0.nmf"), truth0, atol=1e-6)
    np.testing.assert_allclose(read_matrix(tmp_path / "o" / "part_1.nmf"), truth1, atol=1e-6)
    rows = read_csv(tmp_path / "o" / "report.csv")
    assert rows[0] == ["item", "psnr_0", "psnr_1", "psnr"]
    assert [r[0] for r in rows[-3:]] == ["median", "mean", "std_error"]
    assert float(rows[-3][-1]) > 100


def test_separate_shape_mismatch(tmp_path):
    write_matrix(tmp_path / "w.nmf", np.ones((3, 1)))
    write_matrix(tmp_path / "v.nmf", np.ones((4, 2)))
    assert run("separate", "--bases", tmp_path / "w.nmf", "--input", tmp_path / "v.nmf", "--out", tmp_path) == 2


def test_separate_audio(tmp_path):
    assert run("synth-mix", "--kind", "audio", "--synthetic", "x", "--seconds", 0.5, "--out", tmp_path / "m") == 0
    rng = np.random.default_rng(0)
    for i in range(2):
        write_matrix(tmp_path / f"w{i}.nmf", rng.random((257, 4)))
    assert run("separate", "--bases", tmp_path / "w0.nmf", tmp_path / "w1.nmf", "--input", tmp_path / "m" / "mixture.wav",
               "--truth", tmp_path / "m" / "speech.wav", tmp_path / "m" / "noise.wav", "--out", tmp_path / "o") == 0
    y, _ = read_wav(tmp_path / "o" / "part_0.wav")
    assert y.size == 8000
    assert read_csv(tmp_path / "o" / "report.csv")[0] == ["item", "si_sdr_0", "si_sdr_1", "si_sdr"]


# ---------------------------------------------------------------- eval

def summary(path):
    return {r[0]: r[1] for r in read_csv(path / "summary.csv")[1:]}


def test_eval_perfect_and_baseline(digits, tmp_path):
    src = [digits / "source_0.nmf", digits / "source_1.nmf"]
    assert run("eval", "--estimates", *src, "--references", *src, "--baseline", *src, "--out", tmp_path) == 0
    s = summary(tmp_path)
    assert s["median"] == "inf" and s["delta_median"] == "0.0"


def test_eval_weights_select_a_source(tmp_path):
    rng = np.random.default_rng(2)
    ref = rng.random((5, 7))
    write_matrix(tmp_path / "r.nmf", ref)
    write_matrix(tmp_path / "good.nmf", ref + 0.01)
    write_matrix(tmp_path / "bad.nmf", ref + 0.5)
    assert run("eval", "--estimates", tmp_path / "good.nmf", tmp_path / "bad.nmf",
               "--references", tmp_path / "r.nmf", tmp_path / "r.nmf", "--weights", 1, 0,
               "--baseline", tmp_path / "bad.nmf", tmp_path / "bad.nmf", "--out", tmp_path / "o") == 0
    s = summary(tmp_path / "o")
    assert float(s["median"]) == pytest.approx(40.0)
    assert float(s["delta_median"]) == pytest.approx(40.0 - 20 * np.log10(2))


def test_eval_mismatched_lists(tmp_path, digits):
    assert run("eval", "--estimates", digits / "source_0.nmf", "--references", digits / "source_0.nmf",
               digits / "source_1.nmf", "--out", tmp_path) == 2


# ---------------------------------------------------------------- convergence-report

def test_convergence_report_exit_codes(tmp_path, capsys):
    (tmp_path / "good.csv").write_text("epoch,loss\n0,3.0\n1,2.0\n2,2.0\n")
    (tmp_path / "bad.csv").write_text("epoch,loss\n0,3.0\n1,2.0\n2,2.5\n")
    assert run("convergence-report", "--traces", tmp_path / "good.csv") == 0
    assert run("convergence-report", "--traces", tmp_path / "good.csv", tmp_path / "bad.csv",
               "--out", tmp_path / "o") == 3
    rows = read_csv(tmp_path / "o" / "convergence.csv")
    assert rows[1][-1] == "yes" and rows[2][-1] == "no" and rows[2][-2] == "1"
    assert "max_relative_increase" in capsys.readouterr().out


def test_convergence_report_on_training_output(digits, tmp_path):
    assert run(*train_args(digits, tmp_path, "nmf", "--batch-size", 1000, "--epochs", 6)) == 0
    assert run("convergence-report", "--traces", tmp_path / "trace_0.csv", tmp_path / "trace_1.csv") == 0


# ---------------------------------------------------------------- tune

def tune_args(digits, out, trials):
    return ["tune", "--mode", "mdnmf", "--strong", digits / "component_0.nmf", digits / "component_1.nmf",
            "--mixed", digits / "mixed.nmf", "--trials", trials, "--folds", 2, "--seed", 5, "--out", out]


def test_tune_single_trial(digits, tmp_path):
    cfg = {"train": {"d": 3}, "search": {"trials": 1, "folds": 2, "params": {
        "lam": {"law": "log-uniform", "lo": 1e-4, "hi": 1e-1},
        "tau_a": {"law": "log-uniform", "lo": 1e-3, "hi": 1.0},
        "epochs": {"law": "int-uniform", "lo": 2, "hi": 3},
        "batch_size": {"law": "categorical", "choices": [16]}}}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    for name in ("a", "b"):
        assert run("tune", "--config", tmp_path / "c.json", *tune_args(digits, tmp_path / name, 1)[1:]) == 0
    rows = read_csv(tmp_path / "a" / "trials.csv")
    assert len(rows) == 2 and rows[1][-1] == "ok"
    best = json.loads((tmp_path / "a" / "best_config.json").read_text())
    assert best["params"] == json.loads(rows[1][1])
    assert (tmp_path / "a" / "trials.csv").read_bytes() == (tmp_path / "b" / "trials.csv").read_bytes()


def test_tune_rejects_unsupported_mode(digits, tmp_path):
    args = tune_args(digits, tmp_path, 1)
    args[2] = "semi"
    assert run(*args) == 2
