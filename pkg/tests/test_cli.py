import numpy as np
import pytest

from sympower import transforms as tf
from sympower.cli import EXIT_DIVERGED, EXIT_ERROR, main
from sympower.dataio import bundled_image, load_image
from sympower.tensor import read_tensor

FAST = ["--layers", "1", "--width", "8", "--checkpoints", "2,4", "--quiet"]


@pytest.fixture
def out(tmp_path, monkeypatch):
    monkeypatch.setenv("SYMPOWER_OUT", str(tmp_path / "out"))
    monkeypatch.chdir(tmp_path)
    return tmp_path / "out"


def test_transform_then_invert(out, capsys):
    assert main(["transform", "bundled:camera"]) == 0
    assert "beta=" in capsys.readouterr().out
    t = read_tensor(out / "camera.spt")
    assert -1 <= t.data.min() < -0.95 and 0.95 < t.data.max() <= 1
    assert main(["invert", str(out / "camera.spt"), str(out / "camera.sptp"), "back.pgm",
                 "--like", "bundled:camera"]) == 0
    assert np.abs(load_image("back.pgm").data - bundled_image("camera").data).max() < 1e-9


def test_transform_flags_reach_the_config(out):
    assert main(["transform", "bundled:text", "--xi", "0", "--kappa", "0", "--lam", "0.4"]) == 0
    p = tf.read_params(out / "text.sptp")
    assert (p.xi, p.kappa, p.lam) == (0.0, 0.0, 0.4)
    assert p.pad0 == p.pad1 == 0.0


def test_baseline_kind(out):
    assert main(["transform", "bundled:coffee", "--kind", "gamma(0.5)", "--name", "g"]) == 0
    assert tf.read_params(out / "g.sptp").kind == tf.gamma(0.5)


def test_gen(out, capsys):
    assert main(["gen", "normal", "n.spt", "--mu", "0.4", "--sigma", "0.3", "--shape", "16x16"]) == 0
    assert "skew=" in capsys.readouterr().out
    assert read_tensor(out / "n.spt").shape == (16, 16)
    assert main(["gen", "text", "t.pgm", "--levels", "3"]) == 0
    assert len(np.unique(load_image(out / "t.pgm").data)) <= 3


def test_fit_writes_report(out, capsys):
    assert main(["fit", "bundled:gradient", *FAST]) == 0
    text = capsys.readouterr().out
    assert "delta=" in text
    assert (out / "gradient_fit.csv").exists()
    assert (out / "gradient_sym-power_s0.sptn").exists()


def test_compare_and_ablate(out):
    assert main(["compare", "--inputs", "gradient", "--seeds", "1", *FAST]) == 0
    assert (out / "compare.csv").read_text().startswith("task,input,variant")
    assert main(["ablate", "--inputs", "gradient", "--seeds", "1", *FAST]) == 0
    assert "w/o cali." in (out / "ablation.csv").read_text()


def test_hypothesis_single_sweep(out, capsys):
    assert main(["hypothesis", "--sweep", "deviation", "--seeds", "1", *FAST]) == 0
    assert "spearman" in capsys.readouterr().out


def test_divergence_exit_code(out):
    with np.errstate(all="ignore"):
        rc = main(["fit", "bundled:gradient", "--lr", "1e300", "--layers", "1", "--width", "8",
                   "--checkpoints", "3,6", "--quiet"])
    assert rc == EXIT_DIVERGED


def test_errors(out, capsys):
    assert main(["transform", "missing.pgm"]) == EXIT_ERROR
    assert "error:" in capsys.readouterr().err
    assert main(["transform", "bundled:camera", "--kind", "nonsense"]) == EXIT_ERROR
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
