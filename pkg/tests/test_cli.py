import numpy as np
import pytest
from click.testing import CliRunner

from prnukit.cli import main
from prnukit.emphasis import load_curve
from prnukit.plane import read_plane
from prnukit.transfer import load_transfer


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """simulate -> residual -> emphasis -> transfer -> fingerprint -> detect."""
    root = tmp_path_factory.mktemp("cli")
    runner = CliRunner()

    def run(*args):
        result = runner.invoke(main, [str(a) for a in args], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        return result

    run(
        "simulate", "--spec", "smoothstep", "--sigma-k", "0.05", "--sigma-n", "0.01",
        "--count", "8", "--seed", "11", "--height", "128", "--width", "128",
        "--out", root / "captures",
    )
    run(
        "residual", "--in", root / "captures", "--out", root / "residuals",
        "--sigma0", "2.6",
    )
    run(
        "emphasis", "--residuals", root / "residuals", "--bins", "16",
        "--method", "simplified", "--iters", "2", "--out", root / "curve.csv",
    )
    run(
        "transfer", "--curve", root / "curve.csv", "--out", root / "h.csv",
    )
    run(
        "fingerprint", "--residuals", root / "residuals",
        "--scheme", f"emphasis:{root / 'curve.csv'}", "--out", root / "fp.bin",
    )
    return root, run


def test_simulate_wrote_planes(workspace):
    root, _ = workspace
    captures = sorted((root / "captures").glob("capture_*.bin"))
    assert len(captures) == 8
    plane = read_plane(captures[0])
    assert plane.shape == (128, 128)


def test_residual_pairs_written(workspace):
    root, _ = workspace
    assert len(list((root / "residuals").glob("*.w.bin"))) == 8
    assert len(list((root / "residuals").glob("*.x.bin"))) == 8


def test_emphasis_curve_loadable(workspace):
    root, _ = workspace
    curve = load_curve(root / "curve.csv")
    assert curve.bins == 16
    assert np.any(curve.valid)


def test_transfer_curve_monotone(workspace):
    root, _ = workspace
    t = load_transfer(root / "h.csv")
    assert t.values[-1] == 1.0
    assert np.all(np.diff(t.values) >= -1e-6)


def test_fingerprint_sidecar(workspace):
    root, _ = workspace
    meta = (root / "fp.bin.meta").read_text()
    assert "scheme=emphasis" in meta
    assert "source_count=8" in meta


def test_detect_scores_own_patch(workspace):
    root, run = workspace
    wfile = sorted((root / "residuals").glob("*.w.bin"))[0]
    run(
        "detect", "--fingerprint", root / "fp.bin",
        "--weights", f"emphasis:{root / 'curve.csv'}",
        "--patch", wfile, "--truth-shift", "0,0", "--out", root / "score.csv",
    )
    text = (root / "score.csv").read_text().splitlines()
    assert text[0] == "pce,shift_row,shift_col,aligned,label"
    fields = text[1].split(",")
    assert fields[4] in ("H0", "H1")


def test_emphasis_bands_output(workspace):
    root, run = workspace
    run(
        "emphasis", "--residuals", root / "residuals", "--bins", "8",
        "--out", root / "curve2.csv", "--bands", "3", "--sample", "4",
        "--seed", "9", "--bands-out", root / "bands.csv",
    )
    lines = (root / "bands.csv").read_text().splitlines()
    assert lines[0] == "bin_center,mean,std,repetitions"
    assert len(lines) == 9


def test_fixed_scheme_scale_option(workspace):
    root, run = workspace
    run(
        "fingerprint", "--residuals", root / "residuals", "--scheme", "fixed",
        "--out", root / "fp_fixed.bin",
    )
    run(
        "fingerprint", "--residuals", root / "residuals", "--scheme", "fixed",
        "--scale", "255", "--out", root / "fp_fixed255.bin",
    )
    unit = read_plane(root / "fp_fixed.bin")
    scaled = read_plane(root / "fp_fixed255.bin")
    # the 0-255 parabola is a positive multiple of the unit form, so the
    # estimate shrinks by exactly that factor
    np.testing.assert_allclose(scaled * (255.0**2 / 4.0), unit, atol=1e-9)


def test_roc_command(tmp_path):
    runner = CliRunner()
    h1 = tmp_path / "h1.csv"
    h0 = tmp_path / "h0.csv"
    h1.write_text(
        "pce,shift_row,shift_col,aligned,label\n"
        + "".join(f"{50 + i},0,0,1,H1\n" for i in range(10))
    )
    h0.write_text(
        "pce,shift_row,shift_col,aligned,label\n"
        + "".join(f"{i},0,0,,H0\n" for i in range(10))
    )
    result = runner.invoke(
        main,
        ["roc", "--h1", str(h1), "--h0", str(h0), "--out", str(tmp_path / "roc.csv")],
        catch_exceptions=False,
    )
    assert result.exit_code == 0
    assert "tpr@fpr=0.01: 1.0000" in result.output


def test_experiment_command(tmp_path):
    runner = CliRunner()
    cfg = tmp_path / "desk.cfg"
    cfg.write_text(
        "devices=2\nheight=128\nwidth=128\nsquare=96\npatch=48\n"
        "l_emphasis=4\nl_train=4\nl_test=3\nshuffles=1\norigins=1\ncrops=1\n"
        "h0_count=4\nresidual_source=inject\nsigma_k=0.02\nsigma_n=0.02\n"
    )
    result = runner.invoke(
        main,
        [
            "experiment", "--config", str(cfg), "--seed", "3",
            "--out", str(tmp_path / "out"), "--set", "sigma_k=0.03",
        ],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    assert (tmp_path / "out" / "summary.csv").exists()
    assert "baseline: tpr@fpr=0.01" in result.output


def test_version_flag():
    result = CliRunner().invoke(main, ["--version"])
    assert result.exit_code == 0
