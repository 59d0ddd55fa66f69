"""Command-line interface.

Subcommands cover the full workflow: simulate captures, ingest datasets,
extract residuals, estimate the gain curve, recover the transfer curve,
build fingerprints, score patches, and run the end-to-end identification
experiment.
"""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .detection import align_and_score
from .emphasis import (
    iterate_emphasis,
    load_curve,
    rank1_emphasis,
    regressogram_2d,
    save_curve,
    save_phi,
    symmetrize,
)
from .experiment import ExperimentConfig, run_device_id
from .fingerprint import estimate_fingerprint, load_fingerprint, save_fingerprint, weight_plane
from .ingest import ingest as ingest_tree
from .plane import load_image, read_plane, write_plane
from .preprocess import DenoiseParams, ResidualPair, extract_residual
from .simulate import TransferSpec, make_prnu, simulate_capture, smooth_scene
from .transfer import recover_transfer, save_transfer


@click.group()
@click.version_option(__version__)
def main():
    """Sensor fingerprint toolkit."""


def _resolve_scheme(text: str):
    if text in ("baseline", "fixed"):
        return text
    if text.startswith("emphasis:"):
        return load_curve(text.split(":", 1)[1])
    raise click.BadParameter(f"scheme must be baseline, fixed, or emphasis:curve.csv, got {text!r}")


def _load_capture(path: Path):
    if path.suffix == ".bin":
        return read_plane(path)
    channels = load_image(path)
    return channels[0] if len(channels) == 1 else channels


def _iter_pairs(residual_dir: Path) -> list[ResidualPair]:
    pairs = []
    for wpath in sorted(residual_dir.rglob("*.w.bin")):
        xpath = Path(str(wpath)[: -len(".w.bin")] + ".x.bin")
        if xpath.exists():
            pairs.append(ResidualPair(read_plane(wpath), read_plane(xpath), cleaned=True))
    if not pairs:
        raise click.ClickException(f"no residual pairs under {residual_dir}")
    return pairs


@main.command()
@click.option("--spec", "spec_text", required=True, help="Transfer curve, e.g. gamma:0.45 or smoothstep.")
@click.option("--sigma-k", type=float, default=0.05, show_default=True)
@click.option("--sigma-n", type=float, default=0.01, show_default=True)
@click.option("--count", type=int, default=10, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--height", type=int, default=512, show_default=True)
@click.option("--width", type=int, default=512, show_default=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--save-truth/--no-save-truth", default=False, help="Also write the fingerprint and scene planes.")
def simulate(spec_text, sigma_k, sigma_n, count, seed, height, width, out_dir, save_truth):
    """Render synthetic captures as binary planes."""
    spec = TransferSpec.parse(spec_text)
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    prnu = make_prnu(seed, height, width, sigma_k)
    if save_truth:
        truth = out / "truth"
        truth.mkdir(exist_ok=True)
        write_plane(truth / "prnu.bin", prnu.plane)
    clipped = []
    for i in range(count):
        scene = smooth_scene(seed, height, width, index=i)
        capture = simulate_capture(scene, spec, prnu, sigma_n, seed + i + 1)
        write_plane(out / f"capture_{i:04d}.bin", capture.plane)
        if save_truth:
            write_plane(out / "truth" / f"scene_{i:04d}.bin", scene)
        clipped.append(capture.clip_fraction)
    click.echo(f"wrote {count} captures to {out} (max clip fraction {max(clipped):.2e})")


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "cache_dir", type=click.Path(file_okay=False), required=True)
@click.option("--sigma0", type=float, default=3.0, show_default=True, help="Denoiser noise std on the 0-255 scale.")
@click.option("--clean/--no-clean", default=True, show_default=True)
def ingest(in_dir, cache_dir, sigma0, clean):
    """Ingest a device/<name>/*.{png,tiff} tree into a residual cache."""
    report = ingest_tree(in_dir, cache_dir, DenoiseParams(sigma0=sigma0), clean=clean)
    click.echo(f"ingested {len(report.entries)} images, skipped {report.skipped} cached")
    for path, err in report.errors:
        click.echo(f"error: {path}: {err}", err=True)
    if report.errors:
        sys.exit(1)


@main.command()
@click.option("--in", "in_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--sigma0", type=float, default=3.0, show_default=True)
@click.option("--clean/--no-clean", default=True, show_default=True)
def residual(in_dir, out_dir, sigma0, clean):
    """Extract residual pairs from captures (binary planes or images)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = DenoiseParams(sigma0=sigma0)
    paths = [
        p
        for p in sorted(Path(in_dir).iterdir())
        if p.suffix in (".bin", ".png", ".tif", ".tiff")
    ]
    if not paths:
        raise click.ClickException(f"no captures under {in_dir}")
    for path in paths:
        pair = extract_residual(_load_capture(path), params, clean=clean)
        write_plane(out / f"{path.stem}.w.bin", pair.residual)
        write_plane(out / f"{path.stem}.x.bin", pair.denoised)
    click.echo(f"extracted {len(paths)} residual pairs to {out}")


@main.command()
@click.option("--residuals", "residual_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--bins", type=int, default=32, show_default=True)
@click.option("--method", type=click.Choice(["2d", "simplified"]), default="simplified", show_default=True)
@click.option("--iters", type=int, default=2, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
@click.option("--save-phi", "phi_prefix", type=click.Path(), default=None, help="Also write the 2D regressogram grids (2d method).")
@click.option("--bands", type=int, default=0, help="Also estimate repetition bands over this many random draws.")
@click.option("--sample", type=int, default=10, show_default=True, help="Residuals per band repetition.")
@click.option("--seed", type=int, default=0, show_default=True, help="Seed for the band repetitions.")
@click.option("--bands-out", type=click.Path(dir_okay=False), default=None)
def emphasis(residual_dir, bins, method, iters, out_path, phi_prefix, bands, sample, seed, bands_out):
    """Estimate the brightness gain curve from a residual directory."""
    pairs = _iter_pairs(Path(residual_dir))
    if method == "2d":
        phi = symmetrize(regressogram_2d(pairs, bins))
        if phi_prefix:
            save_phi(f"{phi_prefix}.values.csv", f"{phi_prefix}.counts.csv", phi)
        curve = rank1_emphasis(phi)
    else:
        curve = iterate_emphasis(pairs, m=iters, bins=bins)
    save_curve(out_path, curve)
    click.echo(f"wrote gain curve ({method}) to {out_path}")
    if bands > 0:
        from .experiment import emphasis_bands, save_emphasis_bands

        target = bands_out or (str(out_path) + ".bands.csv")
        stats = emphasis_bands(
            pairs, seed, repetitions=bands, sample_size=sample, m=iters, bins=bins
        )
        save_emphasis_bands(target, *stats)
        click.echo(f"wrote {bands}-repetition bands to {target}")


@main.command()
@click.option("--curve", "curve_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--epsilon", type=float, default=1.0 / 255.0, show_default=True)
@click.option("--grid", type=int, default=1024, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def transfer(curve_path, epsilon, grid, out_path):
    """Recover the transfer curve from a gain curve CSV."""
    curve = load_curve(curve_path)
    recovered = recover_transfer(curve, epsilon, grid)
    save_transfer(out_path, recovered)
    click.echo(f"wrote transfer curve to {out_path} (normalization a={recovered.a!r})")


@main.command()
@click.option("--residuals", "residual_dir", type=click.Path(exists=True, file_okay=False), required=True)
@click.option("--scheme", "scheme_text", default="baseline", show_default=True, help="baseline, fixed, or emphasis:curve.csv")
@click.option("--scale", type=float, default=1.0, show_default=True, help="Brightness scale for the fixed parabola; 255 reproduces the -v^2+255v form. Detection is invariant to it.")
@click.option("--no-clean", is_flag=True, default=False)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def fingerprint(residual_dir, scheme_text, scale, no_clean, out_path):
    """Estimate a fingerprint from a residual directory."""
    from .fingerprint import weight_eval

    pairs = _iter_pairs(Path(residual_dir))
    scheme = _resolve_scheme(scheme_text)
    if scale != 1.0:
        if scheme != "fixed":
            raise click.BadParameter("--scale applies to the fixed scheme only")
        factor = scale * scale / 4.0  # peak of -v^2 + scale*v over peak of the unit form
        scheme = lambda x: factor * weight_eval("fixed", np.clip(x, 0.0, 1.0))
    fp = estimate_fingerprint(pairs, scheme, clean=not no_clean)
    save_fingerprint(out_path, fp)
    click.echo(
        f"wrote fingerprint from {fp.source_count} residuals to {out_path}"
        f" (starved pixels: {fp.starved})"
    )


@main.command()
@click.option("--fingerprint", "fp_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--weights", "scheme_text", default="baseline", show_default=True)
@click.option("--patch", "patch_path", type=click.Path(exists=True, dir_okay=False), required=True, help="Capture image or <stem>.w.bin of a residual pair.")
@click.option("--truth-shift", default=None, help="R,C crop origin for the H1 protocol.")
@click.option("--sigma0", type=float, default=3.0, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def detect(fp_path, scheme_text, patch_path, truth_shift, sigma0, out_path):
    """Score one patch against a fingerprint with crop-origin search."""
    fp = load_fingerprint(fp_path)
    scheme = _resolve_scheme(scheme_text)
    patch_path = Path(patch_path)
    if patch_path.name.endswith(".w.bin"):
        xpath = Path(str(patch_path)[: -len(".w.bin")] + ".x.bin")
        pair = ResidualPair(read_plane(patch_path), read_plane(xpath), cleaned=True)
    else:
        pair = extract_residual(_load_capture(patch_path), DenoiseParams(sigma0=sigma0))
    shift = None
    if truth_shift is not None:
        r, c = truth_shift.split(",")
        shift = (int(r), int(c))
    score = align_and_score(fp, weight_plane(scheme, pair.denoised), pair.residual, shift)
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["pce", "shift_row", "shift_col", "aligned", "label"])
        writer.writerow(
            [
                repr(score.pce),
                score.shift[0],
                score.shift[1],
                "" if score.aligned is None else int(score.aligned),
                score.label,
            ]
        )
    click.echo(f"pce={score.pce:.2f} shift={score.shift} label={score.label}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", type=click.Path(file_okay=False), required=True)
@click.option("--set", "overrides", multiple=True, help="key=value config override, repeatable.")
def experiment(config_path, seed, out_dir, overrides):
    """Run the device-identification experiment end to end."""
    parsed = {}
    for item in overrides:
        key, _, value = item.partition("=")
        parsed[key.strip()] = value.strip()
    if config_path:
        config = ExperimentConfig.from_file(config_path)
    else:
        config = ExperimentConfig()
    for key, value in parsed.items():
        current = getattr(config, key, None)
        if current is None:
            raise click.BadParameter(f"unknown config key {key!r}")
        if isinstance(current, int):
            value = int(value)
        elif isinstance(current, float):
            value = float(value)
        from dataclasses import replace

        config = replace(config, **{key: value})
    result = run_device_id(config, seed, out_dir)
    for name, value in result.tpr.items():
        click.echo(
            f"{name}: tpr@fpr={result.config.fpr_target} -> {value:.4f}"
            f" (ceiling {result.rocs[name].tpr_ceiling:.4f})"
        )


@main.command()
@click.option("--h1", "h1_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--h0", "h0_path", type=click.Path(exists=True, dir_okay=False), required=True)
@click.option("--fpr", type=float, default=0.01, show_default=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), required=True)
def roc(h1_path, h0_path, fpr, out_path):
    """Build the modified ROC from two score CSVs."""
    from .detection import DetectionScore
    from .experiment import roc_points, tpr_at_fpr

    def read_scores(path, h1: bool):
        scores = []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                aligned = row.get("aligned", "")
                scores.append(
                    DetectionScore(
                        float(row["pce"]),
                        (int(row["shift_row"]), int(row["shift_col"])),
                        bool(int(aligned)) if aligned != "" else None,
                        row.get("label", "H0"),
                    )
                )
        return scores

    curve = roc_points(read_scores(h1_path, True), read_scores(h0_path, False))
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["fpr", "tpr"])
        for f, t in curve.points:
            writer.writerow([repr(f), repr(t)])
    click.echo(
        f"tpr@fpr={fpr}: {tpr_at_fpr(curve, fpr):.4f} (ceiling {curve.tpr_ceiling:.4f})"
    )


if __name__ == "__main__":
    main()
