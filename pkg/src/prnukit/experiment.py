"""Device-identification experiments and ROC evaluation.

Builds a population of devices (synthetic by default), splits each
device's residuals into gain-estimation / training / testing sets,
estimates fingerprints under several brightness weightings, scores
same-device patches at known crop origins (H1) against mixed patches from
the other devices at unknown origins (H0), and reduces the scores to a
modified ROC whose achievable true-positive rate is capped by the
probability of finding the correct crop origin.

Everything is driven by one root seed through named derivation, so a run
is reproducible byte for byte.
"""

from __future__ import annotations

import csv
import hashlib
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .detection import DetectionScore, align_and_score
from .emphasis import EmphasisCurve, iterate_emphasis, save_curve
from .fingerprint import estimate_fingerprint, weight_plane
from .plane import PlaneError
from .preprocess import DenoiseParams, ResidualPair, extract_residual
from .seeds import derive_rng
from .simulate import (
    PrnuPattern,
    TransferSpec,
    simulate_capture,
    smooth_scene,
    transfer_derivative,
)

SCHEMES = ("baseline", "emphasis", "fixed")


@dataclass
class ExperimentConfig:
    """Knobs for one device-identification run.

    Defaults follow the full-scale protocol (2000x2000 squares, 512x512
    patches, 10 shuffles/origins/crops); desk-scale runs shrink them.
    """

    devices: int = 3
    transfer: str = "smoothstep"
    sigma_k: float = 0.05
    sigma_n: float = 0.02
    height: int = 2000
    width: int = 2000
    l_emphasis: int = 10
    l_train: int = 15
    l_test: int = 15
    square: int = 2000
    patch: int = 512
    bins: int = 32
    iterations: int = 2
    shuffles: int = 10
    origins: int = 10
    crops: int = 10
    h0_count: int = 100
    fpr_target: float = 0.01
    residual_source: str = "denoise"  # "denoise" runs the full pipeline, "inject" skips it
    sigma0: float = 3.0  # denoiser noise floor, 0-255 scale; match to sigma_n * 255
    scene_marginal: str = "bright"  # brightness mass profile of synthetic scenes
    dataset_dir: str = ""  # when set, residuals come from an ingested cache

    @property
    def l_total(self) -> int:
        return self.l_emphasis + self.l_train + self.l_test

    def validate(self, available_per_device: int | None = None) -> None:
        counts = {
            "devices": self.devices,
            "l_emphasis": self.l_emphasis,
            "l_train": self.l_train,
            "l_test": self.l_test,
            "square": self.square,
            "patch": self.patch,
            "bins": self.bins,
            "iterations": self.iterations,
            "shuffles": self.shuffles,
            "origins": self.origins,
            "crops": self.crops,
            "h0_count": self.h0_count,
        }
        for name, value in counts.items():
            if value < 1:
                raise ValueError(f"{name} must be >= 1, got {value}")
        if self.devices < 2:
            raise ValueError("need at least 2 devices for an H0 pool")
        if self.patch >= self.square:
            raise ValueError("patch must be smaller than the square")
        if not self.dataset_dir:
            if self.square > min(self.height, self.width):
                raise ValueError("square exceeds the simulated image size")
            if self.residual_source not in ("denoise", "inject"):
                raise ValueError(f"unknown residual source {self.residual_source!r}")
        available = available_per_device if available_per_device is not None else self.l_total
        if self.l_total > available:
            raise ValueError(
                f"splits need {self.l_total} residuals per device, only {available} available"
            )

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Read key=value lines; unknown keys are rejected."""
        values: dict = {}
        known = {f.name: f.type for f in fields(cls)}
        for raw in Path(path).read_text().splitlines():
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if not sep or key not in known:
                raise ValueError(f"{path}: bad config line {raw!r}")
            values[key] = val
        config = cls()
        for key, val in values.items():
            current = getattr(config, key)
            if isinstance(current, int):
                config = replace(config, **{key: int(val)})
            elif isinstance(current, float):
                config = replace(config, **{key: float(val)})
            else:
                config = replace(config, **{key: val})
        for key, val in overrides.items():
            config = replace(config, **{key: val})
        return config

    def digest(self) -> str:
        text = ",".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class RocCurve:
    """(fpr, tpr) points sorted by fpr, with the alignment ceiling."""

    points: list[tuple[float, float]]
    tpr_ceiling: float

    def __post_init__(self):
        fprs = [p[0] for p in self.points]
        tprs = [p[1] for p in self.points]
        if any(b < a - 1e-12 for a, b in zip(fprs, fprs[1:])):
            raise ValueError("fpr values must be nondecreasing")
        if any(b < a - 1e-12 for a, b in zip(tprs, tprs[1:])):
            raise ValueError("tpr values must be nondecreasing")
        if any(t > self.tpr_ceiling + 1e-12 for t in tprs):
            raise ValueError("tpr exceeds the alignment ceiling")


def roc_points(h1_scores, h0_scores) -> RocCurve:
    """Threshold sweep over the union of observed PCE values.

    H1 samples whose alignment failed count as misses at every threshold,
    which caps the reachable TPR at the fraction of aligned H1 samples.
    """
    if not h1_scores or not h0_scores:
        raise ValueError("both score lists must be nonempty")
    h1_pce = np.array([s.pce for s in h1_scores])
    h1_hit = np.array([bool(s.aligned) for s in h1_scores])
    h0_pce = np.array([s.pce for s in h0_scores])
    ceiling = float(np.mean(h1_hit))
    thresholds = np.unique(np.concatenate([h1_pce, h0_pce]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        tpr = float(np.mean(h1_hit & (h1_pce >= t)))
        fpr = float(np.mean(h0_pce >= t))
        points.append((fpr, tpr))
    points.append((1.0, ceiling))
    points.sort(key=lambda p: (p[0], p[1]))
    return RocCurve(points, ceiling)


def tpr_at_fpr(curve: RocCurve, fpr: float) -> float:
    """Largest TPR among points at or below the target FPR (step convention)."""
    if not 0.0 <= fpr <= 1.0:
        raise ValueError("fpr target must lie in [0, 1]")
    eligible = [t for f, t in curve.points if f <= fpr]
    return max(eligible) if eligible else 0.0


def _crop(pair: ResidualPair, origin: tuple[int, int], size: int) -> ResidualPair:
    r0, c0 = origin
    return ResidualPair(
        pair.residual[r0 : r0 + size, c0 : c0 + size],
        pair.denoised[r0 : r0 + size, c0 : c0 + size],
        pair.cleaned,
    )


def build_synthetic_population(config: ExperimentConfig, seed: int):
    """Residual pairs and gain oracles for a simulated device population.

    Returns (pairs_by_device, transfer_spec). In ``inject`` mode the
    denoiser is bypassed: residuals are written directly as the
    gain-scaled fingerprint plus white noise, with the exact brightness
    plane as covariate.
    """
    spec = TransferSpec.parse(config.transfer)
    spec.validate()
    population = []
    for d in range(config.devices):
        rng_k = derive_rng(seed, "population-prnu", d)
        prnu = PrnuPattern(
            rng_k.standard_normal((config.height, config.width)), config.sigma_k
        )
        pairs = []
        for i in range(config.l_total):
            scene = smooth_scene(
                seed,
                config.height,
                config.width,
                index=d * 100003 + i,
                marginal=config.scene_marginal,
            )
            if config.residual_source == "inject":
                x = spec(scene)
                gain = scene * transfer_derivative(spec, scene)
                residual = gain * (config.sigma_k * prnu.plane)
                if config.sigma_n > 0:
                    rng_n = derive_rng(seed, "inject-noise", d, i)
                    residual = residual + config.sigma_n * rng_n.standard_normal(x.shape)
                pairs.append(ResidualPair(residual, x))
            else:
                capture = simulate_capture(
                    scene, spec, prnu, config.sigma_n, _capture_seed(seed, d, i)
                )
                pairs.append(
                    extract_residual(capture.plane, DenoiseParams(sigma0=config.sigma0))
                )
        population.append(pairs)
    return population, spec


def _capture_seed(seed: int, device: int, image: int) -> int:
    rng = derive_rng(seed, "capture-seed", device, image)
    return int(rng.integers(0, 2**63 - 1))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    seed: int
    rocs: dict[str, RocCurve]
    tpr: dict[str, float]
    h1_count: int
    h0_count: int
    emphasis_curves: list[EmphasisCurve] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)


def run_device_id(
    config: ExperimentConfig,
    seed: int,
    out_dir=None,
    population=None,
) -> ExperimentResult:
    """Full identification experiment; see the module docstring.

    ``population`` (device -> list of ResidualPair) overrides the builtin
    synthetic source, e.g. for residual caches ingested from disk.
    """
    t0 = time.perf_counter()
    timings: dict[str, float] = {}
    if population is None:
        if config.dataset_dir:
            from .ingest import load_residual_cache

            cache = load_residual_cache(config.dataset_dir)
            population = [cache[name] for name in sorted(cache)]
        else:
            config.validate()
            population, _ = build_synthetic_population(config, seed)
    if len(population) < config.devices:
        raise ValueError(
            f"population has {len(population)} devices, config wants {config.devices}"
        )
    population = population[: config.devices]
    config.validate(min(len(p) for p in population))
    for pairs in population:
        for p in pairs:
            if p.residual.shape[0] < config.square or p.residual.shape[1] < config.square:
                raise PlaneError("residual smaller than the experiment square")
    timings["population"] = time.perf_counter() - t0

    t1 = time.perf_counter()
    h1_scores: dict[str, list[DetectionScore]] = {s: [] for s in SCHEMES}
    h0_scores: dict[str, list[DetectionScore]] = {s: [] for s in SCHEMES}
    first_curves: list[EmphasisCurve] = []

    for s in range(config.shuffles):
        splits = []
        for d in range(config.devices):
            rng = derive_rng(seed, "shuffle", s, d)
            perm = rng.permutation(len(population[d]))
            splits.append(
                (
                    perm[: config.l_emphasis],
                    perm[config.l_emphasis : config.l_emphasis + config.l_train],
                    perm[config.l_emphasis + config.l_train : config.l_total],
                )
            )
        curves = []
        for d in range(config.devices):
            emphasis_ids = splits[d][0]
            curve = iterate_emphasis(
                [population[d][i] for i in emphasis_ids],
                m=config.iterations,
                bins=config.bins,
            )
            curves.append(curve)
        if s == 0:
            first_curves = curves

        for d in range(config.devices):
            _, train_ids, test_ids = splits[d]
            scheme_objects = {
                "baseline": "baseline",
                "emphasis": curves[d],
                "fixed": "fixed",
            }
            for o in range(config.origins):
                rng_o = derive_rng(seed, "train-origin", s, d, o)
                origin = _random_origin(rng_o, population[d][0].residual.shape, config.square)
                train_cropped = [
                    _crop(population[d][i], origin, config.square) for i in train_ids
                ]
                fps = {
                    name: estimate_fingerprint(train_cropped, obj)
                    for name, obj in scheme_objects.items()
                }
                for c in range(config.crops):
                    for t_idx, i in enumerate(test_ids):
                        rng_c = derive_rng(seed, "h1-crop", s, d, o, c, t_idx)
                        square_pair = _crop(population[d][i], origin, config.square)
                        crop_pt = _random_origin(
                            rng_c, square_pair.residual.shape, config.patch
                        )
                        patch_pair = _crop(square_pair, crop_pt, config.patch)
                        for name, obj in scheme_objects.items():
                            wplane = weight_plane(obj, patch_pair.denoised)
                            h1_scores[name].append(
                                align_and_score(
                                    fps[name], wplane, patch_pair.residual, crop_pt
                                )
                            )
                for n in range(config.h0_count):
                    rng_h = derive_rng(seed, "h0-sample", s, d, o, n)
                    other = int(rng_h.integers(0, config.devices - 1))
                    other = other if other < d else other + 1
                    other_test = splits[other][2]
                    img = other_test[int(rng_h.integers(0, len(other_test)))]
                    h0_origin = _random_origin(
                        rng_h, population[other][img].residual.shape, config.square
                    )
                    square_pair = _crop(population[other][img], h0_origin, config.square)
                    crop_pt = _random_origin(rng_h, square_pair.residual.shape, config.patch)
                    patch_pair = _crop(square_pair, crop_pt, config.patch)
                    for name, obj in scheme_objects.items():
                        wplane = weight_plane(obj, patch_pair.denoised)
                        h0_scores[name].append(
                            align_and_score(fps[name], wplane, patch_pair.residual)
                        )
    timings["scoring"] = time.perf_counter() - t1

    rocs = {name: roc_points(h1_scores[name], h0_scores[name]) for name in SCHEMES}
    tpr = {name: tpr_at_fpr(rocs[name], config.fpr_target) for name in SCHEMES}
    result = ExperimentResult(
        config,
        seed,
        rocs,
        tpr,
        len(h1_scores["baseline"]),
        len(h0_scores["baseline"]),
        first_curves,
        timings,
    )
    if out_dir is not None:
        write_experiment_outputs(result, out_dir)
    return result


def _random_origin(rng, shape, size) -> tuple[int, int]:
    return (
        int(rng.integers(0, shape[0] - size + 1)),
        int(rng.integers(0, shape[1] - size + 1)),
    )


def emphasis_bands(
    pairs,
    seed: int,
    *,
    repetitions: int = 50,
    sample_size: int = 10,
    m: int = 2,
    bins: int = 32,
):
    """Repetition bands for the gain curve.

    Each repetition draws ``sample_size`` residual pairs without
    replacement, estimates the gain with the iterative 1D route, and the
    per-bin mean and standard deviation over repetitions are returned as
    (centers, mean, std, valid_repetition_count) arrays. Bins a repetition
    left empty are excluded from that repetition's statistics.
    """
    pairs = list(pairs)
    if sample_size > len(pairs):
        raise ValueError(
            f"sample_size {sample_size} exceeds available pairs {len(pairs)}"
        )
    sums = np.zeros(bins)
    squares = np.zeros(bins)
    hits = np.zeros(bins, dtype=np.int64)
    centers = None
    for rep in range(repetitions):
        rng = derive_rng(seed, "emphasis-band", rep)
        chosen = rng.choice(len(pairs), size=sample_size, replace=False)
        curve = iterate_emphasis([pairs[i] for i in chosen], m=m, bins=bins)
        centers = curve.centers
        ok = curve.valid
        sums[ok] += curve.values[ok]
        squares[ok] += curve.values[ok] ** 2
        hits[ok] += 1
    mean = np.full(bins, np.nan)
    std = np.full(bins, np.nan)
    seen = hits > 0
    mean[seen] = sums[seen] / hits[seen]
    spread = np.zeros(bins)
    spread[seen] = np.maximum(squares[seen] / hits[seen] - mean[seen] ** 2, 0.0)
    std[seen] = np.sqrt(spread[seen])
    return centers, mean, std, hits


def save_emphasis_bands(path, centers, mean, std, hits) -> None:
    """CSV rows ``bin_center,mean,std,repetitions``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "mean", "std", "repetitions"])
        for c, m_, s, h in zip(centers, mean, std, hits):
            writer.writerow(
                [
                    repr(float(c)),
                    "" if not np.isfinite(m_) else repr(float(m_)),
                    "" if not np.isfinite(s) else repr(float(s)),
                    int(h),
                ]
            )


def write_experiment_outputs(result: ExperimentResult, out_dir) -> None:
    """Summary CSV, per-scheme ROC CSVs, per-device gain curves, manifest.

    All CSVs are deterministic for a fixed config and seed; wall-clock
    timings go only to the manifest.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["scheme", "tpr_at_fpr", "fpr_target", "tpr_ceiling", "h1_count", "h0_count"]
        )
        for name in SCHEMES:
            writer.writerow(
                [
                    name,
                    repr(result.tpr[name]),
                    repr(result.config.fpr_target),
                    repr(result.rocs[name].tpr_ceiling),
                    result.h1_count,
                    result.h0_count,
                ]
            )
    for name in SCHEMES:
        with open(out / f"roc_{name}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["fpr", "tpr"])
            for f, t in result.rocs[name].points:
                writer.writerow([repr(f), repr(t)])
    for d, curve in enumerate(result.emphasis_curves):
        save_curve(out / f"emphasis_device{d}.csv", curve)
    from . import __version__

    manifest = [
        f"config_digest={result.config.digest()}",
        f"seed={result.seed}",
        f"version={__version__}",
    ]
    manifest += [f"timing_{k}={v:.3f}" for k, v in result.timings.items()]
    (out / "manifest.txt").write_text("\n".join(manifest) + "\n")
