"""Fingerprint estimation under interchangeable brightness weightings.

The estimator is an element-wise ratio: residuals weighted by a function
of their denoised brightness, summed and divided by the summed squared
weights. Three weighting rules are supported:

* ``baseline``: weight equals the brightness itself,
* ``emphasis``: weight follows an estimated gain curve,
* ``fixed``: an inverse parabola peaking at mid-brightness, a
  computation-free stand-in for the estimated gain.

The detection statistic downstream is invariant to positive scaling of
the weights, so all rules are normalized for convenience, not for effect.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .emphasis import DENOM_GUARD, EstimationError, canonical_order, reference_accumulators
from .plane import as_plane, read_plane, write_plane
from .preprocess import clean_residual


@dataclass
class FingerprintEstimate:
    """Estimated fingerprint plane (carries the sigma_k scale).

    ``starved`` counts pixels whose weight-energy denominator underflowed;
    those output 0.
    """

    plane: np.ndarray
    weight_scheme: str
    source_count: int
    starved: int = 0
    cleaned: bool = False


def weight_eval(scheme, x):
    """Evaluate a weighting rule at brightness x in [0, 1].

    ``scheme`` is ``"baseline"``, ``"fixed"``, an emphasis curve, or any
    callable. The fixed rule is 4 * x * (1 - x): the inverse parabola on
    the unit interval normalized to peak at 1.
    """
    arr = np.asarray(x, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("brightness outside [0, 1]")
    if isinstance(scheme, str):
        if scheme == "baseline":
            out = arr.copy()
        elif scheme == "fixed":
            out = 4.0 * arr * (1.0 - arr)
        else:
            raise ValueError(f"unknown weight scheme {scheme!r}")
    elif hasattr(scheme, "evaluate"):
        out = np.asarray(scheme.evaluate(arr), dtype=np.float64)
    elif callable(scheme):
        out = np.asarray(scheme(arr), dtype=np.float64)
    else:
        raise TypeError(f"unsupported weight scheme {type(scheme)!r}")
    return float(out) if np.isscalar(x) else out


def scheme_name(scheme) -> str:
    if isinstance(scheme, str):
        return scheme
    if hasattr(scheme, "evaluate"):
        return "emphasis"
    return "custom"


def weight_plane(scheme, denoised: np.ndarray) -> np.ndarray:
    """Weight rule evaluated on a denoised plane, clamped into [0, 1] first."""
    x = np.clip(as_plane(denoised, name="denoised"), 0.0, 1.0)
    return weight_eval(scheme, x)


def estimate_fingerprint(pairs, scheme="baseline", *, clean: bool = True) -> FingerprintEstimate:
    """Weighted ratio estimate of the fingerprint from residual pairs.

    Accumulation runs in the content-canonical pair order, so the estimate
    is independent of how the input list happens to be ordered. With
    ``clean`` the result is zero-meaned and spectrally Wiener-filtered,
    mirroring the cleaning applied to individual residuals.
    """
    pairs = canonical_order(pairs)
    if not pairs:
        raise EstimationError("need at least one residual pair")
    weight = scheme if not isinstance(scheme, str) else None
    if isinstance(scheme, str):
        if scheme == "baseline":
            weight = None
        elif scheme == "fixed":
            weight = lambda x: weight_eval("fixed", np.clip(x, 0.0, 1.0))
        else:
            raise ValueError(f"unknown weight scheme {scheme!r}")
    _, _, num, den = reference_accumulators(pairs, weight)
    plane = np.zeros_like(num)
    ok = den >= DENOM_GUARD
    np.divide(num, den, out=plane, where=ok)
    starved = int(plane.size - np.count_nonzero(ok))
    if clean:
        plane = clean_residual(plane)
    return FingerprintEstimate(plane, scheme_name(scheme), len(pairs), starved, clean)


def save_fingerprint(path, fp: FingerprintEstimate) -> None:
    """Plane in the shared binary format plus a key=value sidecar."""
    write_plane(path, fp.plane)
    meta = Path(str(path) + ".meta")
    meta.write_text(
        f"scheme={fp.weight_scheme}\n"
        f"source_count={fp.source_count}\n"
        f"starved={fp.starved}\n"
        f"cleaned={int(fp.cleaned)}\n"
    )


def load_fingerprint(path) -> FingerprintEstimate:
    plane = read_plane(path)
    meta = Path(str(path) + ".meta")
    fields = {}
    if meta.exists():
        for line in meta.read_text().splitlines():
            key, _, value = line.partition("=")
            if key:
                fields[key] = value
    return FingerprintEstimate(
        plane,
        fields.get("scheme", "unknown"),
        int(fields.get("source_count", 0)),
        int(fields.get("starved", 0)),
        bool(int(fields.get("cleaned", 0))),
    )
