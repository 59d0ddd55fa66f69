"""Correlation search and peak-to-correlation-energy scoring.

A residual patch is matched against a larger fingerprint plane by cyclic
cross-correlation (computed in the frequency domain), normalized by the
global norms of both inputs so every value lies in [-1, 1]. The match
statistic is the PCE: squared peak correlation over the mean squared
correlation outside a small exclusion neighborhood.

Under the identification protocol, a query with a known true crop origin
counts as detected only if the correlation argmax lands exactly there;
a query with unknown origin is scored at its best alignment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft

from .fingerprint import FingerprintEstimate
from .plane import PlaneError, as_plane

DEFAULT_NEIGHBORHOOD = 11


@dataclass
class CorrelationPlane:
    """Normalized correlations over shifts, with the argmax location.

    Ties at the peak resolve to the smallest row, then smallest column.
    """

    plane: np.ndarray
    peak_shift: tuple[int, int]


@dataclass
class DetectionScore:
    """PCE statistic with the alignment outcome.

    ``aligned`` is None when no true shift was supplied (best-alignment
    protocol); a failed alignment forces the H0 label no matter the PCE.
    """

    pce: float
    shift: tuple[int, int]
    aligned: bool | None
    label: str


def _argmax_shift(plane: np.ndarray) -> tuple[int, int]:
    flat = int(np.argmax(plane))  # row-major first occurrence = smallest (row, col)
    return (flat // plane.shape[1], flat % plane.shape[1])


def ncc_surface(term: np.ndarray, residual: np.ndarray) -> CorrelationPlane:
    """Normalized cyclic cross-correlation of a residual over a term plane.

    The residual (zero-padded to the term's size) is correlated against
    every cyclic placement; values are divided by the product of the two
    global norms, which bounds them by 1 in magnitude.
    """
    term = as_plane(term, name="term")
    residual = as_plane(residual, name="residual")
    if residual.shape[0] > term.shape[0] or residual.shape[1] > term.shape[1]:
        raise PlaneError(
            f"residual {residual.shape} larger than term {term.shape}"
        )
    term_norm = float(np.linalg.norm(term))
    res_norm = float(np.linalg.norm(residual))
    if term_norm == 0.0 or res_norm == 0.0:
        raise PlaneError("zero-energy input to correlation")
    padded = np.zeros_like(term)
    padded[: residual.shape[0], : residual.shape[1]] = residual
    spec_t = scipy.fft.fft2(term)
    spec_r = scipy.fft.fft2(padded)
    corr = scipy.fft.ifft2(spec_t * np.conj(spec_r)).real
    plane = corr / (term_norm * res_norm)
    return CorrelationPlane(plane, _argmax_shift(plane))


def pce(
    surface: CorrelationPlane,
    shift: tuple[int, int] | None = None,
    neighborhood: int = DEFAULT_NEIGHBORHOOD,
    *,
    signed: bool = False,
) -> float:
    """Peak-to-correlation-energy ratio at a shift (default: the peak).

    The squared correlation at the shift is divided by the mean squared
    correlation over the plane excluding the neighborhood-sized block
    centered there (cyclic at the borders). A zero background yields +inf.
    With ``signed`` the sign of the peak correlation is carried through.
    """
    plane = surface.plane
    if neighborhood < 1 or neighborhood % 2 == 0:
        raise ValueError("neighborhood must be odd and positive")
    if neighborhood**2 >= plane.size:
        raise ValueError("neighborhood covers the whole correlation plane")
    s0 = surface.peak_shift if shift is None else (int(shift[0]), int(shift[1]))
    peak = plane[s0[0] % plane.shape[0], s0[1] % plane.shape[1]]
    half = neighborhood // 2
    rows = (np.arange(s0[0] - half, s0[0] + half + 1)) % plane.shape[0]
    cols = (np.arange(s0[1] - half, s0[1] + half + 1)) % plane.shape[1]
    keep = np.ones(plane.shape, dtype=bool)
    keep[np.ix_(rows, cols)] = False
    background = float(np.sum(plane[keep] ** 2))
    if background == 0.0:
        return math.inf
    value = peak * peak * (plane.size - neighborhood**2) / background
    return float(np.sign(peak)) * value if signed else value


def align_and_score(
    fingerprint: FingerprintEstimate,
    weights_on_x: np.ndarray,
    residual_patch: np.ndarray,
    true_shift: tuple[int, int] | None = None,
    neighborhood: int = DEFAULT_NEIGHBORHOOD,
) -> DetectionScore:
    """Search the crop origin of a residual patch inside a fingerprint.

    The patch's residual is multiplied by its own brightness-weight plane
    (the matched-filter term for a gain-modulated fingerprint), zero-meaned,
    and correlated against the fingerprint over every non-wrapping shift.
    With a known ``true_shift`` the result is labeled H1 only when the
    argmax hits it exactly; otherwise the best alignment is scored as H0.
    """
    kplane = as_plane(fingerprint.plane, name="fingerprint")
    patch = as_plane(residual_patch, name="residual patch")
    weights = as_plane(weights_on_x, name="weight plane")
    if patch.shape != weights.shape:
        raise PlaneError(f"patch {patch.shape} vs weight plane {weights.shape}")
    if patch.shape[0] > kplane.shape[0] or patch.shape[1] > kplane.shape[1]:
        raise PlaneError(f"patch {patch.shape} exceeds fingerprint {kplane.shape}")
    matched = patch * weights
    matched = matched - matched.mean()
    surface = ncc_surface(kplane - kplane.mean(), matched)
    valid_rows = kplane.shape[0] - patch.shape[0] + 1
    valid_cols = kplane.shape[1] - patch.shape[1] + 1
    cropped = surface.plane[:valid_rows, :valid_cols].copy()
    peak = _argmax_shift(cropped)
    if valid_rows * valid_cols > neighborhood**2:
        score = pce(CorrelationPlane(cropped, peak), neighborhood=neighborhood)
    else:
        # near same-size matching: too few non-wrapping shifts to form a
        # background, so score against the full cyclic plane
        score = pce(surface, peak, neighborhood=neighborhood)
    valid = CorrelationPlane(cropped, peak)
    if true_shift is not None:
        wanted = (int(true_shift[0]), int(true_shift[1]))
        if not (0 <= wanted[0] < valid_rows and 0 <= wanted[1] < valid_cols):
            raise PlaneError(f"true shift {wanted} outside the valid search region")
        aligned = valid.peak_shift == wanted
        return DetectionScore(score, valid.peak_shift, aligned, "H1" if aligned else "H0")
    return DetectionScore(score, valid.peak_shift, None, "H0")
