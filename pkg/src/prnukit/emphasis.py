"""Brightness-dependent fingerprint gain estimation.

Residuals from one camera share the fingerprint scaled by a gain that
depends on the denoised brightness. Two estimators recover that gain
curve:

* The 2D route bins products of residual pairs by their two brightness
  covariates (a bivariate regressogram), symmetrizes the matrix, and
  extracts the gain as the leading rank-1 factor.
* The simplified route bins products of each residual with a reference
  fingerprint estimate by a single covariate (1D regressogram), optionally
  refining the reference iteratively with the current gain estimate.

All estimators process inputs in a content-canonical order so results are
bit-identical under any permutation of the input list.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass

import numpy as np

from .plane import PlaneError, as_plane, same_shape
from .preprocess import ResidualPair

DEFAULT_BINS = 32

#: Guard for element-wise ratio denominators (starved pixels output 0).
DENOM_GUARD = 1e-12


class EstimationError(ValueError):
    """Raised when an estimator cannot produce a meaningful result."""


def uniform_edges(bins: int) -> np.ndarray:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    return np.linspace(0.0, 1.0, bins + 1)


def bin_index(x: np.ndarray, bins: int) -> np.ndarray:
    """Left-closed uniform bins on [0, 1]; x = 1 lands in the last bin.

    Covariates slightly outside [0, 1] are clamped to the edge bins.
    """
    idx = np.floor(np.asarray(x, dtype=np.float64) * bins).astype(np.int64)
    return np.clip(idx, 0, bins - 1)


def content_key(pair: ResidualPair) -> bytes:
    """Digest of a residual pair's raw samples, used for canonical ordering."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(pair.residual).tobytes())
    h.update(np.ascontiguousarray(pair.denoised).tobytes())
    return h.digest()


def canonical_order(pairs) -> list[ResidualPair]:
    """Sort pairs by content digest; the traversal order every estimator uses."""
    return sorted(pairs, key=content_key)


@dataclass
class PhiMatrix:
    """Binned estimate of the bivariate residual-product mean.

    ``values[p, q]`` is the average of residual products whose covariates
    fell in brightness cell (p, q); cells with no samples hold NaN and are
    reported invalid by ``mask``.
    """

    edges: np.ndarray
    values: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        b = len(self.edges) - 1
        if self.values.shape != (b, b) or self.counts.shape != (b, b):
            raise PlaneError("phi matrix fields have inconsistent shapes")
        if np.any(np.diff(self.edges) <= 0):
            raise PlaneError("phi edges must be strictly increasing")

    @property
    def bins(self) -> int:
        return len(self.edges) - 1

    @property
    def mask(self) -> np.ndarray:
        return self.counts > 0

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


@dataclass
class EmphasisCurve:
    """Binned gain estimate over brightness.

    Bins with zero count hold NaN; ``evaluate`` interpolates across them
    from valid neighbors. ``scale`` stores the normalization constant set
    by transfer-curve recovery (1.0 until then).
    """

    edges: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        b = len(self.edges) - 1
        if self.values.shape != (b,) or self.counts.shape != (b,):
            raise PlaneError("curve fields have inconsistent shapes")

    @property
    def bins(self) -> int:
        return len(self.edges) - 1

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def valid(self) -> np.ndarray:
        return (self.counts > 0) & np.isfinite(self.values)

    def filled_values(self) -> np.ndarray:
        """Values with empty bins filled by interpolation between valid ones."""
        ok = self.valid
        if not np.any(ok):
            raise EstimationError("curve has no valid bins")
        return np.interp(self.centers, self.centers[ok], self.values[ok])

    def evaluate(self, x, *, extrapolate: bool = False):
        """Piecewise-linear evaluation at brightness x.

        Outside the outermost valid centers the value is clamped by
        default; with ``extrapolate`` the end segments are extended
        instead (used by transfer recovery, where the integration grid
        reaches below the first bin center).
        """
        ok = self.valid
        if not np.any(ok):
            raise EstimationError("curve has no valid bins")
        c, v = self.centers[ok], self.values[ok]
        out = np.interp(x, c, v)
        if extrapolate and len(c) >= 2:
            arr = np.asarray(x, dtype=np.float64)
            lo_slope = (v[1] - v[0]) / (c[1] - c[0])
            hi_slope = (v[-1] - v[-2]) / (c[-1] - c[-2])
            out = np.where(arr < c[0], v[0] + lo_slope * (arr - c[0]), out)
            out = np.where(arr > c[-1], v[-1] + hi_slope * (arr - c[-1]), out)
        return float(out) if np.isscalar(x) else out


def regressogram_2d(pairs, bins: int = DEFAULT_BINS) -> PhiMatrix:
    """Bivariate regressogram over all ordered residual pairs.

    For every ordered pair (i, j != i) and pixel n, the product
    ``w_i[n] * w_j[n]`` is accumulated into the cell addressed by the two
    denoised brightnesses ``(x_i[n], x_j[n])``; cell values are the means.
    Accumulation is strictly sequential in (pair, pixel) order, so the
    result matches an elementwise reference loop bit for bit.
    """
    pairs = canonical_order(pairs)
    if len(pairs) < 2:
        raise EstimationError("need at least 2 residual pairs")
    shape = pairs[0].residual.shape
    for p in pairs[1:]:
        same_shape(pairs[0].residual, p.residual, names="residual pairs")
    idx = [bin_index(p.denoised, bins).ravel() for p in pairs]
    res = [p.residual.ravel() for p in pairs]
    sums = np.zeros(bins * bins)
    counts = np.zeros(bins * bins, dtype=np.int64)
    for i in range(len(pairs)):
        for j in range(len(pairs)):
            if j == i:
                continue
            flat = idx[i] * bins + idx[j]
            np.add.at(sums, flat, res[i] * res[j])
            counts += np.bincount(flat, minlength=bins * bins)
    sums = sums.reshape(bins, bins)
    counts = counts.reshape(bins, bins)
    values = np.full((bins, bins), np.nan)
    np.divide(sums, counts, out=values, where=counts > 0)
    return PhiMatrix(uniform_edges(bins), values, counts)


def symmetrize(phi: PhiMatrix) -> PhiMatrix:
    """Average the matrix with its transpose.

    Cells valid on both sides are averaged; a cell valid on one side only
    takes that side's value; cells invalid on both stay invalid.
    """
    v, vt = phi.values, phi.values.T
    ok, okt = phi.mask, phi.mask.T
    values = np.full_like(v, np.nan)
    both = ok & okt
    values[both] = 0.5 * (v[both] + vt[both])
    only = ok & ~okt
    values[only] = v[only]
    onlyt = okt & ~ok
    values[onlyt] = vt[onlyt]
    return PhiMatrix(phi.edges.copy(), values, phi.counts + phi.counts.T)


def impute_invalid(phi: PhiMatrix) -> np.ndarray:
    """Fill invalid cells from the nearest valid neighbors.

    Along each axis the nearest valid cell is located (averaging the two
    sides on a distance tie); the per-axis results are averaged. Cells in
    a fully empty row and column fall back to 0.
    """
    values = phi.values.copy()
    ok = phi.mask & np.isfinite(phi.values)
    if np.all(ok):
        return values

    def nearest_on_line(line_vals, line_ok, pos):
        best = None
        for dist in range(1, len(line_vals)):
            found = []
            for p in (pos - dist, pos + dist):
                if 0 <= p < len(line_vals) and line_ok[p]:
                    found.append(line_vals[p])
            if found:
                best = float(np.mean(found))
                break
        return best

    for p, q in zip(*np.nonzero(~ok)):
        along = [
            nearest_on_line(phi.values[p, :], ok[p, :], q),
            nearest_on_line(phi.values[:, q], ok[:, q], p),
        ]
        usable = [a for a in along if a is not None]
        values[p, q] = float(np.mean(usable)) if usable else 0.0
    return values


def rank1_emphasis(phi_s: PhiMatrix, *, gap_tol: float = 1e-9) -> EmphasisCurve:
    """Extract the gain curve as the dominant rank-1 factor.

    The best rank-1 approximation of the symmetrized matrix in the 2-norm
    is its leading eigenpair; the curve holds sqrt(eigenvalue) times the
    unit eigenvector, with the sign fixed so the entries sum nonnegative.
    """
    v, vt = phi_s.values, phi_s.values.T
    both = phi_s.mask & phi_s.mask.T & np.isfinite(v) & np.isfinite(vt)
    if np.any(both):
        tol = 1e-9 * max(1.0, float(np.abs(v[both]).max()))
        if np.any(np.abs(v[both] - vt[both]) > tol):
            raise EstimationError("matrix must be symmetrized first")
    filled = impute_invalid(phi_s)
    filled = 0.5 * (filled + filled.T)  # imputation itself need not be symmetric
    eigvals, eigvecs = np.linalg.eigh(filled)
    order = np.argsort(np.abs(eigvals))[::-1]
    lead, second = eigvals[order[0]], eigvals[order[1]]
    sigma1, sigma2 = abs(lead), abs(second)
    if lead <= 0:
        raise EstimationError("dominant eigenvalue is not positive")
    if sigma1 - sigma2 < gap_tol * sigma1:
        raise EstimationError("degenerate spectrum: no separated rank-1 factor")
    g = eigvecs[:, order[0]]
    if g.sum() < 0:
        g = -g
    values = np.sqrt(lead) * g
    counts = phi_s.counts.sum(axis=1)
    return EmphasisCurve(phi_s.edges.copy(), values, counts)


def _weight_plane(weight, denoised: np.ndarray) -> np.ndarray:
    """Evaluate a weighting rule on a denoised plane.

    ``None`` means the identity rule (weight = brightness); an
    EmphasisCurve or any object with ``evaluate`` is sampled at the plane's
    values; a callable is applied directly.
    """
    if weight is None:
        return denoised
    if hasattr(weight, "evaluate"):
        return np.asarray(weight.evaluate(denoised), dtype=np.float64)
    if callable(weight):
        return np.asarray(weight(denoised), dtype=np.float64)
    raise TypeError(f"unsupported weight rule {type(weight)!r}")


def reference_accumulators(pairs, weight=None):
    """Per-pair and total numerator/denominator for the ratio estimator.

    The reference fingerprint a residual is compared against is
    ``sum_l q(x_l) * w_l / sum_l q(x_l)^2``; returning per-pair terms lets
    callers subtract one pair out for leave-one-out references. Pairs must
    already be in canonical order.
    """
    nums, dens = [], []
    for p in pairs:
        q = _weight_plane(weight, p.denoised)
        nums.append(q * p.residual)
        dens.append(q * q)
    num_total = np.zeros_like(nums[0])
    den_total = np.zeros_like(dens[0])
    for nu, de in zip(nums, dens):
        num_total += nu
        den_total += de
    return nums, dens, num_total, den_total


def _guarded_ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den >= DENOM_GUARD)
    return out


def regressogram_1d(
    pairs,
    kref: np.ndarray | None = None,
    *,
    weight=None,
    bins: int = DEFAULT_BINS,
    leave_one_out: bool = False,
) -> EmphasisCurve:
    """Univariate regressogram of residual-times-reference products.

    Each product plane ``w_l * kref`` is binned by the denoised brightness
    ``x_l`` and the per-bin mean is returned. With ``leave_one_out`` the
    reference is rebuilt for every l from the other pairs (weighted by
    ``weight``); without it, a shared reference is used for all products:
    either the supplied ``kref`` plane or, when omitted, one estimated
    from all pairs at once (faster than leave-one-out for large inputs,
    at the price of each residual correlating with its own contribution).
    """
    pairs = canonical_order(pairs)
    if not pairs:
        raise EstimationError("need at least one residual pair")
    if leave_one_out:
        if len(pairs) < 2:
            raise EstimationError("leave-one-out needs at least 2 pairs")
        nums, dens, num_total, den_total = reference_accumulators(pairs, weight)
        krefs = [
            _guarded_ratio(num_total - nu, den_total - de)
            for nu, de in zip(nums, dens)
        ]
    elif kref is None:
        _, _, num_total, den_total = reference_accumulators(pairs, weight)
        krefs = [_guarded_ratio(num_total, den_total)] * len(pairs)
    else:
        kref = as_plane(kref, name="kref")
        same_shape(pairs[0].residual, kref, names="residual/kref")
        krefs = [kref] * len(pairs)

    sums = np.zeros(bins)
    counts = np.zeros(bins, dtype=np.int64)
    for p, kr in zip(pairs, krefs):
        idx = bin_index(p.denoised, bins).ravel()
        sums += np.bincount(idx, weights=(p.residual * kr).ravel(), minlength=bins)
        counts += np.bincount(idx, minlength=bins)
    values = np.full(bins, np.nan)
    np.divide(sums, counts, out=values, where=counts > 0)
    return EmphasisCurve(uniform_edges(bins), values, counts)


def normalize_curve(curve: EmphasisCurve) -> EmphasisCurve:
    """Rescale values to unit count-weighted RMS (shape is what matters:
    every downstream consumer is invariant to a positive gain scale)."""
    ok = curve.valid
    if not np.any(ok):
        raise EstimationError("curve has no valid bins")
    w = curve.counts[ok].astype(np.float64)
    rms = float(np.sqrt(np.sum(w * curve.values[ok] ** 2) / np.sum(w)))
    if rms == 0.0:
        raise EstimationError("curve is identically zero")
    return EmphasisCurve(curve.edges, curve.values / rms, curve.counts, curve.scale)


def iterate_emphasis(
    pairs,
    m: int = 2,
    bins: int = DEFAULT_BINS,
    *,
    leave_one_out: bool = True,
    kref: np.ndarray | None = None,
) -> EmphasisCurve:
    """Iteratively refined 1D gain estimate.

    Iteration 1 weights the reference fingerprint by brightness itself;
    each later iteration rebuilds the reference weighted by the current
    gain estimate and re-runs the regressogram. Every iterate is
    normalized to unit weighted RMS, which pins the otherwise free scale
    of the refinement loop.
    """
    if m < 1:
        raise ValueError("iteration count must be >= 1")
    curve = None
    for _ in range(m):
        curve = regressogram_1d(
            pairs, kref, weight=curve, bins=bins, leave_one_out=leave_one_out
        )
        ok = curve.valid
        if not np.any(ok) or np.all(curve.values[ok] == 0.0):
            raise EstimationError("gain estimate vanished; cannot iterate")
        curve = normalize_curve(curve)
    return curve


def save_curve(path, curve: EmphasisCurve) -> None:
    """CSV rows ``bin_center,value,count`` plus a trailing scale line."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "value", "count"])
        for c, v, n in zip(curve.centers, curve.values, curve.counts):
            writer.writerow([repr(float(c)), "" if not np.isfinite(v) else repr(float(v)), int(n)])
        writer.writerow(["scale", repr(float(curve.scale)), ""])


def load_curve(path) -> EmphasisCurve:
    centers, values, counts, scale = [], [], [], 1.0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["bin_center", "value"]:
            raise PlaneError(f"{path}: not an emphasis-curve CSV")
        for row in reader:
            if row and row[0] == "scale":
                scale = float(row[1])
                continue
            centers.append(float(row[0]))
            values.append(float(row[1]) if row[1] else np.nan)
            counts.append(int(row[2]))
    centers = np.array(centers)
    if len(centers) < 1:
        raise PlaneError(f"{path}: empty curve")
    width = 1.0 / len(centers)
    edges = np.concatenate([centers - width / 2, [centers[-1] + width / 2]])
    edges[0], edges[-1] = 0.0, 1.0
    return EmphasisCurve(edges, np.array(values), np.array(counts, dtype=np.int64), scale)


def save_phi(path_values, path_counts, phi: PhiMatrix) -> None:
    """Value grid and parallel count grid as two CSV files."""
    with open(path_values, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in phi.values:
            writer.writerow(["" if not np.isfinite(v) else repr(float(v)) for v in row])
    with open(path_counts, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in phi.counts:
            writer.writerow([int(n) for n in row])


def load_phi(path_values, path_counts) -> PhiMatrix:
    with open(path_values, newline="") as fh:
        values = np.array(
            [[float(v) if v else np.nan for v in row] for row in csv.reader(fh)]
        )
    with open(path_counts, newline="") as fh:
        counts = np.array([[int(n) for n in row] for row in csv.reader(fh)], dtype=np.int64)
    return PhiMatrix(uniform_edges(values.shape[0]), values, counts)
