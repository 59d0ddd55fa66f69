"""Transfer-curve recovery from a gain curve.

The gain satisfies a first-order relation g(h(z)) = h(z) * h'(z) / a up to
an unknown positive constant, so the curve h can be rebuilt by integrating
g(t)/t over brightness and normalizing the constant from the boundary
values h(eps) = eps, h(1) = 1. A byproduct score measures how close the
gain is to a straight line through the origin, which is the signature of
a pure power-law transfer.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .emphasis import EmphasisCurve, EstimationError
from .plane import PlaneError

#: One 8-bit quantization step: integration starts here to avoid the 1/t blow-up.
DEFAULT_EPSILON = 1.0 / 255.0
DEFAULT_GRID = 1024


@dataclass
class TransferCurve:
    """Recovered monotone brightness map sampled on an increasing grid."""

    grid: np.ndarray
    values: np.ndarray
    a: float
    epsilon: float

    def __post_init__(self):
        if self.grid.shape != self.values.shape:
            raise PlaneError("transfer grid/values shapes differ")
        if abs(self.values[-1] - 1.0) > 1e-9:
            raise PlaneError("recovered curve must end at 1")
        drops = np.diff(self.values)
        if np.any(drops < -1e-6):
            raise PlaneError("recovered curve decreases beyond tolerance")

    def evaluate(self, u):
        return np.interp(u, self.grid, self.values)


def recover_transfer(
    curve: EmphasisCurve,
    epsilon: float = DEFAULT_EPSILON,
    grid_size: int = DEFAULT_GRID,
) -> TransferCurve:
    """Integrate a gain curve into a transfer curve.

    The gain is linearly interpolated between bin centers (end segments
    extended past the outermost centers) and g(t)/t is integrated by the
    trapezoid rule on a geometric grid from epsilon to 1; log spacing
    makes the rule exact for a constant gain and leaves only a uniform
    relative error for a linear one, which the boundary normalization
    cancels. The normalization constant is stored back on the gain
    curve's ``scale`` field.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must lie in (0, 1)")
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    if int(np.count_nonzero(curve.valid)) < 2:
        raise EstimationError("gain curve needs at least 2 valid bins")
    grid = np.geomspace(epsilon, 1.0, grid_size)
    g = curve.evaluate(grid, extrapolate=True)
    # d(log t) steps: integral of g(t)/t dt == integral of g(e^s) ds
    log_steps = np.diff(np.log(grid))
    increments = 0.5 * (g[:-1] + g[1:]) * log_steps
    big_g = np.concatenate([[0.0], np.cumsum(increments)])
    total = big_g[-1]
    if total <= 0.0:
        raise EstimationError("gain integrates to a non-increasing curve")
    a = (1.0 - epsilon) / total
    values = epsilon + a * big_g
    values[-1] = 1.0  # exact endpoint; cumulative rounding is ~1e-16
    curve.scale = a
    return TransferCurve(grid, values, a, epsilon)


def gamma_linearity_score(curve: EmphasisCurve) -> float:
    """Agreement of the gain with a line through the origin, in [0, 1].

    Count-weighted squared correlation between bin values and the fitted
    line through the origin; 1.0 means the gain is linear in brightness,
    the signature of a power-law transfer where the plain multiplicative
    fingerprint model is already exact.
    """
    ok = curve.valid
    if int(np.count_nonzero(ok)) < 3:
        raise EstimationError("gain curve needs at least 3 valid bins")
    c = curve.centers[ok]
    v = curve.values[ok]
    w = curve.counts[ok].astype(np.float64)
    swv = float(np.sum(w * v * v))
    swc = float(np.sum(w * c * c))
    if swv <= 0.0:
        raise EstimationError("gain curve is identically zero")
    cross = float(np.sum(w * c * v))
    return cross * cross / (swc * swv)


def save_transfer(path, transfer: TransferCurve) -> None:
    """CSV rows ``u,h`` plus a trailing metadata line with a and epsilon."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["u", "h"])
        for u, h in zip(transfer.grid, transfer.values):
            writer.writerow([repr(float(u)), repr(float(h))])
        writer.writerow(["a", repr(float(transfer.a))])
        writer.writerow(["epsilon", repr(float(transfer.epsilon))])


def load_transfer(path) -> TransferCurve:
    grid, values = [], []
    a = epsilon = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["u", "h"]:
            raise PlaneError(f"{path}: not a transfer-curve CSV")
        for row in reader:
            if row[0] == "a":
                a = float(row[1])
            elif row[0] == "epsilon":
                epsilon = float(row[1])
            else:
                grid.append(float(row[0]))
                values.append(float(row[1]))
    if a is None or epsilon is None:
        raise PlaneError(f"{path}: missing metadata lines")
    return TransferCurve(np.array(grid), np.array(values), a, epsilon)
