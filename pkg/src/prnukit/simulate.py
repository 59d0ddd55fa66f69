"""Synthetic sensor model with parametric transfer curves.

Generates ground truth for every estimator in the toolkit: a multiplicative
unit-variance fingerprint, a monotone transfer curve h with h(0)=0 and
h(1)=1, and captures of the form

    y = h(z + z * sigma_k * k) + n

where z is the scene plane in [0, 1], k the fingerprint, and n additive
Gaussian readout noise. The brightness-dependent gain that ends up
multiplying the fingerprint in a denoising residual is g(z) = z * h'(z),
available here as an oracle evaluated at observed brightness x = h(z).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .plane import PlaneError, as_plane, same_shape
from .seeds import derive_rng

_BOUNDARY_TOL = 1e-12
_MONOTONE_GRID = 4096


class TransferError(ValueError):
    """Raised for invalid transfer-curve specifications or arguments."""


@dataclass(frozen=True)
class TransferSpec:
    """Parametric monotone map h: [0,1] -> [0,1].

    Kinds:
      * ``gamma``: h(u) = c1 * u**exponent (c1 must be 1 for a unit boundary)
      * ``smoothstep``: h(u) = u**2 * (3 - 2u)
      * ``piecewise``: linear interpolation through (u, v) knots
      * ``polynomial``: h(u) = sum(c[i] * u**i), monotone on [0,1]
    """

    kind: str
    params: tuple = field(default=())

    @classmethod
    def gamma(cls, exponent: float, c1: float = 1.0) -> "TransferSpec":
        if exponent <= 0 or c1 <= 0:
            raise TransferError("gamma transfer needs positive exponent and c1")
        return cls("gamma", (float(exponent), float(c1)))

    @classmethod
    def smoothstep(cls) -> "TransferSpec":
        return cls("smoothstep")

    @classmethod
    def piecewise_linear(cls, knots) -> "TransferSpec":
        pts = tuple((float(u), float(v)) for u, v in knots)
        us = np.array([p[0] for p in pts])
        vs = np.array([p[1] for p in pts])
        if len(pts) < 2 or np.any(np.diff(us) <= 0) or np.any(np.diff(vs) <= 0):
            raise TransferError("piecewise knots must be strictly increasing in both coordinates")
        return cls("piecewise", pts)

    @classmethod
    def polynomial(cls, coeffs) -> "TransferSpec":
        return cls("polynomial", tuple(float(c) for c in coeffs))

    @classmethod
    def parse(cls, text: str) -> "TransferSpec":
        """Parse CLI syntax like ``gamma:0.45``, ``smoothstep``,
        ``piecewise:0,0;0.3,0.5;1,1`` or ``polynomial:0,1.5,-0.5``."""
        name, _, arg = text.partition(":")
        name = name.strip().lower()
        if name == "gamma":
            parts = [float(p) for p in arg.split(",")] if arg else []
            if not parts:
                raise TransferError("gamma spec needs an exponent, e.g. gamma:0.45")
            return cls.gamma(*parts[:2])
        if name == "smoothstep":
            return cls.smoothstep()
        if name == "piecewise":
            knots = [tuple(float(v) for v in knot.split(",")) for knot in arg.split(";") if knot]
            return cls.piecewise_linear(knots)
        if name == "polynomial":
            return cls.polynomial([float(c) for c in arg.split(",")])
        raise TransferError(f"unknown transfer kind {name!r}")

    def __call__(self, u):
        return eval_transfer(self, u)

    def derivative(self, u):
        return transfer_derivative(self, u)

    def inverse(self, x):
        return invert_transfer(self, x)

    def validate(self) -> None:
        """Check unit boundary conditions and strict monotonicity on a grid."""
        grid = np.linspace(0.0, 1.0, _MONOTONE_GRID + 1)
        vals = eval_transfer(self, grid)
        if abs(vals[0]) > _BOUNDARY_TOL or abs(vals[-1] - 1.0) > _BOUNDARY_TOL:
            raise TransferError(f"{self.kind} transfer violates h(0)=0, h(1)=1")
        if np.any(np.diff(vals) <= 0):
            raise TransferError(f"{self.kind} transfer is not strictly increasing")


def eval_transfer(spec: TransferSpec, u):
    """Evaluate h(u) for u in [0, 1] (scalar or array)."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise TransferError("transfer argument outside [0, 1]")
    if spec.kind == "gamma":
        exponent, c1 = spec.params
        out = c1 * np.power(arr, exponent)
    elif spec.kind == "smoothstep":
        out = arr * arr * (3.0 - 2.0 * arr)
    elif spec.kind == "piecewise":
        us = np.array([p[0] for p in spec.params])
        vs = np.array([p[1] for p in spec.params])
        out = np.interp(arr, us, vs)
    elif spec.kind == "polynomial":
        out = np.polynomial.polynomial.polyval(arr, np.array(spec.params))
    else:
        raise TransferError(f"unknown transfer kind {spec.kind!r}")
    return float(out) if np.isscalar(u) else out


def transfer_derivative(spec: TransferSpec, u):
    """h'(u): analytic for gamma/smoothstep/polynomial, central difference
    at step 1e-6 for the piecewise family."""
    arr = np.asarray(u, dtype=np.float64)
    if spec.kind == "gamma":
        exponent, c1 = spec.params
        out = c1 * exponent * np.power(arr, exponent - 1.0)
    elif spec.kind == "smoothstep":
        out = 6.0 * arr * (1.0 - arr)
    elif spec.kind == "polynomial":
        coeffs = np.array(spec.params)
        dcoeffs = coeffs[1:] * np.arange(1, len(coeffs))
        out = np.polynomial.polynomial.polyval(arr, dcoeffs)
    else:
        step = 1e-6
        lo = np.clip(arr - step, 0.0, 1.0)
        hi = np.clip(arr + step, 0.0, 1.0)
        out = (eval_transfer(spec, hi) - eval_transfer(spec, lo)) / (hi - lo)
    return float(out) if np.isscalar(u) else out


def invert_transfer(spec: TransferSpec, x, *, tol: float = 1e-10):
    """Solve h(z) = x by bisection on [0, 1] to absolute tolerance ``tol``."""
    arr = np.atleast_1d(np.asarray(x, dtype=np.float64))
    h0 = eval_transfer(spec, 0.0)
    h1 = eval_transfer(spec, 1.0)
    if np.any(arr < h0 - _BOUNDARY_TOL) or np.any(arr > h1 + _BOUNDARY_TOL):
        raise TransferError("value outside the range of the transfer curve")
    lo = np.zeros_like(arr)
    hi = np.ones_like(arr)
    # 2^-40 < 1e-10: fixed iteration count keeps this vectorized
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        below = eval_transfer(spec, mid) < arr
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    z = 0.5 * (lo + hi)
    return float(z[0]) if np.isscalar(x) else z.reshape(np.shape(x))


def true_emphasis(spec: TransferSpec, x):
    """Oracle for the brightness-dependent fingerprint gain.

    Given observed brightness x = h(z), returns z * h'(z). For a pure power
    law h this is proportional to x itself; any other transfer bends it.
    """
    z = invert_transfer(spec, x)
    return z * transfer_derivative(spec, z)


@dataclass
class PrnuPattern:
    """Unit-variance white fingerprint with its multiplicative strength."""

    plane: np.ndarray
    sigma_k: float


@dataclass
class Capture:
    """Simulated sensor output plus the fraction of pixels whose
    pre-transfer argument had to be clipped into [0, 1]."""

    plane: np.ndarray
    clip_fraction: float


def make_prnu(seed: int, height: int, width: int, sigma_k: float) -> PrnuPattern:
    """Draw an i.i.d. standard-normal fingerprint; deterministic per seed."""
    if height < 1 or width < 1:
        raise PlaneError(f"pattern dimensions must be positive, got {height}x{width}")
    if sigma_k < 0:
        raise ValueError("sigma_k must be nonnegative")
    rng = derive_rng(seed, "prnu-pattern")
    return PrnuPattern(rng.standard_normal((height, width)), float(sigma_k))


def simulate_capture(
    scene: np.ndarray,
    spec: TransferSpec,
    prnu: PrnuPattern,
    sigma_n: float,
    seed: int,
) -> Capture:
    """Render one capture: y = h(clip(z * (1 + sigma_k * k))) + n.

    The fingerprint perturbs the scene multiplicatively before the transfer
    curve; readout noise n ~ N(0, sigma_n^2) is added after it. Arguments
    pushed outside [0, 1] by the perturbation are clipped and counted.
    """
    z = as_plane(scene, name="scene")
    if z.min() < 0.0 or z.max() > 1.0:
        raise PlaneError("scene values must lie in [0, 1]")
    same_shape(z, prnu.plane, names="scene/prnu")
    spec.validate()
    arg = z * (1.0 + prnu.sigma_k * prnu.plane)
    clipped = int(np.count_nonzero((arg < 0.0) | (arg > 1.0)))
    arg = np.clip(arg, 0.0, 1.0)
    y = eval_transfer(spec, arg)
    if sigma_n > 0:
        rng = derive_rng(seed, "capture-noise")
        y = y + sigma_n * rng.standard_normal(z.shape)
    return Capture(y, clipped / z.size)


def smooth_scene(
    seed: int,
    height: int,
    width: int,
    *,
    smoothness: float = 8.0,
    low: float = 0.02,
    high: float = 0.98,
    index: int = 0,
    marginal: str = "uniform",
) -> np.ndarray:
    """Low-pass filtered uniform noise spanning [low, high].

    Smooth fields keep denoiser leakage small while sweeping the full
    brightness range, so estimators see every brightness bin populated.
    With the default ``uniform`` marginal the field is rank-equalized so
    every brightness level carries equal mass; ``bright`` additionally
    skews the mass toward the top of the range, imitating photographic
    content dominated by sky and other near-saturated regions; ``plain``
    keeps the bell-shaped marginal of the filtered noise, merely rescaled.
    """
    rng = derive_rng(seed, "smooth-scene", index)
    field = gaussian_filter(rng.random((height, width)), smoothness, mode="wrap")
    if marginal in ("uniform", "bright"):
        order = np.argsort(field.ravel(), kind="stable")
        ranks = np.empty(field.size, dtype=np.float64)
        ranks[order] = np.arange(field.size)
        field = ((ranks + 0.5) / field.size).reshape(field.shape)
        if marginal == "bright":
            field = 1.0 - (1.0 - field) ** 2
    elif marginal == "plain":
        span = field.max() - field.min()
        if span <= 0:
            return np.full((height, width), 0.5 * (low + high))
        field = (field - field.min()) / span
    else:
        raise ValueError(f"unknown scene marginal {marginal!r}")
    return low + (high - low) * field


def flat_scene(level: float, height: int, width: int) -> np.ndarray:
    """Constant scene at the given brightness level."""
    if not 0.0 <= level <= 1.0:
        raise PlaneError("flat-field level must lie in [0, 1]")
    return np.full((height, width), float(level))
