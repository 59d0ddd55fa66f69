"""Periodized orthogonal wavelet transform (8-tap Daubechies).

Separable 2D analysis/synthesis with circular boundary handling. The
orthogonal filter pair makes reconstruction exact to rounding error, which
downstream code relies on: a denoising residual is literally
``input - reconstruction``.

Inputs whose sides are not divisible by 2**levels are periodically padded
before analysis and cropped after synthesis, so round-tripping is still
exact on the original support.
"""

from __future__ import annotations

import numpy as np

from .plane import PlaneError, as_plane

# 8-tap Daubechies scaling filter (4 vanishing moments), sum = sqrt(2).
DEC_LO = np.array(
    [
        0.23037781330889645,
        0.7148465705529156,
        0.630880767929859,
        -0.02798376941685959,
        -0.18703481171909309,
        0.030841381835560632,
        0.032883011666885176,
        -0.010597401785069018,
    ]
)
# Quadrature-mirror highpass: g[m] = (-1)^m * h[L-1-m]
DEC_HI = np.array([(-1) ** m * DEC_LO[len(DEC_LO) - 1 - m] for m in range(len(DEC_LO))])


def _analyze_axis(a: np.ndarray, axis: int) -> tuple[np.ndarray, np.ndarray]:
    n = a.shape[axis]
    take = [slice(None)] * a.ndim
    take[axis] = slice(0, n, 2)
    take = tuple(take)
    lo = np.zeros_like(a[take])
    hi = np.zeros_like(lo)
    for m in range(len(DEC_LO)):
        part = np.roll(a, -m, axis=axis)[take]
        lo += DEC_LO[m] * part
        hi += DEC_HI[m] * part
    return lo, hi

def _synth_axis(lo: np.ndarray, hi: np.ndarray, axis: int) -> np.ndarray:
    n = lo.shape[axis] * 2
    shape = list(lo.shape)
    shape[axis] = n
    put = [slice(None)] * lo.ndim
    put[axis] = slice(0, n, 2)
    put = tuple(put)
    up_lo = np.zeros(shape)
    up_hi = np.zeros(shape)
    up_lo[put] = lo
    up_hi[put] = hi
    out = np.zeros(shape)
    for m in range(len(DEC_LO)):
        out += DEC_LO[m] * np.roll(up_lo, m, axis=axis)
        out += DEC_HI[m] * np.roll(up_hi, m, axis=axis)
    return out


def dwt2(a: np.ndarray) -> tuple[np.ndarray, tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """One separable level: returns (LL, (LH, HL, HH)).

    LH carries horizontal detail (highpass along columns), HL vertical.
    Both sides of ``a`` must be even.
    """
    if a.shape[0] % 2 or a.shape[1] % 2:
        raise PlaneError(f"level input must have even sides, got {a.shape}")
    lo0, hi0 = _analyze_axis(a, 0)
    ll, lh = _analyze_axis(lo0, 1)
    hl, hh = _analyze_axis(hi0, 1)
    return ll, (lh, hl, hh)


def idwt2(ll: np.ndarray, details: tuple[np.ndarray, np.ndarray, np.ndarray]) -> np.ndarray:
    lh, hl, hh = details
    lo0 = _synth_axis(ll, lh, 1)
    hi0 = _synth_axis(hl, hh, 1)
    return _synth_axis(lo0, hi0, 0)


def _pad_to_multiple(a: np.ndarray, multiple: int) -> np.ndarray:
    pad_h = (-a.shape[0]) % multiple
    pad_w = (-a.shape[1]) % multiple
    if pad_h == 0 and pad_w == 0:
        return a
    return np.pad(a, ((0, pad_h), (0, pad_w)), mode="wrap")


def wavedec2(a: np.ndarray, levels: int) -> list:
    """Multi-level decomposition: [LL_n, details_n, ..., details_1].

    The input is wrap-padded to a multiple of 2**levels; `waverec2` crops
    back, so the pair is an exact round trip on the original support.
    """
    arr = as_plane(a)
    if levels < 1:
        raise ValueError("levels must be >= 1")
    if min(arr.shape) < 2**levels:
        raise PlaneError(
            f"image {arr.shape} too small for {levels} decomposition levels"
        )
    arr = _pad_to_multiple(arr, 2**levels)
    coeffs = []
    current = arr
    for _ in range(levels):
        current, details = dwt2(current)
        coeffs.append(details)
    coeffs.append(current)
    return coeffs[::-1]


def waverec2(coeffs: list, shape: tuple[int, int]) -> np.ndarray:
    """Inverse of :func:`wavedec2`, cropped to ``shape``."""
    current = coeffs[0]
    for details in coeffs[1:]:
        current = idwt2(current, details)
    return current[: shape[0], : shape[1]]
