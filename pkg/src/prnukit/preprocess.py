"""Residual extraction: wavelet-domain denoising plus residual cleaning.

A capture is split into a denoised plane (the brightness covariate used by
all estimators) and a residual (carrying the attenuated fingerprint). The
denoiser is a local Wiener shrinkage of detail coefficients in an
orthogonal wavelet decomposition; cleaning consists of row/column
zero-meaning followed by an adaptive Wiener filter in the DFT domain that
suppresses periodic artifacts while passing broadband noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.ndimage import uniform_filter

from . import wavelet
from .plane import PlaneError, as_plane, same_shape

#: BT.601 luma weights used for every RGB -> gray reduction.
GRAY_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class DenoiseParams:
    """Wavelet Wiener denoiser configuration.

    ``sigma0`` is the assumed noise standard deviation on the 0-255 scale
    (planes themselves live in [0, 1], so it is divided by 255 internally).
    """

    levels: int = 4
    sigma0: float = 3.0
    windows: tuple[int, ...] = (3, 5, 7, 9)

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError("levels must be >= 1")
        if self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if any(w < 3 or w % 2 == 0 for w in self.windows):
            raise ValueError("windows must be odd and >= 3")


@dataclass
class ResidualPair:
    """Residual plane w and denoised plane x from one capture.

    Before cleaning, ``residual + denoised`` reproduces the capture exactly.
    ``cleaned`` records whether zero-meaning + spectral Wiener were applied
    to the residual afterwards.
    """

    residual: np.ndarray
    denoised: np.ndarray
    cleaned: bool = False

    def __post_init__(self):
        same_shape(self.residual, self.denoised, names="residual/denoised")


def _shrink_detail(coeff: np.ndarray, noise_var: float, windows) -> np.ndarray:
    """Wiener-estimate the clean detail coefficients.

    Local signal variance: windowed mean of coeff^2 minus the noise floor,
    clipped at zero and minimized over the window list.
    """
    energy = coeff * coeff
    sig_var = np.full_like(coeff, np.inf)
    for win in windows:
        local = uniform_filter(energy, win, mode="constant")
        sig_var = np.minimum(sig_var, local)
    sig_var = np.maximum(sig_var - noise_var, 0.0)
    return coeff * (sig_var / (sig_var + noise_var))


def denoise(capture: np.ndarray, params: DenoiseParams = DenoiseParams()) -> ResidualPair:
    """Split a capture into denoised plane and residual.

    The approximation band passes through untouched; every detail subband
    is shrunk by the local Wiener rule. The denoised plane is clipped to
    the capture's own value range, and the residual is the exact
    complement: capture - denoised.
    """
    arr = as_plane(capture, name="capture")
    coeffs = wavelet.wavedec2(arr, params.levels)
    noise_var = (params.sigma0 / 255.0) ** 2
    shrunk = [coeffs[0]]
    for details in coeffs[1:]:
        shrunk.append(tuple(_shrink_detail(c, noise_var, params.windows) for c in details))
    den = wavelet.waverec2(shrunk, arr.shape)
    den = np.clip(den, arr.min(), arr.max())
    return ResidualPair(arr - den, den)


def rgb_to_gray(r: np.ndarray, g: np.ndarray, b: np.ndarray) -> np.ndarray:
    """BT.601 weighted sum of three equally sized planes."""
    r = as_plane(r, name="r")
    g = as_plane(g, name="g")
    b = as_plane(b, name="b")
    same_shape(r, g, names="r/g")
    same_shape(r, b, names="r/b")
    wr, wg, wb = GRAY_WEIGHTS
    return wr * r + wg * g + wb * b


def zero_mean(residual: np.ndarray) -> np.ndarray:
    """Subtract each row mean, then each column mean.

    Suppresses linear row/column pattern artifacts; idempotent.
    """
    arr = as_plane(residual, name="residual")
    out = arr - arr.mean(axis=1, keepdims=True)
    out -= out.mean(axis=0, keepdims=True)
    return out


def wiener_dft(residual: np.ndarray, *, windows=(3, 5, 7, 9)) -> np.ndarray:
    """Suppress periodic artifacts in the spectrum, keep broadband noise.

    The noise floor is the median AC spectral power debiased by ln(2)
    (the median of an exponential law sits at ln(2) times its mean), so a
    flat spectrum passes nearly unattenuated. Each AC coefficient is scaled
    by floor / max(floor, local power), with the local power minimized over
    several window sizes; the DC term is zeroed.
    """
    arr = as_plane(residual, name="residual")
    n = arr.size
    spectrum = scipy.fft.fft2(arr)
    power = (spectrum.real**2 + spectrum.imag**2) / n
    ac = np.ones(arr.shape, dtype=bool)
    ac[0, 0] = False
    noise_var = np.median(power[ac]) / np.log(2.0)
    if noise_var <= 0.0:
        return np.zeros_like(arr)
    local = np.full_like(power, np.inf)
    # the spectral plane is periodic, so the local window must wrap; this
    # also keeps the gain conjugate-symmetric and the output real
    for win in windows:
        local = np.minimum(local, uniform_filter(power, win, mode="wrap"))
    gain = noise_var / np.maximum(noise_var, local)
    gain[0, 0] = 0.0
    out = scipy.fft.ifft2(spectrum * gain)
    imag_energy = float(np.sum(out.imag**2))
    real_energy = float(np.sum(out.real**2))
    if real_energy > 0 and imag_energy > 1e-9 * real_energy:
        raise PlaneError("spectral Wiener output is not real-valued")
    return np.ascontiguousarray(out.real)


def clean_residual(residual: np.ndarray) -> np.ndarray:
    """Zero-meaning followed by the spectral Wiener filter."""
    return wiener_dft(zero_mean(residual))


def extract_residual(
    capture,
    params: DenoiseParams = DenoiseParams(),
    *,
    clean: bool = True,
) -> ResidualPair:
    """Full residual pipeline for one capture.

    ``capture`` is either a single gray plane or a (r, g, b) sequence.
    Channels are denoised independently; the residuals and the denoised
    planes are each reduced to gray with the same weights, keeping the
    covariate consistent with the residual. With ``clean`` set, the gray
    residual is zero-meaned and Wiener-filtered.
    """
    if isinstance(capture, (list, tuple)):
        if len(capture) != 3:
            raise PlaneError(f"expected 3 channels, got {len(capture)}")
        pairs = [denoise(chan, params) for chan in capture]
        residual = rgb_to_gray(*(p.residual for p in pairs))
        denoised = rgb_to_gray(*(p.denoised for p in pairs))
    else:
        pair = denoise(capture, params)
        residual, denoised = pair.residual, pair.denoised
    if clean:
        residual = clean_residual(residual)
    return ResidualPair(residual, denoised, cleaned=clean)
