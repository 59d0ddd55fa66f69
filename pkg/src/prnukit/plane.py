"""Image plane carrier and I/O.

Every raster in the toolkit (scenes, captures, denoised images, residuals,
fingerprints, correlation surfaces) is a 2D float64 numpy array of
dimensionless luminance values. This module provides validation helpers,
the shared on-disk binary format, and ingestion of PNG/TIFF files.

Binary plane format: magic ``PRNUPLN1``, then height and width as 32-bit
little-endian unsigned integers, then the samples as row-major 64-bit
little-endian floats.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

PLANE_MAGIC = b"PRNUPLN1"


class PlaneError(ValueError):
    """Raised when an array does not qualify as a valid image plane."""


def as_plane(data, *, name: str = "plane") -> np.ndarray:
    """Validate and return ``data`` as a 2D float64 plane.

    Requires at least one row and column and all-finite values.
    """
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim != 2:
        raise PlaneError(f"{name} must be 2D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise PlaneError(f"{name} must have positive dimensions, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PlaneError(f"{name} contains non-finite values")
    return arr


def same_shape(a: np.ndarray, b: np.ndarray, *, names: str = "planes") -> None:
    if a.shape != b.shape:
        raise PlaneError(f"{names} dimensions differ: {a.shape} vs {b.shape}")


def write_plane(path, plane: np.ndarray) -> None:
    """Write a plane in the shared binary format."""
    arr = as_plane(plane)
    h, w = arr.shape
    with open(path, "wb") as fh:
        fh.write(PLANE_MAGIC)
        fh.write(struct.pack("<II", h, w))
        fh.write(arr.astype("<f8", copy=False).tobytes(order="C"))


def read_plane(path) -> np.ndarray:
    """Read a plane written by :func:`write_plane`."""
    with open(path, "rb") as fh:
        magic = fh.read(len(PLANE_MAGIC))
        if magic != PLANE_MAGIC:
            raise PlaneError(f"{path}: bad magic {magic!r}")
        h, w = struct.unpack("<II", fh.read(8))
        if h < 1 or w < 1:
            raise PlaneError(f"{path}: invalid dimensions {h}x{w}")
        raw = fh.read(8 * h * w)
        if len(raw) != 8 * h * w:
            raise PlaneError(f"{path}: truncated payload")
        arr = np.frombuffer(raw, dtype="<f8").reshape(h, w)
    return as_plane(arr, name=str(path))


def load_image(path) -> list[np.ndarray]:
    """Load an 8/16-bit PNG or TIFF as a list of channel planes in [0, 1].

    Grayscale images yield one plane; RGB(A) images yield the three color
    planes (alpha dropped). Values are normalized by the dtype's full scale.
    """
    import imageio.v3 as iio

    raw = iio.imread(Path(path))
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    elif np.issubdtype(raw.dtype, np.floating):
        scale = 1.0
    else:
        raise PlaneError(f"{path}: unsupported dtype {raw.dtype}")
    arr = raw.astype(np.float64) / scale
    if arr.ndim == 2:
        return [as_plane(arr, name=str(path))]
    if arr.ndim == 3 and arr.shape[2] in (3, 4):
        return [as_plane(arr[:, :, c], name=str(path)) for c in range(3)]
    raise PlaneError(f"{path}: unsupported image shape {raw.shape}")


def save_image(path, plane: np.ndarray, *, bitdepth: int = 16) -> None:
    """Save a [0, 1] plane as a grayscale PNG/TIFF (values clipped)."""
    import imageio.v3 as iio

    arr = np.clip(as_plane(plane), 0.0, 1.0)
    if bitdepth == 8:
        iio.imwrite(Path(path), np.round(arr * 255.0).astype(np.uint8))
    elif bitdepth == 16:
        iio.imwrite(Path(path), np.round(arr * 65535.0).astype(np.uint16))
    else:
        raise ValueError(f"unsupported bit depth {bitdepth}")
