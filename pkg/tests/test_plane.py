import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prnukit.plane import (
    PlaneError,
    as_plane,
    load_image,
    read_plane,
    save_image,
    write_plane,
)


def test_as_plane_accepts_2d():
    arr = as_plane([[1.0, 2.0], [3.0, 4.0]])
    assert arr.dtype == np.float64
    assert arr.shape == (2, 2)


@pytest.mark.parametrize(
    "bad",
    [np.zeros(4), np.zeros((2, 2, 2)), np.array([[np.nan, 0.0]]), np.array([[np.inf]])],
)
def test_as_plane_rejects(bad):
    with pytest.raises(PlaneError):
        as_plane(bad)


def test_binary_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((17, 23))
    path = tmp_path / "plane.bin"
    write_plane(path, arr)
    back = read_plane(path)
    assert back.shape == arr.shape
    np.testing.assert_array_equal(back, arr)


def test_binary_format_layout(tmp_path):
    path = tmp_path / "plane.bin"
    write_plane(path, np.array([[1.5, -2.0]]))
    raw = path.read_bytes()
    assert raw[:8] == b"PRNUPLN1"
    assert int.from_bytes(raw[8:12], "little") == 1
    assert int.from_bytes(raw[12:16], "little") == 2
    assert np.frombuffer(raw[16:], dtype="<f8").tolist() == [1.5, -2.0]


def test_read_plane_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTAPLAN" + b"\x00" * 16)
    with pytest.raises(PlaneError):
        read_plane(path)


def test_read_plane_rejects_truncated(tmp_path):
    path = tmp_path / "short.bin"
    write_plane(path, np.ones((4, 4)))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(PlaneError):
        read_plane(path)


@settings(max_examples=20, deadline=None)
@given(
    h=st.integers(min_value=1, max_value=12),
    w=st.integers(min_value=1, max_value=12),
    seed=st.integers(min_value=0, max_value=1000),
)
def test_binary_roundtrip_property(tmp_path_factory, h, w, seed):
    arr = np.random.default_rng(seed).standard_normal((h, w))
    path = tmp_path_factory.mktemp("planes") / "p.bin"
    write_plane(path, arr)
    np.testing.assert_array_equal(read_plane(path), arr)


@pytest.mark.parametrize("bitdepth,tol", [(8, 1 / 255), (16, 1 / 65535)])
def test_png_roundtrip(tmp_path, bitdepth, tol):
    rng = np.random.default_rng(1)
    arr = rng.random((16, 16))
    path = tmp_path / "img.png"
    save_image(path, arr, bitdepth=bitdepth)
    planes = load_image(path)
    assert len(planes) == 1
    assert np.abs(planes[0] - arr).max() <= tol


def test_tiff_rgb_roundtrip(tmp_path):
    import imageio.v3 as iio

    rng = np.random.default_rng(2)
    rgb = (rng.random((8, 8, 3)) * 65535).astype(np.uint16)
    path = tmp_path / "img.tiff"
    iio.imwrite(path, rgb)
    planes = load_image(path)
    assert len(planes) == 3
    for c in range(3):
        np.testing.assert_allclose(planes[c], rgb[:, :, c] / 65535.0, atol=1e-12)
