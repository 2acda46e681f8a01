import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from erx.images import ImagePlane
from erx.pnm import PnmParseError, decode_pnm, encode_pnm, load_ppm, save_ppm


def test_single_white_pixel():
    img = decode_pnm(b"P6\n1 1\n255\n\xff\xff\xff")
    assert img.pixels.shape == (1, 1, 3)
    assert np.array_equal(img.pixels[0, 0], [1.0, 1.0, 1.0])


def test_gray_and_comments():
    img = decode_pnm(b"P5 # gray\n2 # width\n1\n255\n\x00\x80")
    assert img.channels == 1
    assert np.allclose(img.pixels[0, :, 0], [0.0, 128 / 255])


def test_raster_order_is_row_major():
    img = decode_pnm(b"P6 2 1 255 " + bytes([1, 2, 3, 4, 5, 6]))
    assert np.array_equal(np.round(img.pixels * 255), [[[1, 2, 3], [4, 5, 6]]])


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.sampled_from([1, 3]))))
def test_round_trip_8bit(raster):
    img = ImagePlane(raster / 255.0)
    back = decode_pnm(encode_pnm(img))
    assert np.array_equal(back.pixels, img.pixels)


def test_encode_rounds_and_clamps():
    img = ImagePlane(np.array([[[-0.5, 0.5, 1.5]]]))
    assert encode_pnm(img).endswith(bytes([0, 128, 255]))


def test_file_round_trip(tmp_path, rng):
    img = ImagePlane(np.round(rng.random((3, 5, 3)) * 255) / 255)
    path = tmp_path / "a.ppm"
    save_ppm(path, img)
    assert np.array_equal(load_ppm(path).pixels, img.pixels)
    assert [p.name for p in tmp_path.iterdir()] == ["a.ppm"]


@pytest.mark.parametrize(
    "data, offset, words",
    [
        (b"", 0, "too short"),
        (b"P3\n1 1\n255\n", 0, "magic"),
        (b"P6\n", 3, "width"),
        (b"P6\nx 1\n255\n", 3, "width"),
        (b"P6\n1\n", 5, "height"),
        (b"P6\n1 1\n", 7, "maxval"),
        (b"P6\n1a 1\n255\n", 4, "after width"),
        (b"P6\n1 1\n65535\n", 7, "maxval 255"),
        (b"P6\n0 1\n255\n", 7, "positive"),
        (b"P6\n1 1\n255", 10, "whitespace"),
        (b"P6\n2 1\n255\n\x00\x00\x00", 14, "truncated"),
        (b"P6 # only a comment", 19, "width"),
    ],
)
def test_malformed_headers(data, offset, words):
    with pytest.raises(PnmParseError) as info:
        decode_pnm(data)
    assert info.value.offset == offset
    assert words in str(info.value)
