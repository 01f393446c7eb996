"""PPM and .flo file formats: round trips and corruption handling."""

import struct

import numpy as np
import pytest

from egomatch.fileio import (FLO_MAGIC, FormatError, read_flo, read_ppm,
                             write_flo, write_ppm)


def test_ppm_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, size=(7, 9, 3)).astype(float) / 255.0
    p = tmp_path / "a.ppm"
    write_ppm(p, img)
    first = p.read_bytes()
    back = read_ppm(p)
    write_ppm(p, back)
    assert p.read_bytes() == first
    np.testing.assert_allclose(back, img, atol=1e-12)


def test_ppm_header_comments(tmp_path):
    p = tmp_path / "c.ppm"
    payload = bytes(range(2 * 2 * 3))
    p.write_bytes(b"P6\n# a comment\n2 2\n# another\n255\n" + payload)
    img = read_ppm(p)
    assert img.shape == (2, 2, 3)
    np.testing.assert_allclose(img.ravel() * 255.0, np.arange(12))


def test_ppm_rejects_bad_magic_and_maxval(tmp_path):
    p = tmp_path / "bad.ppm"
    p.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
    with pytest.raises(FormatError):
        read_ppm(p)
    p.write_bytes(b"P6\n2 2\n65535\n" + bytes(24))
    with pytest.raises(FormatError):
        read_ppm(p)


def test_ppm_rejects_truncation(tmp_path):
    p = tmp_path / "t.ppm"
    p.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
    with pytest.raises(FormatError):
        read_ppm(p)
    p.write_bytes(b"P6\n4")
    with pytest.raises(FormatError):
        read_ppm(p)


def test_ppm_write_clips_range(tmp_path):
    img = np.array([[[1.5, -0.2, 0.5]]])
    p = tmp_path / "clip.ppm"
    write_ppm(p, img)
    back = read_ppm(p)
    np.testing.assert_allclose(back[0, 0], [1.0, 0.0, 128 / 255.0])


def test_flo_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(1)
    flow = rng.normal(size=(5, 8, 2)).astype(np.float32).astype(np.float64)
    p = tmp_path / "f.flo"
    write_flo(p, flow)
    first = p.read_bytes()
    back = read_flo(p)
    np.testing.assert_array_equal(back, flow)
    write_flo(p, back)
    assert p.read_bytes() == first


def test_flo_header_layout(tmp_path):
    p = tmp_path / "h.flo"
    write_flo(p, np.zeros((3, 4, 2)))
    raw = p.read_bytes()
    magic, w, h = struct.unpack("<fii", raw[:12])
    assert abs(magic - FLO_MAGIC) < 1e-3
    assert (w, h) == (4, 3)
    assert len(raw) == 12 + 4 * 3 * 2 * 4


def test_flo_rejects_bad_magic_and_dims(tmp_path):
    p = tmp_path / "bad.flo"
    p.write_bytes(struct.pack("<fii", 123.0, 2, 2) + bytes(32))
    with pytest.raises(FormatError):
        read_flo(p)
    p.write_bytes(struct.pack("<fii", FLO_MAGIC, -1, 2))
    with pytest.raises(FormatError):
        read_flo(p)


def test_flo_rejects_truncation(tmp_path):
    p = tmp_path / "t.flo"
    p.write_bytes(struct.pack("<fii", FLO_MAGIC, 4, 4) + bytes(8))
    with pytest.raises(FormatError):
        read_flo(p)
    p.write_bytes(b"\x00\x01")
    with pytest.raises(FormatError):
        read_flo(p)


def test_write_shape_validation(tmp_path):
    with pytest.raises(FormatError):
        write_ppm(tmp_path / "x.ppm", np.zeros((4, 4)))
    with pytest.raises(FormatError):
        write_flo(tmp_path / "x.flo", np.zeros((4, 4, 3)))
