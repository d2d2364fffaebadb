"""Portable float map round trips and malformed-input handling."""

from __future__ import annotations

import numpy as np
import pytest

from splatinsert.errors import ParseError
from splatinsert.pfm import read_pfm, write_pfm


def test_roundtrip_grayscale(tmp_path):
    arr = np.random.default_rng(0).normal(size=(5, 7)).astype(np.float32)
    p = tmp_path / "g.pfm"
    write_pfm(p, arr)
    back = read_pfm(p)
    assert back.dtype == np.float32
    np.testing.assert_array_equal(back, arr)


def test_roundtrip_color(tmp_path):
    arr = np.random.default_rng(1).uniform(size=(4, 6, 3)).astype(np.float32)
    p = tmp_path / "c.pfm"
    write_pfm(p, arr)
    np.testing.assert_array_equal(read_pfm(p), arr)


def test_header_magic(tmp_path):
    gray = tmp_path / "a.pfm"
    write_pfm(gray, np.zeros((2, 2), dtype=np.float32))
    assert gray.read_bytes()[:2] == b"Pf"
    color = tmp_path / "b.pfm"
    write_pfm(color, np.zeros((2, 2, 3), dtype=np.float32))
    assert color.read_bytes()[:2] == b"PF"


def test_negative_scale_little_endian(tmp_path):
    p = tmp_path / "le.pfm"
    write_pfm(p, np.zeros((2, 2), dtype=np.float32))
    lines = p.read_bytes().split(b"\n", 3)
    assert float(lines[2]) < 0


def test_row_order_bottom_up(tmp_path):
    # PFM stores the bottom row first; the top-left value must land last
    arr = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)
    p = tmp_path / "o.pfm"
    write_pfm(p, arr)
    payload = p.read_bytes().split(b"\n", 3)[3]
    vals = np.frombuffer(payload, dtype="<f4")
    np.testing.assert_array_equal(vals, [3.0, 4.0, 1.0, 2.0])


def test_rejects_bad_magic(tmp_path):
    p = tmp_path / "bad.pfm"
    p.write_bytes(b"P5\n2 2\n1.0\n" + b"\x00" * 16)
    with pytest.raises(ParseError):
        read_pfm(p)


def test_rejects_truncated_payload(tmp_path):
    p = tmp_path / "trunc.pfm"
    write_pfm(p, np.ones((4, 4), dtype=np.float32))
    data = p.read_bytes()
    p.write_bytes(data[:-8])
    with pytest.raises(ParseError):
        read_pfm(p)


def test_rejects_bad_dims(tmp_path):
    p = tmp_path / "dims.pfm"
    p.write_bytes(b"Pf\nnope\n-1.0\n")
    with pytest.raises(ParseError):
        read_pfm(p)


def test_positive_scale_big_endian(tmp_path):
    # big-endian variant read support
    arr = np.array([[1.5, -2.0]], dtype=np.float32)
    payload = arr[::-1].astype(">f4").tobytes()
    p = tmp_path / "be.pfm"
    p.write_bytes(b"Pf\n2 1\n1.0\n" + payload)
    np.testing.assert_array_equal(read_pfm(p), arr)


def test_writer_rejects_wrong_channels(tmp_path):
    with pytest.raises(ValueError):
        write_pfm(tmp_path / "x.pfm", np.zeros((2, 2, 2), dtype=np.float32))
