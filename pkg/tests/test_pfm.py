import numpy as np
import pytest

from face6d import UVPositionMap, read_pfm, read_scalar_pfm, write_pfm, write_scalar_pfm
from face6d.errors import DimensionMismatch, ParseError
from face6d.pfm import mask_path_for


def float32_map(rng, h=12, w=17):
    data = rng.normal(size=(h, w, 3)).astype(np.float32).astype(np.float64)
    weight = (rng.random((h, w)) < 0.6).astype(np.float64)
    data *= weight[:, :, None]
    return UVPositionMap(data, weight)


def test_write_read_bit_exact_for_float32_values(tmp_path, rng):
    uv_map = float32_map(rng)
    path = tmp_path / "map.pfm"
    write_pfm(uv_map, path)
    back = read_pfm(path)
    assert np.array_equal(back.data, uv_map.data)
    assert np.array_equal(back.weight, uv_map.weight)


def test_rewrite_is_byte_identical(tmp_path, rng):
    uv_map = float32_map(rng)
    first = tmp_path / "a.pfm"
    second = tmp_path / "b.pfm"
    write_pfm(uv_map, first)
    write_pfm(read_pfm(first), second)
    assert first.read_bytes() == second.read_bytes()
    assert mask_path_for(first).endswith("a.mask.pfm")
    assert (tmp_path / "a.mask.pfm").read_bytes() == (tmp_path / "b.mask.pfm").read_bytes()


def test_truncated_file_is_parse_error(tmp_path, rng):
    uv_map = float32_map(rng)
    path = tmp_path / "map.pfm"
    write_pfm(uv_map, path)
    blob = path.read_bytes()
    path.write_bytes(blob[: len(blob) - 10])
    with pytest.raises(ParseError):
        read_pfm(path)


def test_bad_magic_is_parse_error(tmp_path):
    path = tmp_path / "bad.pfm"
    path.write_bytes(b"P6\n4 4\n-1.0\n" + b"\x00" * 64)
    (tmp_path / "bad.mask.pfm").write_bytes(b"Pf\n4 4\n-1.0\n" + b"\x00" * 64)
    with pytest.raises(ParseError):
        read_pfm(path)


def test_mask_size_mismatch(tmp_path, rng):
    uv_map = float32_map(rng, h=8, w=8)
    other = float32_map(rng, h=9, w=8)
    path = tmp_path / "map.pfm"
    write_pfm(uv_map, path)
    write_scalar_pfm(other.weight, mask_path_for(path))
    with pytest.raises(DimensionMismatch):
        read_pfm(path)


def test_big_endian_read(tmp_path):
    data = np.arange(24, dtype=">f4").reshape(2, 4, 3)
    path = tmp_path / "be.pfm"
    with open(path, "wb") as fh:
        fh.write(b"PF\n4 2\n1.0\n")
        fh.write(np.flipud(data).tobytes())
    mask = np.ones((2, 4), dtype=">f4")
    with open(mask_path_for(path), "wb") as fh:
        fh.write(b"Pf\n4 2\n1.0\n")
        fh.write(np.flipud(mask).tobytes())
    back = read_pfm(path)
    assert np.array_equal(back.data, data.astype(np.float64))


def test_scalar_round_trip(tmp_path, rng):
    mask = (rng.random((15, 9)) < 0.5).astype(np.float32)
    path = tmp_path / "m.pfm"
    write_scalar_pfm(mask, path)
    assert np.array_equal(read_scalar_pfm(path), mask.astype(np.float64))
