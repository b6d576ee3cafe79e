import numpy as np
import pytest

from dbini import io


def test_pfm_round_trip(tmp_path, rng):
    img = rng.normal(size=(7, 5)).astype(np.float32)
    img[2, 3] = np.nan
    io.write_pfm(tmp_path / "a.pfm", img)
    back = io.read_pfm(tmp_path / "a.pfm")
    assert back.dtype == np.float64
    assert np.array_equal(back, img.astype(np.float64), equal_nan=True)
    rgb = rng.normal(size=(4, 6, 3))
    io.write_pfm(tmp_path / "b.pfm", rgb)
    assert np.allclose(io.read_pfm(tmp_path / "b.pfm"), rgb.astype(np.float32))


def test_pfm_row_order(tmp_path):
    img = np.arange(6, dtype=np.float32).reshape(3, 2)
    io.write_pfm(tmp_path / "a.pfm", img)
    raw = (tmp_path / "a.pfm").read_bytes()
    assert raw.startswith(b"Pf\n2 3\n-1.0\n")
    # bottom row stored first
    assert np.frombuffer(raw[-24:], "<f4")[:2].tolist() == [4.0, 5.0]


def test_pfm_errors(tmp_path):
    with pytest.raises(ValueError):
        io.write_pfm(tmp_path / "a.pfm", np.zeros((2, 2, 2)))
    (tmp_path / "junk.pfm").write_bytes(b"P6\n1 1\n255\n\0\0\0")
    with pytest.raises(ValueError):
        io.read_pfm(tmp_path / "junk.pfm")


def test_mask_png(tmp_path, rng):
    m = rng.random((9, 11)) > 0.5
    io.write_mask_png(tmp_path / "m.png", m)
    assert np.array_equal(io.read_mask_png(tmp_path / "m.png"), m)


def test_normal_png_quantization(tmp_path, rng):
    n = rng.normal(size=(6, 6, 3))
    n /= np.linalg.norm(n, axis=-1, keepdims=True)
    io.write_normal_png(tmp_path / "n.png", n)
    back = io.read_normal_png(tmp_path / "n.png")
    assert np.abs(back - n).max() < 1e-4
    with pytest.raises(ValueError):
        io.read_normal_png(tmp_path / "missing.png") if False else io.read_normal_png(
            _write_gray(tmp_path))


def _write_gray(tmp_path):
    io.write_mask_png(tmp_path / "g.png", np.ones((2, 2), bool))
    return tmp_path / "g.png"


def test_read_normals_dispatch(tmp_path):
    n = np.zeros((3, 3, 3))
    n[..., 2] = 2.0
    io.write_pfm(tmp_path / "n.pfm", n)
    assert np.allclose(io.read_normals(tmp_path / "n.pfm")[..., 2], 1.0)
    io.write_pfm(tmp_path / "z.pfm", np.zeros((3, 3)))
    with pytest.raises(ValueError):
        io.read_normals(tmp_path / "z.pfm")


def test_ply_round_trip(tmp_path, rng):
    v = rng.normal(size=(10, 3))
    f = rng.integers(0, 10, size=(7, 3))
    io.write_ply(tmp_path / "m.ply", v, f)
    v2, f2 = io.read_ply(tmp_path / "m.ply")
    assert np.array_equal(v, v2) and np.array_equal(f, f2)
    io.write_ply(tmp_path / "e.ply", np.zeros((0, 3)), np.zeros((0, 3), int))
    v3, f3 = io.read_ply(tmp_path / "e.ply")
    assert v3.shape == (0, 3) and f3.shape == (0, 3)


def test_obj_is_one_based(tmp_path):
    io.write_obj(tmp_path / "m.obj", np.eye(3), np.array([[0, 1, 2]]))
    lines = (tmp_path / "m.obj").read_text().splitlines()
    assert lines[0] == "v 1.0 0.0 0.0" and lines[-1] == "f 1 2 3"


def test_csv_round_trip(tmp_path):
    io.write_csv(tmp_path / "t.csv", ["a", "b"], [[1, "x"], [2, "y"]])
    assert (tmp_path / "t.csv").read_text() == "a,b\n1,x\n2,y\n"
    assert io.read_csv(tmp_path / "t.csv") == [{"a": "1", "b": "x"}, {"a": "2", "b": "y"}]


def test_sha256(tmp_path):
    (tmp_path / "f").write_bytes(b"abc")
    assert io.sha256_file(tmp_path / "f").startswith("ba7816bf")
