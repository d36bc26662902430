import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from donorsim import grids


def test_csv_round_trip(tmp_path):
    a = np.array([1.0, 2.5e-9, -3.0])
    b = np.array([0.0, 1e12, np.pi])
    path = grids.write_csv(tmp_path / "t.csv", {"a": (a, "m"), "b": (b, "Hz")}, ["hello"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# hello"
    assert lines[1] == "# a [m], b [Hz]"
    out = grids.read_csv(path)
    np.testing.assert_allclose(out["a"], a, rtol=1e-8)
    np.testing.assert_allclose(out["b"], b, rtol=1e-8)
    with pytest.raises(ValueError):
        grids.write_csv(tmp_path / "u.csv", {"a": (a, ""), "b": (b[:2], "")})


def test_grid_columns_order():
    x, y = np.array([-1e-6, 1e-6]), np.array([0.0, 10e-9, 20e-9])
    f = np.arange(6.0).reshape(2, 3)
    cols = grids.grid_columns(x, y, {"f": (f, "Hz")})
    np.testing.assert_allclose(cols["x"][0], [-1, -1, -1, 1, 1, 1])
    np.testing.assert_allclose(cols["y"][0], [0, 10, 20, 0, 10, 20])
    np.testing.assert_array_equal(cols["f"][0], np.arange(6.0))
    with pytest.raises(ValueError):
        grids.grid_columns(x, y, {"f": (f.T, "Hz")})


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 5)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
@settings(max_examples=30, deadline=None)
def test_binary_round_trip_is_exact(data):
    import tempfile
    from pathlib import Path

    nx, ny = data.shape
    x = np.linspace(-1.0, 1.0, nx)
    y = np.geomspace(1e-9, 1e-7, ny)
    with tempfile.TemporaryDirectory() as d:
        p = grids.write_grid(Path(d) / "g.bin", x, y, {"f": data, "neg": -data})
        g = grids.read_grid(p)
        assert p.stat().st_size == 8 + 12 + 16 + 8 * (nx + ny) + 2 * 32 + 2 * 8 * nx * ny
    np.testing.assert_array_equal(g.x, x)
    np.testing.assert_array_equal(g.y, y)
    np.testing.assert_array_equal(g.fields["f"], data)
    assert list(g.fields) == ["f", "neg"]


def test_binary_header(tmp_path):
    x = np.array([0.0, 1.0, 2.0])
    y = np.array([0.0, 1.0, 3.0])
    p = grids.write_grid(tmp_path / "g.bin", x, y, {"a": np.zeros((3, 3))})
    raw = p.read_bytes()
    assert raw[:8] == b"DSGRID01"
    assert np.frombuffer(raw, "<u4", 3, 8).tolist() == [3, 3, 1]
    assert np.frombuffer(raw, "<f8", 2, 20).tolist() == [1.0, 0.0]


def test_binary_rejects_bad_input(tmp_path):
    x = np.array([0.0, 1.0])
    with pytest.raises(ValueError):
        grids.write_grid(tmp_path / "a.bin", x, x, {"n" * 33: np.zeros((2, 2))})
    with pytest.raises(ValueError):
        grids.write_grid(tmp_path / "b.bin", x, x, {"a": np.zeros((3, 2))})
    p = grids.write_grid(tmp_path / "c.bin", x, x, {"a": np.zeros((2, 2))})
    (tmp_path / "d.bin").write_bytes(p.read_bytes() + b"\0")
    with pytest.raises(ValueError):
        grids.read_grid(tmp_path / "d.bin")
    (tmp_path / "e.bin").write_bytes(b"NOTAGRID" + p.read_bytes()[8:])
    with pytest.raises(ValueError):
        grids.read_grid(tmp_path / "e.bin")


def test_sha256(tmp_path):
    p = tmp_path / "f"
    p.write_bytes(b"abc")
    assert grids.sha256(p) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
