import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from latticescope import _io
from latticescope.grid import Grid2D


def test_grid_rejects_small_or_bad_pitch():
    with pytest.raises(ValueError):
        Grid2D(pitch=1.0, nx=8, ny=32)
    with pytest.raises(ValueError):
        Grid2D(pitch=0.0, nx=32, ny=32)


def test_oblique_coordinates_follow_axes():
    g = Grid2D(pitch=2.0, nx=16, ny=16, angle=np.pi / 3)
    X, Y = g.coordinates()
    assert X[1, 0] == pytest.approx(2.0) and Y[1, 0] == pytest.approx(0.0)
    assert X[0, 1] == pytest.approx(1.0) and Y[0, 1] == pytest.approx(np.sqrt(3))


def test_centered_grid_is_symmetric():
    X, Y = Grid2D.centered(1.0, 17).coordinates()
    assert X[0, 0] == -X[-1, 0] and Y[0, 0] == -Y[0, -1]


@settings(max_examples=30, deadline=None)
@given(arrays(np.int64, (5, 7), elements=st.integers(0, 65535)), st.booleans())
def test_pgm_round_trip(values, binary):
    assert np.array_equal(_io.decode_pgm(_io.encode_pgm(values, binary=binary)), values)


def test_pgm_rejects_out_of_range():
    with pytest.raises(ValueError):
        _io.encode_pgm(np.array([[70000]]))


def test_csv_round_trip(tmp_path):
    p = _io.write_csv(tmp_path / "a.csv", ("x", "y"), [(1, 0.5), (2, 1e-300)])
    header, data = _io.read_csv(p, ("x", "y"))
    assert header == ["x", "y"] and data[1, 1] == 1e-300


def test_csv_header_mismatch(tmp_path):
    p = _io.write_csv(tmp_path / "a.csv", ("x", "y"), [(1, 2)])
    with pytest.raises(ValueError, match="expected header"):
        _io.read_csv(p, ("t_s", "y"))


def test_atomic_write_leaves_no_temporaries(tmp_path):
    _io.atomic_write_text(tmp_path / "f.txt", "hello")
    _io.atomic_write_text(tmp_path / "f.txt", "again")
    assert [p.name for p in tmp_path.iterdir()] == ["f.txt"]
    assert (tmp_path / "f.txt").read_text() == "again"


def test_sidecar_round_trip(tmp_path):
    p = _io.write_sidecar(tmp_path / "s.txt", {"pitch_m": 1.5e-8, "name": "x"})
    assert _io.read_sidecar(p) == {"pitch_m": "1.5e-08", "name": "x"}
