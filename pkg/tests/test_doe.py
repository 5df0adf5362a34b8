import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from latticescope import doe
from latticescope.errors import PropagationError, ResolutionError, TilingError
from latticescope.grid import Grid2D

SPEC = doe.GratingSpec()


def continuous_coefficient(m, n):
    """Fourier coefficient of the ideal pi-step mask by direct quadrature.

    In cell coordinates (u, v) the raised triangle is u + v < 1.  For a
    non-zero order the recessed half contributes the negative of the raised
    half, so c = 2 * integral over the raised triangle.
    """
    def part(fn):
        return integrate.dblquad(lambda v, u: fn(2 * np.pi * (m * u + n * v)), 0, 1, 0, lambda u: 1 - u,
                                 epsabs=1e-12)[0]
    return 2 * complex(part(np.cos), -part(np.sin))


@pytest.fixture(scope="module")
def mask512():
    return doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(512))


@pytest.fixture(scope="module")
def eff512(mask512):
    return doe.order_efficiencies(mask512)


@pytest.mark.parametrize("order", [(1, 0), (0, 1), (1, 1), (-1, -1), (2, 0), (1, -1), (2, 1), (3, 0)])
def test_fft_matches_quadrature_oracle(eff512, order):
    expected = abs(continuous_coefficient(*order)) ** 2
    assert eff512[order] == pytest.approx(expected, abs=2e-4 * (1 / np.pi ** 2))


def test_ideal_first_order_is_one_over_pi_squared(eff512):
    for order in doe.FIRST_ORDERS:
        assert eff512[order] == pytest.approx(1 / np.pi ** 2, rel=1e-4)


def test_zeroth_order_extinguished(eff512):
    assert eff512[(0, 0)] < 1e-30


@settings(max_examples=25, deadline=None)
@given(half=st.integers(8, 40), cells=st.integers(1, 3))
def test_equal_areas_for_even_sampling(half, cells):
    n = 2 * half
    mask = doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(n, (cells, cells)))
    assert mask.raised_fraction == 0.5


@settings(max_examples=25, deadline=None)
@given(step=st.floats(0, 2 * np.pi), n=st.sampled_from([16, 32, 48]))
def test_efficiencies_sum_to_one(step, n):
    mask = doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(n), phase_step=step)
    assert sum(doe.order_efficiencies(mask).values()) == pytest.approx(1.0, abs=1e-12)


def test_multi_cell_mask_gives_same_orders():
    one = doe.order_efficiencies(doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(32)))
    three = doe.order_efficiencies(doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(32, (3, 3))))
    for order in doe.FIRST_ORDERS + ((0, 0), (2, 1)):
        assert three[order] == pytest.approx(one[order], abs=1e-14)


def test_sampled_mask_matches_exact_indicator():
    n = 64
    mask = doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(n))
    grid = mask.grid
    X, Y = grid.coordinates()
    # pixel centres sit half a step along both axes
    centre = grid.axes.sum(axis=0) / 2
    exact = doe.is_recessed(SPEC, X + centre[0], Y + centre[1])
    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    off_diagonal = i + j + 1 != n
    assert np.array_equal(mask.recessed[off_diagonal], exact[off_diagonal])


def test_cartesian_grid_rejected():
    with pytest.raises(TilingError):
        doe.synthesize_grating_profile(SPEC, Grid2D(SPEC.triangle_side / 32, 32, 32))


def test_non_integer_cells_rejected():
    g = Grid2D(SPEC.triangle_side / 32, 48, 32, angle=np.pi / 3)
    with pytest.raises(TilingError):
        doe.synthesize_grating_profile(SPEC, g)


def test_coarse_grid_rejected():
    with pytest.raises(ResolutionError):
        doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(8, (2, 2)))


@pytest.mark.parametrize("lam,deg", [(681e-9, 1.7331), (1064e-9, 2.7085)])
def test_first_order_angles(lam, deg):
    assert np.degrees(doe.first_order_angle(SPEC, lam)) == pytest.approx(deg, abs=1e-4)


def test_triple_is_120_degrees_apart():
    orders = doe.first_order_directions(SPEC, 1064e-9)
    az = [np.arctan2(o.direction[1], o.direction[0]) for o in orders]
    seps = np.sort(np.mod(np.diff(az + az[:1]), 2 * np.pi))
    assert np.allclose(seps, [2 * np.pi / 3] * 3)
    for o in orders:
        assert np.linalg.norm(o.direction) == pytest.approx(1.0)
        assert np.arcsin(np.hypot(*o.direction[:2])) == pytest.approx(doe.first_order_angle(SPEC, 1064e-9))


def test_all_six_orders():
    assert len(doe.first_order_directions(SPEC, 681e-9, all_six=True)) == 6


def test_evanescent_orders_raise():
    small = doe.GratingSpec(triangle_side=1e-6)
    with pytest.raises(PropagationError):
        doe.first_order_directions(small, 1064e-9)


def test_compromise_depth_and_phase():
    d = doe.compromise_depth(681e-9, 1064e-9)
    assert d == pytest.approx(218.125e-9)
    spec = doe.GratingSpec(etch_depth=d)
    mean_step = np.mean([doe.reflection_phase_step(spec, l) for l in (681e-9, 1064e-9)])
    # half-wave round trip at the arithmetic-mean wavelength
    assert doe.reflection_phase_step(spec, 872.5e-9) == pytest.approx(np.pi)
    assert mean_step > np.pi


def test_transmission_not_modelled():
    with pytest.raises(NotImplementedError):
        doe.reflection_phase_step(doe.GratingSpec(wavefront_mode="transmission"), 1e-6)


def test_mask_pgm_round_trip(tmp_path):
    mask = doe.synthesize_grating_profile(SPEC, SPEC.mask_grid(32, (2, 2)))
    path, side = doe.write_mask_pgm(tmp_path / "mask.pgm", mask)
    back = doe.read_mask_pgm(path)
    assert np.array_equal(back.recessed, mask.recessed)
    assert back.grid == mask.grid and back.phase_step == mask.phase_step
    assert side.exists()


def test_efficiency_csv(tmp_path, eff512):
    from latticescope._io import read_csv
    p = doe.write_efficiency_csv(tmp_path / "e.csv", SPEC, eff512, max_order=2)
    header, data = read_csv(p, ("m", "n", "kx", "ky", "efficiency"))
    assert len(data) == 25
    row = data[(data[:, 0] == 1) & (data[:, 1] == 0)][0]
    assert np.hypot(row[2], row[3]) == pytest.approx(4 * np.pi / (np.sqrt(3) * SPEC.triangle_side))
