import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from latticescope import eom, lattice
from latticescope.errors import GeometryError, RangeError

from oracles import correlation_shift, periodic_grid

MOD = eom.ModulatorSpec()
AMP = eom.AmplifierSpec()
SPARK = eom.DischargeSpec()
LAM = 681e-9
GEO = lattice.LatticeConfig.hexagonal(LAM, np.radians(18), azimuth0=0.0)


def ln_ordinary_index(lam_um):
    """Extraordinary-free lithium niobate ordinary index, three-term Sellmeier typed in independently."""
    l2 = lam_um ** 2
    return np.sqrt(1 + 2.6734 * l2 / (l2 - 0.01764) + 1.2290 * l2 / (l2 - 0.05914) + 12.614 * l2 / (l2 - 474.60))


def test_half_wave_voltage_oracle():
    n = ln_ordinary_index(0.681)
    single = 681e-9 / (n ** 3 * 8.6e-12)
    assert eom.half_wave_voltage(eom.ModulatorSpec(passes=1), LAM) == pytest.approx(single, rel=1e-12)
    assert single == pytest.approx(6.7e3, rel=0.01)
    assert eom.half_wave_voltage(MOD, LAM) == pytest.approx(single / 2, rel=1e-12)


def test_half_wave_voltage_linear_in_wavelength_at_fixed_index():
    fixed = eom.ModulatorSpec(ordinary_index_model=None)
    assert eom.half_wave_voltage(fixed, 1362e-9) == pytest.approx(2 * eom.half_wave_voltage(fixed, 681e-9))


def test_oblique_incidence_lowers_half_wave_voltage():
    tilted = eom.ModulatorSpec(incidence_angle=np.radians(10))
    n = ln_ordinary_index(0.681)
    inside = np.arcsin(np.sin(np.radians(10)) / n)
    assert eom.half_wave_voltage(tilted, LAM) == pytest.approx(eom.half_wave_voltage(MOD, LAM) * np.cos(inside))


def test_pad_phase_values():
    vpi = eom.half_wave_voltage(MOD, LAM)
    assert eom.pad_phase(MOD, LAM, vpi) == pytest.approx(np.pi)
    assert eom.pad_phase(MOD, LAM, 2 * vpi) == pytest.approx(2 * np.pi)
    rounded = eom.ModulatorSpec(r13=MOD.r13 * vpi / 3.4e3)
    assert eom.pad_phase(rounded, LAM, 5.2e3) / np.pi == pytest.approx(1.529, abs=1e-3)


@settings(max_examples=50)
@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
def test_pad_phase_linearity(v1, v2):
    total = eom.pad_phase(MOD, LAM, v1 + v2)
    assert total == pytest.approx(eom.pad_phase(MOD, LAM, v1) + eom.pad_phase(MOD, LAM, v2), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-20, 20), min_size=3, max_size=3), st.floats(-50, 50))
def test_gauge_invariance_and_closure(phases, c):
    d, _ = eom.phases_to_displacement(phases, GEO)
    d2, _ = eom.phases_to_displacement(np.array(phases) + c, GEO)
    assert np.allclose(d, d2, atol=1e-9 * GEO.lattice_constant)
    G = GEO.fringe_vectors()
    # the dependent third fringe: (k3 - k1) . d = -(phi3 - phi1)
    assert G[2] @ d == pytest.approx(-(phases[2] - phases[0]), abs=1e-9)


def test_equal_phases_no_motion():
    d, sites = eom.phases_to_displacement([1.3, 1.3, 1.3], GEO)
    assert np.allclose(d, 0) and sites == 0


def test_full_turn_is_one_site_and_pattern_repeats():
    d, sites = eom.phases_to_displacement([2 * np.pi, 0, 0], GEO)
    assert sites == pytest.approx(1.0)
    assert np.linalg.norm(d) == pytest.approx(GEO.lattice_constant)
    grid = periodic_grid(GEO.lattice_constant, cells=2)
    a = lattice.interference_intensity(GEO, grid).values
    b = lattice.interference_intensity(GEO.with_phases([2 * np.pi, 0, 0]), grid).values
    assert np.max(np.abs(a - b)) < 1e-12 * a.max()


def test_5200_volt_drive_matches_cross_correlation():
    volts = np.array([5.2e3, -5.2e3, -5.2e3])
    phases = eom.pad_phase(MOD, LAM, volts)
    d, sites = eom.phases_to_displacement(phases, GEO)
    grid = periodic_grid(GEO.lattice_constant)
    # accumulate small steps so each correlation stays inside one lattice cell
    steps = np.linspace(0, 1, 41)
    total = np.zeros(2)
    prev = lattice.interference_intensity(GEO, grid)
    for s in steps[1:]:
        cur = lattice.interference_intensity(GEO.with_phases(s * phases), grid)
        total += correlation_shift(prev, cur)
        prev = cur
    assert np.linalg.norm(d - total) < 0.02 * np.linalg.norm(total)
    assert sites == pytest.approx(np.linalg.norm(total) / GEO.lattice_constant, rel=0.02)
    assert sites == pytest.approx(1.546, abs=0.005)


def test_collinear_geometry_rejected():
    class Flat:
        def fringe_vectors(self):
            return np.array([[1.0, 0.0], [2.0, 0.0], [-3.0, 0.0]])
    with pytest.raises(GeometryError):
        eom.phases_to_displacement([1, 0, 0], Flat())


def test_slew_and_ramp():
    assert AMP.slew_rate(MOD) == pytest.approx(625e6)
    r = eom.slew_limited_ramp(6.8e3, eom.AmplifierSpec(current_limit=9.6e-3), MOD)
    assert r.duration == pytest.approx(11.33e-6, rel=1e-3)
    assert eom.slew_limited_ramp(0.0, AMP, MOD).duration == 0


@settings(max_examples=30, deadline=None)
@given(st.floats(-9e3, 9e3).filter(lambda v: abs(v) > 1), st.integers(20, 400))
def test_ramp_continuity(dv, samples):
    r = eom.slew_limited_ramp(dv, AMP, MOD, samples=samples, hold=1e-6)
    dt = np.diff(r.timestamps)
    rates = np.abs(np.diff(r.voltage)) / dt
    assert np.all(rates <= r.slew_rate * (1 + 1e-9))
    assert r.voltage[-1] == pytest.approx(dv)


def test_ramp_range_error():
    with pytest.raises(RangeError):
        eom.slew_limited_ramp(9.5e3, AMP, MOD)


def test_phase_slew():
    ps = eom.phase_slew(AMP, MOD, LAM)
    assert ps == pytest.approx(np.pi / eom.half_wave_voltage(MOD, LAM) * 625e6)
    doubled = eom.ModulatorSpec(pad_capacitance=32e-12)
    assert eom.phase_slew(AMP, doubled, LAM) == pytest.approx(ps / 2)
    nominal = np.pi / 3.4e3 * 600e6
    assert 2 * np.pi / nominal == pytest.approx(11.3e-6, rel=0.01)


def test_discharge_time_constant_and_current():
    w = eom.spark_discharge(9e3, MOD, eom.DischargeSpec(reservoir_capacitance=1e-6))
    assert w.tau == pytest.approx(80e-12, rel=1e-4)
    assert w.ideal_peak_current == pytest.approx(1.8e3, rel=1e-3)
    assert w.peak_current < w.ideal_peak_current


@settings(max_examples=20, deadline=None)
@given(st.floats(1e3, 9e3), st.floats(1e-10, 1e-7), st.floats(-2e3, 2e3), st.one_of(st.just(0.0), st.floats(1e-13, 20e-9)))
def test_discharge_charge_conservation(v0, cf, bias, ignition):
    w = eom.spark_discharge(v0, MOD, eom.DischargeSpec(cf, bias, ignition))
    edges = [0.0, ignition, ignition + 60 * w.tau] if ignition else [0.0, 60 * w.tau]
    q = sum(integrate.quad(w.current_at, a, b, epsabs=0, epsrel=1e-9, limit=200)[0]
            for a, b in zip(edges[:-1], edges[1:]) if b > a)
    assert q == pytest.approx(w.effective_capacitance * (v0 - bias), rel=1e-6)


def test_discharge_without_ignition_is_exponential():
    w = eom.spark_discharge(5e3, MOD, eom.DischargeSpec(ignition_timescale=0.0))
    t = np.array([0.0, w.tau, 3 * w.tau])
    expected = w.v_final + (5e3 - w.v_final) * np.exp(-t / w.tau)
    assert np.allclose(w.voltage_at(t), expected)
    assert w.peak_current == w.ideal_peak_current


def test_ignition_dominates_rise_time():
    w = eom.spark_discharge(9e3, MOD, SPARK)
    rise = eom.rise_time_10_90(w.timestamps, w.voltage)
    # a uniform conduction onset of duration T gives a 10-90 % time close to 0.8 T
    assert rise == pytest.approx(0.8 * SPARK.ignition_timescale, rel=0.02)


def test_sawtooth_reset_keeps_one_site():
    vpi = eom.half_wave_voltage(MOD, LAM)
    ramp = eom.slew_limited_ramp(2 * vpi, AMP, MOD)
    end = ramp.timestamps[-1]
    # reservoir sized so the discharge lands at 0 V
    bias = -MOD.pad_capacitance * 2 * vpi / SPARK.reservoir_capacitance
    spark = eom.spark_discharge(2 * vpi, MOD, eom.DischargeSpec(SPARK.reservoir_capacitance, bias, 10e-9))
    t = np.r_[ramp.timestamps, end + spark.timestamps[1:], end + spark.timestamps[-1] + 1e-6]
    v1 = np.r_[ramp.voltage, spark.voltage[1:], spark.voltage[-1]]
    V = np.column_stack([v1, np.zeros_like(v1), np.zeros_like(v1)])
    traj = eom.drive_to_trajectory(t, V, MOD, LAM, GEO)
    assert abs(v1[-1]) < 1e-6
    assert len(traj.resets) == 1 and traj.resets[0][3] == -1
    assert traj.sites[-1] == pytest.approx(1.0, abs=1e-6)
    n = ramp.timestamps.size
    assert np.all(np.diff(traj.sites[:n]) >= -1e-12)
    # after the reset only the last few volts of RC settling remain
    assert np.max(np.abs(traj.sites[n:] - 1.0)) < 0.01


def test_fast_partial_jump_moves_pattern():
    w = eom.spark_discharge(3e3, MOD, SPARK)
    V = np.column_stack([w.voltage, np.zeros_like(w.voltage), np.zeros_like(w.voltage)])
    traj = eom.drive_to_trajectory(w.timestamps, V, MOD, LAM, GEO)
    assert not traj.resets
    assert eom.rise_time_10_90(w.timestamps, traj.sites) == pytest.approx(
        eom.rise_time_10_90(w.timestamps, w.voltage), rel=1e-6)


def test_trajectory_csv(tmp_path):
    from latticescope._io import read_csv
    t = np.linspace(0, 1e-5, 11)
    V = np.column_stack([np.linspace(0, 1e3, 11), np.zeros(11), np.zeros(11)])
    path = eom.write_trajectory_csv(tmp_path / "t.csv", eom.drive_to_trajectory(t, V, MOD, LAM, GEO))
    header, data = read_csv(path, ("t_s", "phi1", "phi2", "phi3", "dx_nm", "dy_nm", "sites"))
    assert data.shape == (11, 7)
    vt, vv = eom.read_voltage_csv(eom.write_voltage_csv(tmp_path / "v.csv", t, V))
    assert np.array_equal(vv, V)
