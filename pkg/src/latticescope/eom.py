"""Electro-optic phase-modulator array and its drive electronics.

Three lithium-niobate pads each shift the phase of one lattice beam.
Slow translation uses a slew-limited linear amplifier; fast resets discharge
a pad through a spark gap into a reservoir capacitor.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _io
from .errors import GeometryError, RangeError
from .glass import GlassModel, get_glass, refractive_index
from .lattice import LatticeConfig, displacement_in_sites, phases_to_pattern_shift

_VOLTAGE_HEADER = ("t_s", "V1", "V2", "V3")
_TRAJECTORY_HEADER = ("t_s", "phi1", "phi2", "phi3", "dx_nm", "dy_nm", "sites")


@dataclass(frozen=True)
class ModulatorSpec:
    ordinary_index_model: GlassModel = field(default_factory=lambda: get_glass("LiNbO3_o"))
    r13: float = 8.6e-12  # m/V
    passes: int = 2
    incidence_angle: float = 0.0
    pad_capacitance: float = 16e-12
    series_resistance: float = 5.0

    def __post_init__(self):
        if not self.r13 > 0:
            raise ValueError("r13 must be positive")
        if self.passes not in (1, 2):
            raise ValueError("passes must be 1 or 2")
        if not 0 <= self.incidence_angle < np.pi / 2:
            raise ValueError("incidence_angle must lie in [0, pi/2)")
        if not (self.pad_capacitance > 0 and self.series_resistance > 0):
            raise ValueError("pad_capacitance and series_resistance must be positive")


@dataclass(frozen=True)
class AmplifierSpec:
    supply_voltage: float = 4.5e3
    current_limit: float = 10e-3
    small_signal_bandwidth: float = 1e6

    def __post_init__(self):
        if not (self.supply_voltage > 0 and self.current_limit > 0 and self.small_signal_bandwidth > 0):
            raise ValueError("amplifier parameters must be positive")

    def slew_rate(self, mod: ModulatorSpec) -> float:
        """Voltage slew (V/s) into one pad: current limit over pad capacitance."""
        return self.current_limit / mod.pad_capacitance


@dataclass(frozen=True)
class DischargeSpec:
    reservoir_capacitance: float = 10e-9
    reservoir_bias: float = 0.0
    ignition_timescale: float = 10e-9

    def __post_init__(self):
        if not self.reservoir_capacitance > 0:
            raise ValueError("reservoir_capacitance must be positive")
        if self.ignition_timescale < 0:
            raise ValueError("ignition_timescale must be non-negative")


@dataclass(frozen=True)
class PhaseWaveform:
    timestamps: np.ndarray
    phases: np.ndarray  # shape (n, 3)

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        p = np.asarray(self.phases, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "phases", p)
        if p.shape != (t.size, 3):
            raise ValueError("phases must have shape (len(timestamps), 3)")
        if np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValueError("phases must be finite")


def internal_angle(mod: ModulatorSpec, wavelength: float) -> float:
    n = refractive_index(mod.ordinary_index_model, wavelength)
    return float(np.arcsin(np.sin(mod.incidence_angle) / n))


def half_wave_voltage(mod: ModulatorSpec, wavelength: float) -> float:
    """``lambda / (n_o^3 r13)``, divided by the number of passes.

    At oblique incidence the beam's path through the crystal grows by
    ``1 / cos(theta_internal)``; the accumulated phase grows with it, so the
    half-wave voltage shrinks by ``cos(theta_internal)``.
    """
    n = refractive_index(mod.ordinary_index_model, wavelength)
    v = wavelength / (n ** 3 * mod.r13) / mod.passes
    return float(v * np.cos(internal_angle(mod, wavelength)))


def pad_phase(mod: ModulatorSpec, wavelength: float, voltage):
    """Phase shift ``pi V / V_pi`` (exactly linear)."""
    return np.pi * np.asarray(voltage, dtype=float) / half_wave_voltage(mod, wavelength)


def _dominant_pad(phases: np.ndarray) -> int:
    dev = phases - phases.mean(axis=-1, keepdims=True)
    if dev.ndim == 2:
        dev = np.ptp(dev, axis=0)
    return int(np.argmax(np.abs(dev)))


def phases_to_displacement(phases, geometry: LatticeConfig, pad: int | None = None) -> tuple[np.ndarray, float]:
    """Lattice displacement for pad phases ``(phi1, phi2, phi3)``.

    Returns the displacement 2-vector and the number of sites moved along the
    translation direction of the dominant pad (or ``pad`` when given).
    """
    phases = np.asarray(phases, dtype=float)
    G = geometry.fringe_vectors()
    if abs(np.linalg.det(G[:2])) < 1e-12 * np.linalg.norm(G[0]) * np.linalg.norm(G[1]):
        raise GeometryError("fringe wavevectors are collinear")
    d = phases_to_pattern_shift(geometry, phases)
    pad = _dominant_pad(phases) if pad is None else pad
    return d, displacement_in_sites(geometry, d, pad)


@dataclass(frozen=True)
class VoltageRamp:
    timestamps: np.ndarray
    voltage: np.ndarray
    slew_rate: float
    duration: float


def slew_limited_ramp(delta_v: float, amp: AmplifierSpec, mod: ModulatorSpec, v_start: float = 0.0,
                      samples: int = 201, hold: float = 0.0) -> VoltageRamp:
    """Linear ramp by ``delta_v`` at the amplifier's slew limit, then an optional hold."""
    if abs(delta_v) > 2 * amp.supply_voltage:
        raise RangeError(f"|delta_v| = {abs(delta_v):.4g} V exceeds the differential swing {2 * amp.supply_voltage:.4g} V")
    slew = amp.slew_rate(mod)
    duration = abs(delta_v) / slew
    if duration == 0.0:
        return VoltageRamp(np.array([0.0]), np.array([float(v_start)]), slew, 0.0)
    t = np.linspace(0.0, duration, samples)
    v = v_start + np.sign(delta_v) * slew * t
    v[-1] = v_start + delta_v
    if hold > 0:
        dt = t[1] - t[0]
        extra = duration + dt * np.arange(1, int(np.ceil(hold / dt)) + 1)
        t = np.concatenate([t, extra])
        v = np.concatenate([v, np.full(extra.size, v_start + delta_v)])
    return VoltageRamp(t, v, slew, duration)


def phase_slew(amp: AmplifierSpec, mod: ModulatorSpec, wavelength: float) -> float:
    """Phase slew rate (rad/s) of one pad driven at the slew limit."""
    return np.pi / half_wave_voltage(mod, wavelength) * amp.slew_rate(mod)


@dataclass(frozen=True)
class DischargeWaveform:
    """Pad voltage during a spark discharge, with closed-form evaluators."""

    timestamps: np.ndarray
    voltage: np.ndarray
    current: np.ndarray
    v_start: float
    v_final: float
    tau: float
    ignition_timescale: float
    effective_capacitance: float
    pad_capacitance: float
    ideal_peak_current: float  # (V_start - V_final) / R, instantaneous ignition
    peak_current: float  # with the finite ignition time

    @property
    def _onset(self) -> float:
        # onsets far shorter than tau are indistinguishable from instantaneous ignition
        T = self.ignition_timescale
        return 0.0 if T < 1e-9 * self.tau else T

    def fraction(self, t) -> np.ndarray:
        """Completed fraction of the voltage change at time ``t``."""
        t = np.asarray(t, dtype=float)
        tau, T = self.tau, self._onset
        if T == 0:
            return np.where(t > 0, -np.expm1(-np.maximum(t, 0) / tau), 0.0)
        tc = np.clip(t, 0.0, None)
        early = (tc + tau * np.expm1(-tc / tau)) / T
        late = 1.0 - (tau / T) * np.exp(-np.maximum(tc - T, 0) / tau) * -np.expm1(-T / tau)
        return np.where(tc <= T, early, late)

    def voltage_at(self, t) -> np.ndarray:
        return self.v_start - (self.v_start - self.v_final) * self.fraction(t)

    def current_at(self, t) -> np.ndarray:
        """Discharge current leaving the pad."""
        t = np.asarray(t, dtype=float)
        tau, T = self.tau, self._onset
        dv = self.v_start - self.v_final
        if T == 0:
            rate = np.where(t >= 0, np.exp(-np.maximum(t, 0) / tau) / tau, 0.0)
        else:
            tc = np.clip(t, 0.0, None)
            early = -np.expm1(-tc / tau) / T
            late = np.exp(-np.maximum(tc - T, 0) / tau) * -np.expm1(-T / tau) / T
            rate = np.where(t < 0, 0.0, np.where(tc <= T, early, late))
        return self.pad_capacitance * dv * rate


def spark_discharge(v_start: float, mod: ModulatorSpec, spec: DischargeSpec, samples: int = 4001) -> DischargeWaveform:
    """RC discharge of a pad into the reservoir, smeared by the ignition time.

    The pad relaxes toward the charge-sharing equilibrium
    ``(C V_start + Cf V_bias) / (C + Cf)`` with ``tau = R C Cf / (C + Cf)``.
    Conduction starts at a time spread uniformly over ``ignition_timescale``,
    which turns the step response into a linear onset of that duration.
    """
    C, Cf = mod.pad_capacitance, spec.reservoir_capacitance
    c_eff = C * Cf / (C + Cf)
    tau = mod.series_resistance * c_eff
    v_final = (C * v_start + Cf * spec.reservoir_bias) / (C + Cf)
    T = spec.ignition_timescale
    t = np.linspace(0.0, T + 20 * tau, samples)
    proto = DischargeWaveform(t, t, t, float(v_start), float(v_final), tau, T, c_eff, C,
                              abs(v_start - v_final) / mod.series_resistance, 0.0)
    current = proto.current_at(t)
    if T >= 1e-9 * tau:
        peak = abs(v_start - v_final) * C / T * -np.expm1(-T / tau)
    else:
        peak = proto.ideal_peak_current
    return DischargeWaveform(t, proto.voltage_at(t), current, float(v_start), float(v_final), tau, T, c_eff, C,
                             proto.ideal_peak_current, float(peak))


def rise_time_10_90(t: np.ndarray, signal: np.ndarray) -> float:
    """10-90 % transition time of a monotone step, linearly interpolated."""
    s = np.asarray(signal, dtype=float)
    s = (s - s[0]) / (s[-1] - s[0])
    t10 = np.interp(0.1, s, t)
    t90 = np.interp(0.9, s, t)
    return float(t90 - t10)


@dataclass(frozen=True)
class Trajectory:
    phases: PhaseWaveform
    effective_phases: np.ndarray  # phases with 2 pi m resets removed
    displacement: np.ndarray  # (n, 2), metres
    sites: np.ndarray
    resets: tuple[tuple[float, float, int, int], ...]  # (t_start, t_end, pad, m)


def drive_to_trajectory(timestamps, voltages, mod: ModulatorSpec, wavelength: float, geometry: LatticeConfig,
                        reset_rate: float = 1e8, reset_tolerance: float = 0.05) -> Trajectory:
    """Pad voltages ``(n, 3)`` to pad phases and lattice displacement.

    Fast segments (phase rate above ``reset_rate`` rad/s) whose net change is
    a whole number ``m`` of 2 pi leave the pattern unchanged; they are
    annotated as resets and the displacement is held through them.
    """
    t = np.asarray(timestamps, dtype=float)
    V = np.asarray(voltages, dtype=float)
    if V.shape != (t.size, 3):
        raise ValueError("voltages must have shape (len(timestamps), 3)")
    phases = PhaseWaveform(t, pad_phase(mod, wavelength, V))
    phi = phases.phases
    eff = phi.copy()
    resets = []
    if t.size > 1:
        rate = np.abs(np.diff(phi, axis=0)) / np.diff(t)[:, None]
        for p in range(3):
            fast = rate[:, p] > reset_rate
            k = 0
            while k < fast.size:
                if not fast[k]:
                    k += 1
                    continue
                start = k
                while k < fast.size and fast[k]:
                    k += 1
                # samples start..k span the fast segment
                net = phi[k, p] - phi[start, p]
                m = int(np.round(net / (2 * np.pi)))
                if m != 0 and abs(net - 2 * np.pi * m) < reset_tolerance:
                    eff[k:, p] -= 2 * np.pi * m
                    eff[start + 1:k, p] = eff[start, p]
                    resets.append((float(t[start]), float(t[k]), p, m))
    pad = _dominant_pad(eff)
    disp = np.array([phases_to_displacement(row, geometry)[0] for row in eff]) if eff.size else np.zeros((0, 2))
    sites = np.array([displacement_in_sites(geometry, d, pad) for d in disp])
    return Trajectory(phases, eff, disp, sites, tuple(resets))


def read_voltage_csv(path) -> tuple[np.ndarray, np.ndarray]:
    _, data = _io.read_csv(path, _VOLTAGE_HEADER)
    return data[:, 0], data[:, 1:4]


def write_voltage_csv(path, timestamps, voltages) -> Path:
    return _io.write_csv(path, _VOLTAGE_HEADER, (np.r_[t, v] for t, v in zip(timestamps, voltages)))


def write_trajectory_csv(path, traj: Trajectory) -> Path:
    rows = (np.r_[t, phi, d * 1e9, s] for t, phi, d, s in
            zip(traj.phases.timestamps, traj.phases.phases, traj.displacement, traj.sites))
    return _io.write_csv(path, _TRAJECTORY_HEADER, rows)
