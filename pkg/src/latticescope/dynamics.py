"""One-dimensional atom dynamics in a translating optical lattice.

The potential is ``V(x, t) = V0 sin^2(pi (x - x0(t)) / a)`` on a periodic grid.
States are propagated with the symmetric split-step Fourier method; ground
states come from the same propagator in imaginary time.  SI units throughout.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import _io
from .errors import ConvergenceError, StabilityError

HBAR = 1.054571817e-34
ATOMIC_MASS_UNIT = 1.66053906660e-27
CESIUM_MASS = 132.905451961 * ATOMIC_MASS_UNIT


def site_frequency(depth: float, lattice_constant: float, mass: float = CESIUM_MASS) -> float:
    """Harmonic angular frequency ``(pi / a) sqrt(2 V0 / m)`` at a lattice minimum."""
    if not depth > 0:
        raise ValueError("depth must be positive")
    return np.pi / lattice_constant * np.sqrt(2 * depth / mass)


def depth_for_frequency(omega: float, lattice_constant: float, mass: float = CESIUM_MASS) -> float:
    return mass * (omega * lattice_constant / np.pi) ** 2 / 2


def _static(_t: float) -> float:
    return 0.0


@dataclass(frozen=True)
class LatticePotential1D:
    """``V0 sin^2(pi (x - x0(t)) / a)``; ``position`` maps time to ``x0``."""

    depth: float
    lattice_constant: float
    position: Callable[[float], float] = _static

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("depth must be non-negative")
        if not self.lattice_constant > 0:
            raise ValueError("lattice_constant must be positive")

    @classmethod
    def from_phase(cls, depth: float, lattice_constant: float, phase: Callable[[float], float]):
        """Lattice whose position follows an optical phase: ``x0 = a theta / 2 pi``."""
        return cls(depth, lattice_constant, lambda t: lattice_constant * phase(t) / (2 * np.pi))

    @property
    def is_static(self) -> bool:
        return self.position is _static

    def shifted(self, offset: float) -> "LatticePotential1D":
        base = self.position
        return replace(self, position=lambda t: base(t) + offset)

    def frozen(self, t: float) -> "LatticePotential1D":
        """Static copy at the lattice position of time ``t``."""
        x0 = float(self.position(t))
        return replace(self, position=(lambda _t: x0) if x0 != 0.0 else _static)

    def __call__(self, x: np.ndarray, t: float = 0.0) -> np.ndarray:
        return self.depth * np.sin(np.pi * (x - self.position(t)) / self.lattice_constant) ** 2


def lattice_grid(lattice_constant: float, sites: int = 16, samples_per_site: int = 128) -> np.ndarray:
    """Periodic grid of ``sites`` whole periods with a lattice minimum at ``x = 0``."""
    n = sites * samples_per_site
    dx = lattice_constant / samples_per_site
    return (np.arange(n) - n // 2) * dx


@dataclass(frozen=True)
class WavepacketState:
    x: np.ndarray
    psi: np.ndarray
    mass: float = CESIUM_MASS

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        psi = np.asarray(self.psi, dtype=complex)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "psi", psi)
        if x.shape != psi.shape or x.ndim != 1:
            raise ValueError("x and psi must be 1-D arrays of equal length")
        steps = np.diff(x)
        if not np.allclose(steps, steps[0], rtol=1e-9, atol=0):
            raise ValueError("grid must be uniform")

    @property
    def dx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def length(self) -> float:
        return self.dx * self.x.size

    @property
    def k(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.x.size, self.dx)

    @property
    def norm(self) -> float:
        return float(np.sum(np.abs(self.psi) ** 2) * self.dx)

    def normalized(self) -> "WavepacketState":
        return replace(self, psi=self.psi / np.sqrt(self.norm))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.psi) ** 2

    def mean_position(self) -> float:
        return float(np.sum(self.x * self.density) * self.dx / self.norm)

    def position_variance(self) -> float:
        mu = self.mean_position()
        return float(np.sum((self.x - mu) ** 2 * self.density) * self.dx / self.norm)

    def kinetic_energy(self) -> float:
        pk = np.abs(np.fft.fft(self.psi)) ** 2
        return float(np.sum(HBAR ** 2 * self.k ** 2 / (2 * self.mass) * pk) / np.sum(pk))

    def energy(self, potential: LatticePotential1D, t: float = 0.0) -> float:
        v = float(np.sum(potential(self.x, t) * self.density) * self.dx / self.norm)
        return self.kinetic_energy() + v

    def overlap(self, other: "WavepacketState") -> complex:
        return complex(np.sum(np.conj(self.psi) * other.psi) * self.dx)

    def fidelity(self, other: "WavepacketState") -> float:
        return abs(self.overlap(other)) ** 2 / (self.norm * other.norm)

    def translated(self, offset: float) -> "WavepacketState":
        """Periodic translation by ``offset`` (Fourier shift, exact for band-limited states)."""
        shifted = np.fft.ifft(np.fft.fft(self.psi) * np.exp(-1j * self.k * offset))
        return replace(self, psi=shifted)


def gaussian_state(x: np.ndarray, center: float, width: float, mass: float = CESIUM_MASS) -> WavepacketState:
    """Normalised Gaussian with position standard deviation ``width``."""
    length = (x[1] - x[0]) * x.size
    d = (x - center + length / 2) % length - length / 2
    return WavepacketState(x, np.exp(-d ** 2 / (4 * width ** 2)), mass).normalized()


def _nearest_well(potential: LatticePotential1D, target: float, t: float = 0.0) -> float:
    a = potential.lattice_constant
    x0 = potential.position(t)
    return x0 + a * np.round((target - x0) / a)


def ground_state(potential: LatticePotential1D, x: np.ndarray, mass: float = CESIUM_MASS, t: float = 0.0,
                 near: float = 0.0, dtau: float | None = None, tol: float = 1e-14,
                 max_steps: int = 200_000) -> WavepacketState:
    """Lowest state localised in the well nearest ``near``.

    Imaginary-time split-step propagation seeded with a Gaussian of the
    harmonic width in that well (a uniform seed when the depth is zero).
    """
    a = potential.lattice_constant
    dx = x[1] - x[0]
    if a / dx < 64 - 1e-9 or x.size * dx < 3 * a * (1 - 1e-9):
        raise ValueError("ground_state needs >= 3 sites and >= 64 samples per site")
    frozen = potential.frozen(t)
    if potential.depth == 0:
        return WavepacketState(x, np.full(x.size, 1.0 + 0j), mass).normalized()
    omega = site_frequency(potential.depth, a, mass)
    well = _nearest_well(potential, near, t)
    state = gaussian_state(x, well, np.sqrt(HBAR / (2 * mass * omega)), mass)
    dtau = 2 * np.pi / omega / 200 if dtau is None else dtau
    k = state.k
    kin = np.exp(-HBAR * k ** 2 / (2 * mass) * dtau)
    half_v = np.exp(-frozen(x) * dtau / (2 * HBAR))
    psi = state.psi
    residual = np.inf
    for step in range(1, max_steps + 1):
        prev = psi
        psi = half_v * np.fft.ifft(kin * np.fft.fft(half_v * psi))
        psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * dx)
        if step % 50 == 0:
            residual = 1.0 - abs(np.sum(np.conj(prev) * psi) * dx) ** 2
            if residual < tol:
                return WavepacketState(x, psi, mass)
    raise ConvergenceError(f"imaginary-time propagation did not converge (residual {residual:.3g})",
                           residual=residual)


def check_step(state: WavepacketState, potential: LatticePotential1D, dt: float) -> None:
    """Raise :class:`StabilityError` when ``dt`` or the grid under-resolves the dynamics."""
    k = state.k
    kin_max = HBAR * np.max(k ** 2) / (2 * state.mass)
    if potential.depth * abs(dt) / HBAR > np.pi:
        raise StabilityError(f"time step too long: V0 dt / hbar = {potential.depth * abs(dt) / HBAR:.3g} > pi")
    if kin_max * abs(dt) > np.pi:
        raise StabilityError(f"time step too long for the grid's Nyquist momentum ({kin_max * abs(dt):.3g} rad)")
    pk = np.abs(np.fft.fft(state.psi)) ** 2
    edge = np.abs(k) > 0.8 * np.max(np.abs(k))
    if pk[edge].sum() > 1e-10 * pk.sum():
        raise StabilityError("state has momentum content near the grid's Nyquist limit; refine the grid")


def evolve(state: WavepacketState, potential: LatticePotential1D, dt: float, duration: float,
           t0: float = 0.0, observer: Callable[[float, WavepacketState], None] | None = None,
           every: int = 0) -> WavepacketState:
    """Real-time split-step evolution from ``t0`` to ``t0 + duration``.

    The step is shrunk so a whole number of steps fits; a negative
    ``duration`` runs backwards.  ``observer(t, state)`` is called every
    ``every`` steps and at the end when given.
    """
    n = int(np.ceil(abs(duration) / abs(dt) - 1e-9)) if duration else 0
    if n == 0:
        return state
    h = duration / n
    check_step(state, potential, h)
    kin = np.exp(-1j * HBAR * state.k ** 2 / (2 * state.mass) * h)
    x = state.x
    psi = state.psi
    static = potential.is_static
    if static:
        half_v = np.exp(-1j * potential(x) * h / (2 * HBAR))
    for i in range(n):
        if not static:
            half_v = np.exp(-1j * potential(x, t0 + (i + 0.5) * h) * h / (2 * HBAR))
        psi = half_v * np.fft.ifft(kin * np.fft.fft(half_v * psi))
        if observer is not None and every and (i + 1) % every == 0 and i + 1 < n:
            observer(t0 + (i + 1) * h, replace(state, psi=psi))
    out = replace(state, psi=psi)
    if observer is not None:
        observer(t0 + duration, out)
    return out


def minimum_jerk(s):
    s = np.clip(s, 0.0, 1.0)
    return s ** 3 * (10 - 15 * s + 6 * s ** 2)


def linear_ramp(s):
    return np.clip(s, 0.0, 1.0)


RAMP_SHAPES = {"minimum_jerk": minimum_jerk, "linear": linear_ramp}


@dataclass(frozen=True)
class TransportProtocol:
    """Lattice translation by ``distance`` sites.

    ``smooth_ramp`` drags the lattice over ``duration`` seconds;
    ``sudden_jump`` moves it instantaneously, leaving the atom in place;
    ``composite`` runs ``stages`` one after another.
    """

    mode: str
    distance: float = 1.0
    duration: float = 0.0
    ramp_shape: str = "minimum_jerk"
    stages: tuple["TransportProtocol", ...] = ()

    def __post_init__(self):
        if self.mode not in ("smooth_ramp", "sudden_jump", "composite"):
            raise ValueError(f"unknown transport mode {self.mode!r}")
        if self.ramp_shape not in RAMP_SHAPES:
            raise ValueError(f"unknown ramp shape {self.ramp_shape!r}")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.mode == "sudden_jump" and self.duration != 0:
            raise ValueError("a sudden jump has zero duration")
        if self.mode == "composite":
            if not self.stages or any(s.mode == "composite" for s in self.stages):
                raise ValueError("composite protocols need one or more non-composite stages")
            object.__setattr__(self, "stages", tuple(self.stages))
            object.__setattr__(self, "distance", float(sum(s.distance for s in self.stages)))
            object.__setattr__(self, "duration", float(sum(s.duration for s in self.stages)))

    @classmethod
    def smooth_ramp(cls, distance: float, duration: float, ramp_shape: str = "minimum_jerk"):
        return cls("smooth_ramp", distance, duration, ramp_shape)

    @classmethod
    def sudden_jump(cls, distance: float = 1.0):
        return cls("sudden_jump", distance, 0.0)

    @classmethod
    def composite(cls, *stages: "TransportProtocol"):
        return cls("composite", stages=tuple(stages))

    def steps(self) -> tuple["TransportProtocol", ...]:
        return self.stages if self.mode == "composite" else (self,)


@dataclass(frozen=True)
class FidelityResult:
    fidelity: float
    excitation_energy: float
    protocol: TransportProtocol
    history: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))  # t_s, fidelity, energy_J


def transport_fidelity(protocol: TransportProtocol, potential: LatticePotential1D, mass: float = CESIUM_MASS,
                       sites: int = 16, samples_per_site: int = 128, dt: float | None = None,
                       record_every: int = 0) -> FidelityResult:
    """Overlap of the transported atom with the ground state of the final lattice.

    The atom starts in the ground state of the well at the lattice position.
    Ramps carry the atom with the lattice; jumps move only the lattice.  The
    target is the ground state of the final lattice in the well nearest the
    atom's intended position.  ``dt`` defaults to 1/1000 of the site period.
    """
    a = potential.lattice_constant
    x = lattice_grid(a, sites, samples_per_site)
    start = potential.frozen(0.0)
    x0 = float(start.position(0.0))
    psi0 = ground_state(start, x, mass)
    period = 2 * np.pi / site_frequency(potential.depth, a, mass) if potential.depth > 0 else 1.0
    dt = period / 1000 if dt is None else dt
    state = psi0
    atom = x0
    t = 0.0
    history = []

    def observe(tt, s):
        # fidelity with the initial ground state carried to the lattice's current position
        lat = float(pot.position(tt))
        history.append((tt, psi0.translated(lat - x0 + carried).fidelity(s), s.energy(pot, tt)))

    if record_every:
        history.append((0.0, 1.0, psi0.energy(start)))
    for stage in protocol.steps():
        shift = stage.distance * a
        if stage.mode == "sudden_jump":
            x0 += shift
            continue
        shape = RAMP_SHAPES[stage.ramp_shape]
        base, t_start, T = x0, t, stage.duration
        pot = replace(start, position=lambda tt, b=base, ts=t_start, T=T, sh=shape, d=shift:
                      b + d * float(sh((tt - ts) / T if T > 0 else 1.0)))
        carried = atom - base
        state = evolve(state, pot, dt, T, t0=t, observer=observe if record_every else None, every=record_every)
        t += T
        x0 += shift
        atom += shift
    final = replace(start, position=lambda _t, p=x0: p)
    target = ground_state(final, x, mass, near=atom)
    F = min(1.0, target.fidelity(state))
    excitation = state.energy(final) - target.energy(final)
    hist = np.array(history) if history else np.zeros((0, 3))
    return FidelityResult(fidelity=F, excitation_energy=excitation, protocol=protocol, history=hist)


def jitter_overlap_fidelity(sigma: float, width: float = 100e-9) -> float:
    """Mean overlap ``(1 + sigma^2 / (2 w^2))^(-1/2)`` of two Gaussian wavepackets
    of width ``w`` whose separation is normally distributed with RMS ``sigma``."""
    if not width > 0:
        raise ValueError("width must be positive")
    if sigma < 0:
        raise ValueError("sigma must be non-negative")
    return float((1 + sigma ** 2 / (2 * width ** 2)) ** -0.5)


def jitter_overlap_monte_carlo(sigma: float, width: float = 100e-9, draws: int = 100_000,
                               rng: np.random.Generator | int | None = None) -> float:
    """Monte-Carlo average of ``exp(-d^2 / (4 w^2))`` over ``d ~ N(0, sigma)``."""
    rng = np.random.default_rng(rng)
    d = rng.normal(0.0, sigma, draws)
    return float(np.mean(np.exp(-d ** 2 / (4 * width ** 2))))


def write_history_csv(path, result: FidelityResult) -> Path:
    return _io.write_csv(path, ("t_s", "fidelity", "energy_J"), result.history)


def write_sweep_csv(path, params: Sequence[float], fidelities: Sequence[float]) -> Path:
    return _io.write_csv(path, ("param", "fidelity"), zip(params, fidelities))
