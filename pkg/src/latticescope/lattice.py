"""Multi-beam interference lattices: synthesis, lattice constants and phase fitting.

Lengths are in metres and angles in radians.  Beam ``j`` contributes a
transverse wavevector ``k_j = (2 pi / lambda) sin(alpha_j) (cos az_j, sin az_j)``
in the focal plane; the intensity is ``|sum_j A_j exp(i k_j . r + i phi_j)|^2``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from . import _io
from .errors import DetectionError, GeometryError, ModelMismatchError
from .grid import Grid2D

# beam pairs whose difference wavevectors define the three fringes
FRINGE_PAIRS = ((0, 1), (1, 2), (2, 0))


class InconsistentPhasesWarning(UserWarning):
    """The three fitted fringe phases do not sum to zero modulo 2 pi."""


@dataclass(frozen=True)
class BeamSpec:
    wavelength: float
    polar_angle: float
    azimuth: float = 0.0
    amplitude: float = 1.0
    phase: float = 0.0

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        if not 0 < self.polar_angle < np.pi / 2:
            raise ValueError("polar_angle must lie in (0, pi/2)")
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")

    @property
    def transverse_k(self) -> np.ndarray:
        k = 2 * np.pi / self.wavelength * np.sin(self.polar_angle)
        return k * np.array([np.cos(self.azimuth), np.sin(self.azimuth)])


@dataclass(frozen=True)
class LatticeConfig:
    """Three beams of one wavelength at equal polar angle, 120 degrees apart in azimuth."""

    beams: tuple[BeamSpec, BeamSpec, BeamSpec]
    tolerance: float = 1e-6

    def __post_init__(self):
        beams = tuple(self.beams)
        object.__setattr__(self, "beams", beams)
        if len(beams) != 3:
            raise GeometryError("a hexagonal lattice needs exactly three beams")
        if len({b.wavelength for b in beams}) != 1:
            raise GeometryError("all beams must share one wavelength")
        alphas = [b.polar_angle for b in beams]
        if max(alphas) - min(alphas) > self.tolerance:
            raise GeometryError("beams must share one polar angle")
        for a, b in ((0, 1), (1, 2), (2, 0)):
            sep = (beams[b].azimuth - beams[a].azimuth) % (2 * np.pi)
            if min(abs(sep - 2 * np.pi / 3), abs(sep - 4 * np.pi / 3)) > self.tolerance:
                raise GeometryError("beam azimuths must be separated by 120 degrees")

    @classmethod
    def hexagonal(cls, wavelength: float, polar_angle: float, phases: Sequence[float] = (0.0, 0.0, 0.0),
                  amplitudes: Sequence[float] = (1.0, 1.0, 1.0), azimuth0: float = np.pi / 2) -> "LatticeConfig":
        beams = tuple(BeamSpec(wavelength, polar_angle, azimuth0 + 2 * np.pi * j / 3, float(amplitudes[j]),
                               float(phases[j])) for j in range(3))
        return cls(beams)

    @property
    def wavelength(self) -> float:
        return self.beams[0].wavelength

    @property
    def polar_angle(self) -> float:
        return self.beams[0].polar_angle

    @property
    def phases(self) -> np.ndarray:
        return np.array([b.phase for b in self.beams])

    def with_phases(self, phases: Sequence[float]) -> "LatticeConfig":
        return replace(self, beams=tuple(replace(b, phase=float(p)) for b, p in zip(self.beams, phases)))

    def fringe_vectors(self) -> np.ndarray:
        """Rows ``G_p = k_i - k_j`` for the pairs in ``FRINGE_PAIRS``."""
        k = [b.transverse_k for b in self.beams]
        return np.array([k[i] - k[j] for i, j in FRINGE_PAIRS])

    def fringe_phases(self) -> np.ndarray:
        ph = self.phases
        return np.array([ph[i] - ph[j] for i, j in FRINGE_PAIRS])

    @property
    def lattice_constant(self) -> float:
        return lattice_constant_analytic(self.wavelength, self.polar_angle)

    def site_displacement(self, beam: int = 0) -> np.ndarray:
        """Pattern displacement produced by advancing one beam's phase by 2 pi.

        Its length equals the lattice constant.
        """
        dphi = np.zeros(3)
        dphi[beam] = 2 * np.pi
        return phases_to_pattern_shift(self, dphi)


@dataclass(frozen=True)
class IntensityImage:
    grid: Grid2D
    values: np.ndarray
    wavelength: float
    normalization: float = 1.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != self.grid.shape:
            raise ValueError("values must match the grid shape")
        if values.min() < 0 or not values.max() > 0:
            raise ValueError("intensity must be non-negative with a positive maximum")


def interference_intensity(config: LatticeConfig | Sequence[BeamSpec], grid: Grid2D) -> IntensityImage:
    """Scalar interference of the configured beams in the focal plane.

    A plain sequence of beams (for example two beams making fringes) is also
    accepted.
    """
    beams = config.beams if isinstance(config, LatticeConfig) else tuple(config)
    if not beams:
        raise ValueError("need at least one beam")
    X, Y = grid.coordinates()
    field = np.zeros(grid.shape, dtype=complex)
    for b in beams:
        k = b.transverse_k
        field += b.amplitude * np.exp(1j * (k[0] * X + k[1] * Y + b.phase))
    return IntensityImage(grid=grid, values=np.abs(field) ** 2, wavelength=beams[0].wavelength)


def lattice_constant_analytic(wavelength: float, polar_angle: float) -> float:
    """Nearest-neighbour spacing ``2 lambda / (3 sin alpha)`` of the three-beam lattice."""
    if not 0 < polar_angle < np.pi / 2:
        raise ValueError("polar_angle must lie in (0, pi/2)")
    return 2 * wavelength / (3 * np.sin(polar_angle))


def commensurability_mismatch(a1: float, a2: float) -> float:
    if not (a1 > 0 and a2 > 0):
        raise ValueError("lattice constants must be positive")
    return abs(a1 - a2) / ((a1 + a2) / 2)


def _dtft_power(data: np.ndarray, f: np.ndarray) -> float:
    i = np.arange(data.shape[0])[:, None]
    j = np.arange(data.shape[1])[None, :]
    return float(np.abs(np.sum(data * np.exp(-2j * np.pi * (f[0] * i + f[1] * j)))) ** 2)


def spatial_frequency_peaks(image: IntensityImage, count: int = 3, snr: float = 20.0, pad: int = 4) -> np.ndarray:
    """Strongest non-zero spatial-frequency peaks as wavevectors (rad/m).

    Uses a Hann-windowed, zero-padded FFT; each peak is refined to sub-bin
    precision by maximising the windowed discrete-time Fourier transform.
    Only one of every ``+G, -G`` pair is returned.
    """
    data = image.values - image.values.mean()
    nx, ny = data.shape
    data = data * np.outer(np.hanning(nx), np.hanning(ny))
    spec = np.abs(np.fft.fft2(data, s=(pad * nx, pad * ny))) ** 2
    fi = np.fft.fftfreq(pad * nx)
    fj = np.fft.fftfreq(pad * ny)
    FI, FJ = np.meshgrid(fi, fj, indexing="ij")
    # exclude the window's main lobe around DC
    spec[(np.abs(FI) < 2.0 / nx) & (np.abs(FJ) < 2.0 / ny)] = 0.0
    floor = np.median(spec)
    peaks = []
    work = spec.copy()
    for _ in range(count):
        idx = np.unravel_index(np.argmax(work), work.shape)
        top = work[idx]
        if not top > 0 or (peaks and top < 1e-3 * spec.max()) or top < snr * max(floor, 1e-300) or \
                (not peaks and top <= 1e-20 * max(np.sum(image.values ** 2), 1e-300)):
            break
        f0 = np.array([fi[idx[0]], fj[idx[1]]])
        res = optimize.minimize(lambda f: -_dtft_power(data, f), f0, method="Nelder-Mead",
                                options={"xatol": 1e-9, "fatol": 1e-12 * top, "initial_simplex":
                                         [f0, f0 + [0.5 / (pad * nx), 0], f0 + [0, 0.5 / (pad * ny)]]})
        peaks.append(res.x)
        for sgn in (1, -1):
            near = (np.abs(((FI - sgn * f0[0]) + 0.5) % 1 - 0.5) < 3.0 / nx) & \
                   (np.abs(((FJ - sgn * f0[1]) + 0.5) % 1 - 0.5) < 3.0 / ny)
            work[near] = 0.0
    if not peaks:
        raise DetectionError("no spatial-frequency peak above the noise floor")
    axes = image.grid.axes
    # cycles/sample along each grid axis -> physical wavevector: axes @ G = 2 pi f
    return np.array([np.linalg.solve(axes, 2 * np.pi * f) for f in peaks])


def lattice_constant_from_image(image: IntensityImage) -> float:
    """Lattice constant ``4 pi / (sqrt(3) |G|)`` from the dominant frequency sextet."""
    G = spatial_frequency_peaks(image, count=3)
    mags = np.linalg.norm(G, axis=1)
    # keep peaks belonging to the fundamental sextet
    fundamental = mags[np.abs(mags - mags[0]) < 0.05 * mags[0]]
    return float(4 * np.pi / (np.sqrt(3) * fundamental.mean()))


def phases_to_pattern_shift(config: LatticeConfig, phase_changes: Sequence[float]) -> np.ndarray:
    """Pattern displacement produced by changing the beam phases.

    The fringe ``G_p . r + theta_p`` moves by ``d`` with ``G_p . d = -delta theta_p``.
    """
    dphi = np.asarray(phase_changes, dtype=float)
    dtheta = np.array([dphi[i] - dphi[j] for i, j in FRINGE_PAIRS])
    G = config.fringe_vectors()
    return np.linalg.solve(G[:2], -dtheta[:2])


def displacement_in_sites(config: LatticeConfig, displacement: np.ndarray, beam: int = 0) -> float:
    """Signed displacement in lattice sites along one beam's translation direction."""
    u = config.site_displacement(beam)
    return float(np.dot(displacement, u) / (u @ u))


def _wrap(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


@dataclass(frozen=True)
class PhaseFit:
    fringe_phases: np.ndarray  # absolute fitted phases theta_p
    phase_changes: np.ndarray  # relative to the reference, wrapped to (-pi, pi]
    displacement: np.ndarray
    sites: float
    closure_residual: float
    fit_residual: float


def fit_lattice_phase(image: IntensityImage, reference: LatticeConfig, residual_threshold: float = 0.5,
                      closure_threshold: float = 1e-2) -> PhaseFit:
    """Least-squares fit of ``C + sum_p c_p cos(G_p . r + theta_p)`` with the reference ``G_p``.

    The displacement follows from the two independent fringe-phase changes;
    the third fringe provides a closure check.  ``fit_residual`` is the RMS
    residual relative to the RMS of the mean-subtracted image.
    """
    X, Y = image.grid.coordinates()
    G = reference.fringe_vectors()
    cols = [np.ones(X.size)]
    for g in G:
        arg = (g[0] * X + g[1] * Y).ravel()
        cols += [np.cos(arg), np.sin(arg)]
    A = np.column_stack(cols)
    b = image.values.ravel()
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    resid = b - A @ coef
    scale = np.sqrt(np.mean((b - b.mean()) ** 2))
    rel = float(np.sqrt(np.mean(resid ** 2)) / scale) if scale > 0 else np.inf
    if rel > residual_threshold:
        raise ModelMismatchError(f"fit residual {rel:.3g} exceeds {residual_threshold:.3g}; geometry mismatch?")
    theta = np.arctan2(-coef[2::2], coef[1::2])
    dtheta = _wrap(theta - reference.fringe_phases())
    closure = float(abs(_wrap(dtheta.sum())))
    if closure > closure_threshold:
        warnings.warn(f"fringe phases fail closure by {closure:.3g} rad", InconsistentPhasesWarning, stacklevel=2)
    d = np.linalg.solve(G[:2], -dtheta[:2])
    return PhaseFit(fringe_phases=theta, phase_changes=dtheta, displacement=d,
                    sites=displacement_in_sites(reference, d), closure_residual=closure, fit_residual=rel)


def write_intensity_pgm(path, image: IntensityImage, binary: bool = True) -> tuple[Path, Path]:
    """16-bit PGM (rows along the grid's second axis) plus a sidecar with scale and geometry."""
    norm = image.values.max() / _io.PGM_MAX
    counts = np.rint(image.values / norm).astype(np.int64).T
    path = _io.write_pgm(path, counts, binary=binary)
    g = image.grid
    side = _io.write_sidecar(_io.sidecar_path(path), {
        "pitch_m": g.pitch, "axis_angle_rad": g.angle, "origin_x_m": g.origin[0], "origin_y_m": g.origin[1],
        "wavelength_m": image.wavelength, "normalization": norm * image.normalization,
    })
    return path, side


def read_intensity_pgm(path) -> IntensityImage:
    counts = _io.read_pgm(path).T
    meta = _io.read_sidecar(_io.sidecar_path(path))
    grid = Grid2D(pitch=float(meta["pitch_m"]), nx=counts.shape[0], ny=counts.shape[1],
                  origin=(float(meta.get("origin_x_m", 0)), float(meta.get("origin_y_m", 0))),
                  angle=float(meta.get("axis_angle_rad", np.pi / 2)))
    norm = float(meta["normalization"])
    return IntensityImage(grid=grid, values=counts * norm, wavelength=float(meta["wavelength_m"]))
