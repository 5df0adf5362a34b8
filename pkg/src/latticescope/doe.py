"""Reflective triangular binary phase grating.

The grating is a tiling of equilateral triangles of side ``L``; "up"
triangles are raised plateaus and "down" triangles are etched recesses.
Its Bravais lattice is spanned by ``a1 = L (1, 0)`` and
``a2 = L (1/2, sqrt(3)/2)``; the rhombic cell spanned by these vectors
holds exactly one raised and one recessed triangle, split by the cell's
short diagonal.  Masks are therefore sampled on a 60-degree grid aligned
with ``a1`` and ``a2`` so that an integer number of cells fits exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _io
from .errors import PropagationError, ResolutionError, TilingError
from .grid import Grid2D

SQRT3 = np.sqrt(3.0)
FIRST_ORDERS = ((1, 0), (0, 1), (-1, -1), (-1, 0), (0, -1), (1, 1))
# 120-degree-separated triple used by the lattice optics
FIRST_ORDER_TRIPLE = ((1, 0), (0, 1), (-1, -1))
_MIN_SAMPLES_PER_SIDE = 16


@dataclass(frozen=True)
class GratingSpec:
    """Grating geometry.  Lengths in metres, angle in radians from the normal."""

    triangle_side: float = 26e-6
    etch_depth: float = 218e-9
    wavefront_mode: str = "reflection"
    incidence_angle: float = 0.0

    def __post_init__(self):
        if not self.triangle_side > 0:
            raise ValueError("triangle_side must be positive")
        if self.etch_depth < 0:
            raise ValueError("etch_depth must be non-negative")
        if self.wavefront_mode not in ("reflection", "transmission"):
            raise ValueError(f"unknown wavefront_mode {self.wavefront_mode!r}")
        if not 0 <= self.incidence_angle < np.pi / 2:
            raise ValueError("incidence_angle must lie in [0, pi/2)")

    @property
    def lattice_vectors(self) -> np.ndarray:
        L = self.triangle_side
        return L * np.array([[1.0, 0.0], [0.5, SQRT3 / 2]])

    @property
    def reciprocal_vectors(self) -> np.ndarray:
        """Rows ``b1, b2`` with ``a_i . b_j = 2 pi delta_ij``; ``|b| = 4 pi / (sqrt(3) L)``."""
        return 2 * np.pi * np.linalg.inv(self.lattice_vectors).T

    def mask_grid(self, samples_per_side: int, cells: tuple[int, int] = (1, 1)) -> Grid2D:
        """Lattice-aligned grid with ``samples_per_side`` samples along each cell edge."""
        pitch = self.triangle_side / samples_per_side
        return Grid2D(pitch=pitch, nx=samples_per_side * cells[0],
                      ny=samples_per_side * cells[1], angle=np.pi / 3)


@dataclass(frozen=True)
class PhaseMask:
    """Sampled binary phase profile.

    ``recessed`` marks etched samples; ``phase`` is 0 on plateaus and
    ``phase_step`` in recesses.
    """

    grid: Grid2D
    recessed: np.ndarray
    phase_step: float
    spec: GratingSpec = field(default_factory=GratingSpec)

    def __post_init__(self):
        if self.recessed.shape != self.grid.shape or self.recessed.dtype != bool:
            raise ValueError("recessed must be a boolean array matching the grid")

    @property
    def phase(self) -> np.ndarray:
        return np.where(self.recessed, self.phase_step, 0.0)

    @property
    def samples_per_side(self) -> int:
        return int(round(self.spec.triangle_side / self.grid.pitch))

    @property
    def cells(self) -> tuple[int, int]:
        n = self.samples_per_side
        return self.grid.nx // n, self.grid.ny // n

    @property
    def raised_fraction(self) -> float:
        return 1.0 - float(self.recessed.mean())


@dataclass(frozen=True)
class DiffractionOrder:
    index: tuple[int, int]
    direction: np.ndarray
    efficiency: float | None = None


def is_recessed(spec: GratingSpec, x, y) -> np.ndarray:
    """Exact (unsampled) recess indicator at Cartesian points ``(x, y)``.

    Points exactly on a triangle edge count as raised.
    """
    L = spec.triangle_side
    v = np.asarray(y, dtype=float) / (L * SQRT3 / 2)
    u = np.asarray(x, dtype=float) / L - v / 2
    fu = u - np.floor(u)
    fv = v - np.floor(v)
    return fu + fv > 1.0


def synthesize_grating_profile(spec: GratingSpec, grid: Grid2D, phase_step: float = np.pi) -> PhaseMask:
    """Sample the triangle tiling on a lattice-aligned grid.

    Samples sit at pixel centres.  The only ambiguous samples are those whose
    centre falls on a cell's short diagonal; they alternate between raised and
    recessed so both regions keep equal area.
    """
    L = spec.triangle_side
    if not np.isclose(grid.angle, np.pi / 3):
        raise TilingError("grating masks need a 60-degree lattice-aligned grid (see GratingSpec.mask_grid)")
    ratio = L / grid.pitch
    n = int(round(ratio))
    if n < _MIN_SAMPLES_PER_SIDE:
        raise ResolutionError(
            f"grid pitch {grid.pitch:.3e} m is coarser than triangle_side/{_MIN_SAMPLES_PER_SIDE}")
    if abs(ratio - n) > 1e-9 * ratio or grid.nx % n or grid.ny % n:
        raise TilingError("grid must span an integer number of unit cells with integer samples per cell")

    i = (np.arange(grid.nx) % n)[:, None]
    j = (np.arange(grid.ny) % n)[None, :]
    s = i + j + 1  # (u + v) * n at the pixel centre
    recessed = s > n
    on_diagonal = s == n
    recessed = recessed | (on_diagonal & (i % 2 == 1))
    return PhaseMask(grid=grid, recessed=recessed, phase_step=float(phase_step), spec=spec)


def reflection_phase_step(spec: GratingSpec, wavelength: float) -> float:
    """Round-trip phase delay of the recesses: ``4 pi d cos(theta) / lambda``."""
    if not wavelength > 0:
        raise ValueError("wavelength must be positive")
    if spec.wavefront_mode != "reflection":
        raise NotImplementedError("only reflective gratings are modelled")
    return 4 * np.pi * spec.etch_depth * np.cos(spec.incidence_angle) / wavelength


def first_order_sine(spec: GratingSpec, wavelength: float) -> float:
    return 2 * wavelength / (SQRT3 * spec.triangle_side)


def order_direction(spec: GratingSpec, wavelength: float, index: tuple[int, int]) -> np.ndarray:
    """Unit propagation vector of order ``(m, n)``; +z is the specular direction."""
    G = index[0] * spec.reciprocal_vectors[0] + index[1] * spec.reciprocal_vectors[1]
    kt = G * wavelength / (2 * np.pi)
    s2 = kt @ kt
    if s2 >= 1.0:
        raise PropagationError(f"order {index} is evanescent at {wavelength:.4g} m")
    return np.array([kt[0], kt[1], np.sqrt(1.0 - s2)])


def first_order_directions(spec: GratingSpec, wavelength: float, all_six: bool = False) -> list[DiffractionOrder]:
    """Directions of the lowest diffraction orders.

    By default returns the 120-degree-separated triple ``(1,0), (0,1), (-1,-1)``;
    ``all_six`` adds their opposites.
    """
    if first_order_sine(spec, wavelength) >= 1.0:
        raise PropagationError("first orders are evanescent: 2 lambda / (sqrt(3) L) >= 1")
    indices = FIRST_ORDERS if all_six else FIRST_ORDER_TRIPLE
    return [DiffractionOrder(index=ix, direction=order_direction(spec, wavelength, ix)) for ix in indices]


def first_order_angle(spec: GratingSpec, wavelength: float) -> float:
    """Polar diffraction angle (radians) of the first orders."""
    s = first_order_sine(spec, wavelength)
    if s >= 1.0:
        raise PropagationError("first orders are evanescent")
    return float(np.arcsin(s))


def fourier_coefficients(mask: PhaseMask, phase_step: float | None = None) -> np.ndarray:
    """Unit-cell Fourier coefficients ``c[m, n]`` of ``exp(i phase)``.

    The returned array is indexed with numpy FFT ordering, so ``c[-1, 0]`` is
    order ``(-1, 0)``.
    """
    step = mask.phase_step if phase_step is None else phase_step
    field_ = np.where(mask.recessed, np.exp(1j * step), 1.0 + 0j)
    spectrum = np.fft.fft2(field_) / field_.size
    cx, cy = mask.cells
    return spectrum[::cx, ::cy]


def order_efficiencies(mask: PhaseMask, phase_step: float | None = None) -> dict[tuple[int, int], float]:
    """Power fraction diffracted into every order of the sampled mask."""
    c = fourier_coefficients(mask, phase_step)
    eff = np.abs(c) ** 2
    n = eff.shape[0]
    freqs = np.fft.fftfreq(n, 1.0 / n).astype(int)
    return {(int(freqs[a]), int(freqs[b])): float(eff[a, b]) for a in range(n) for b in range(n)}


def first_order_efficiency(efficiencies: dict[tuple[int, int], float]) -> float:
    """Mean efficiency of the six first orders."""
    return float(np.mean([efficiencies[ix] for ix in FIRST_ORDERS]))


def compromise_depth(wavelength1: float, wavelength2: float) -> float:
    """Etch depth giving a half-wave round trip at the mean wavelength."""
    if not (wavelength1 > 0 and wavelength2 > 0):
        raise ValueError("wavelengths must be positive")
    return (wavelength1 + wavelength2) / 8


def efficiency_rows(spec: GratingSpec, efficiencies: dict, max_order: int = 3):
    """Rows ``m, n, kx, ky, efficiency`` for orders with ``|m|, |n| <= max_order``."""
    b = spec.reciprocal_vectors
    rows = []
    for (m, n), eta in sorted(efficiencies.items()):
        if abs(m) <= max_order and abs(n) <= max_order:
            G = m * b[0] + n * b[1]
            rows.append((m, n, G[0], G[1], eta))
    return rows


def write_efficiency_csv(path, spec: GratingSpec, efficiencies: dict, max_order: int = 3) -> Path:
    return _io.write_csv(path, ("m", "n", "kx", "ky", "efficiency"), efficiency_rows(spec, efficiencies, max_order))


def write_mask_pgm(path, mask: PhaseMask, binary: bool = True) -> tuple[Path, Path]:
    """Export as a 16-bit PGM (phase 0 -> 0, phase_step -> 65535) plus sidecar.

    Image rows follow the second lattice axis ``a2``; columns follow ``a1``.
    """
    values = np.where(mask.recessed.T, _io.PGM_MAX, 0)
    path = _io.write_pgm(path, values, binary=binary)
    side = _io.write_sidecar(_io.sidecar_path(path), {
        "pitch_m": mask.grid.pitch,
        "axis_angle_rad": mask.grid.angle,
        "phase_step_rad": mask.phase_step,
        "triangle_side_m": mask.spec.triangle_side,
        "etch_depth_m": mask.spec.etch_depth,
    })
    return path, side


def read_mask_pgm(path) -> PhaseMask:
    values = _io.read_pgm(path).T
    meta = _io.read_sidecar(_io.sidecar_path(path))
    spec = GratingSpec(triangle_side=float(meta["triangle_side_m"]), etch_depth=float(meta["etch_depth_m"]))
    grid = Grid2D(pitch=float(meta["pitch_m"]), nx=values.shape[0], ny=values.shape[1],
                  angle=float(meta["axis_angle_rad"]))
    step = float(meta["phase_step_rad"])
    return PhaseMask(grid=grid, recessed=values > _io.PGM_MAX // 2, phase_step=step, spec=spec)
