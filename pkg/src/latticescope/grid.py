"""Uniform two-dimensional sampling grids."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Uniform grid of ``nx`` by ``ny`` samples.

    The first array axis runs along ``x`` (unit vector ``(1, 0)``), the second
    along ``(cos(angle), sin(angle))``.  ``angle`` is pi/2 for an ordinary
    Cartesian grid and pi/3 for a grid aligned with a triangular lattice.
    Lengths are in metres.
    """

    pitch: float
    nx: int
    ny: int
    origin: tuple[float, float] = (0.0, 0.0)
    angle: float = np.pi / 2

    def __post_init__(self):
        if not self.pitch > 0:
            raise ValueError(f"pitch must be positive, got {self.pitch}")
        if self.nx < 16 or self.ny < 16:
            raise ValueError(f"grid needs at least 16 samples per axis, got {self.nx}x{self.ny}")
        if not 0 < self.angle < np.pi:
            raise ValueError("angle between grid axes must lie in (0, pi)")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def axes(self) -> np.ndarray:
        """Rows are the two step vectors (length ``pitch``)."""
        return self.pitch * np.array([[1.0, 0.0], [np.cos(self.angle), np.sin(self.angle)]])

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Cartesian ``(X, Y)`` of every sample, each of shape ``(nx, ny)``."""
        i = np.arange(self.nx)[:, None]
        j = np.arange(self.ny)[None, :]
        e = self.axes
        X = self.origin[0] + i * e[0, 0] + j * e[1, 0]
        Y = self.origin[1] + i * e[0, 1] + j * e[1, 1]
        return X, Y

    @classmethod
    def centered(cls, pitch: float, n: int) -> "Grid2D":
        """Square Cartesian grid of ``n`` x ``n`` samples centred on the origin."""
        half = pitch * (n - 1) / 2
        return cls(pitch=pitch, nx=n, ny=n, origin=(-half, -half))
