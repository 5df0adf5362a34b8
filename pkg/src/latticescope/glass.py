"""Dispersive glass models."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GlassModel:
    """Three-term Sellmeier glass; ``sellmeier_C`` in um^2, validity band in metres."""

    name: str
    sellmeier_B: tuple[float, float, float]
    sellmeier_C: tuple[float, float, float]
    band: tuple[float, float] = (0.4e-6, 1.2e-6)

    def index(self, wavelength: float) -> float:
        return refractive_index(self, wavelength)


def refractive_index(glass: GlassModel | None, wavelength: float) -> float:
    """Sellmeier refractive index; ``glass=None`` denotes vacuum/air (n = 1)."""
    if glass is None:
        return 1.0
    lo, hi = glass.band
    if not lo <= wavelength <= hi:
        raise DomainError(f"{wavelength:.4g} m outside the {glass.name} model band [{lo:.3g}, {hi:.3g}] m")
    l2 = (wavelength * 1e6) ** 2
    n2 = 1.0 + sum(b * l2 / (l2 - c) for b, c in zip(glass.sellmeier_B, glass.sellmeier_C))
    return float(np.sqrt(n2))


@lru_cache(maxsize=None)
def catalog() -> dict[str, GlassModel]:
    text = resources.files("latticescope").joinpath("data/glasses.csv").read_text(encoding="utf-8")
    rows = csv.DictReader(line for line in text.splitlines() if not line.startswith("#"))
    out = {}
    for r in rows:
        out[r["name"]] = GlassModel(
            name=r["name"],
            sellmeier_B=(float(r["B1"]), float(r["B2"]), float(r["B3"])),
            sellmeier_C=(float(r["C1"]), float(r["C2"]), float(r["C3"])),
            band=(float(r["lambda_min_um"]) * 1e-6, float(r["lambda_max_um"]) * 1e-6),
        )
    return out


def get_glass(name: str | None) -> GlassModel | None:
    if name is None or name.lower() in ("air", "vacuum", "none", ""):
        return None
    try:
        return catalog()[name]
    except KeyError:
        raise DomainError(f"unknown glass {name!r}; known: {', '.join(sorted(catalog()))}") from None
