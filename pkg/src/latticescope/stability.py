"""Position time series of lattice sites and their relative stability."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import uniform_filter1d

from . import _io
from .errors import AlignmentError

_SERIES_HEADER = ("t_s", "x_nm", "y_nm")


@dataclass(frozen=True)
class PositionSeries:
    """Site positions (metres, shape ``(n, 2)``) sampled at ``timestamps`` (seconds)."""

    timestamps: np.ndarray
    positions: np.ndarray
    color: str = ""

    def __post_init__(self):
        t = np.asarray(self.timestamps, dtype=float)
        p = np.asarray(self.positions, dtype=float)
        object.__setattr__(self, "timestamps", t)
        object.__setattr__(self, "positions", p)
        if t.ndim != 1 or p.shape != (t.size, 2):
            raise ValueError("positions must have shape (len(timestamps), 2)")
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("timestamps must be strictly increasing")

    @property
    def median_step(self) -> float:
        return float(np.median(np.diff(self.timestamps)))


@dataclass(frozen=True)
class StabilityReport:
    short_rms: tuple[float, float]
    drift: tuple[float, float]
    differential_rms: float
    rejection_ratio: float

    def rows(self):
        return [("short_rms_1_nm", self.short_rms[0] * 1e9), ("short_rms_2_nm", self.short_rms[1] * 1e9),
                ("drift_1_nm", self.drift[0] * 1e9), ("drift_2_nm", self.drift[1] * 1e9),
                ("differential_rms_nm", self.differential_rms * 1e9),
                ("rejection_ratio", self.rejection_ratio)]


def align_series(series1: PositionSeries, series2: PositionSeries, min_samples: int = 8):
    """Resample both series onto the coarser one's timestamps inside the common span."""
    if series1.timestamps.size < 2 or series2.timestamps.size < 2:
        raise AlignmentError("each series needs at least two samples")
    coarse, fine = (series1, series2) if series1.median_step >= series2.median_step else (series2, series1)
    lo = max(series1.timestamps[0], series2.timestamps[0])
    hi = min(series1.timestamps[-1], series2.timestamps[-1])
    t = coarse.timestamps[(coarse.timestamps >= lo) & (coarse.timestamps <= hi)]
    if t.size < min_samples:
        raise AlignmentError(f"only {t.size} common samples; need at least {min_samples}")

    def resample(s: PositionSeries) -> np.ndarray:
        return np.column_stack([np.interp(t, s.timestamps, s.positions[:, k]) for k in range(2)])

    return t, resample(series1), resample(series2)


def stability_report(series1: PositionSeries, series2: PositionSeries, short_window: float,
                     direction=(1.0, 0.0)) -> StabilityReport:
    """Stability of two site positions projected on ``direction``.

    Short-term RMS is taken about a moving mean of width ``short_window``
    seconds; drift is the range of that moving mean.  The differential RMS is
    the standard deviation of the aligned difference.
    """
    t, p1, p2 = align_series(series1, series2)
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    x1, x2 = p1 @ u, p2 @ u
    dt = float(np.median(np.diff(t)))
    width = max(1, int(round(short_window / dt)))
    if width > t.size:
        raise AlignmentError("short_window is longer than the common time span")
    rms, drift = [], []
    for x in (x1, x2):
        mean = uniform_filter1d(x, width, mode="nearest")
        rms.append(float(np.sqrt(np.mean((x - mean) ** 2))))
        drift.append(float(mean.max() - mean.min()))
    diff = float(np.std(x1 - x2))
    ratio = float(np.mean(rms) / diff) if diff > 0 else np.inf
    return StabilityReport(short_rms=tuple(rms), drift=tuple(drift), differential_rms=diff, rejection_ratio=ratio)


def synthetic_pair(duration: float = 1500.0, step: float = 1.0, vibration_rms: float = 60e-9,
                   drift_span: float = 100e-9, noise_rms: float = 8.5e-9, seed: int = 0):
    """Two site tracks sharing vibration and drift, each with independent noise.

    The common random walk is rescaled so its range is ``drift_span``.
    Motion is along ``x``; ``y`` carries independent noise only.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(0.0, duration, step)
    walk = np.cumsum(rng.standard_normal(t.size))
    walk = (walk - walk.min()) / np.ptp(walk) * drift_span
    common = walk + vibration_rms * rng.standard_normal(t.size)
    out = []
    for color in ("1064nm", "681nm"):
        x = common + noise_rms * rng.standard_normal(t.size)
        y = noise_rms * rng.standard_normal(t.size)
        out.append(PositionSeries(t, np.column_stack([x, y]), color))
    return tuple(out)


def write_series_csv(path, series: PositionSeries) -> Path:
    rows = ((t, x * 1e9, y * 1e9) for t, (x, y) in zip(series.timestamps, series.positions))
    return _io.write_csv(path, _SERIES_HEADER, rows)


def read_series_csv(path, color: str = "") -> PositionSeries:
    _, data = _io.read_csv(path, _SERIES_HEADER)
    return PositionSeries(data[:, 0], data[:, 1:3] * 1e-9, color)


def write_report_csv(path, report: StabilityReport) -> Path:
    return _io.write_csv(path, ("metric", "value"), report.rows())
