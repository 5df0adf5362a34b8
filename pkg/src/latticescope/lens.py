"""Meridional ray tracing and the two-lens aberration-balancing design.

Geometry: surfaces are listed in propagation order along +z; a surface
vertex sits ``thickness_to_next`` before the next one.  Sag follows the
usual even-asphere form.  Rays are traced exactly (vector Snell law) in the
meridional plane.

Axis-crossing positions returned by :func:`trace_ray` and
:func:`paraxial_focus` are distances past the last vertex along +z.
:class:`FocusReport` instead uses an axial coordinate that increases
*toward the lens* (the negated distance), so that longitudinal spherical
aberration of a positive singlet is positive, chromatic shift of normally
dispersive glass is negative, and a focal error where the longer
wavelength focuses farther away is negative.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize

from . import _io
from .doe import GratingSpec, first_order_angle
from .errors import NoFocusError, OptimizationError, TraceError, VignettingError
from .glass import GlassModel, get_glass, refractive_index

_NEWTON_TOL = 1e-15
_PARAXIAL_HEIGHT = 1e-7


@dataclass(frozen=True)
class Surface:
    kind: str
    curvature_radius: float = np.inf
    conic_constant: float = 0.0
    aspheric_coeffs: tuple[tuple[int, float], ...] = ()
    aperture_radius: float = 25e-3
    following_medium: GlassModel | None = None
    thickness_to_next: float = 0.0

    def __post_init__(self):
        if self.kind not in ("flat", "spherical", "conic_asphere"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if not self.aperture_radius > 0:
            raise ValueError("aperture_radius must be positive")
        if self.kind == "flat" and (np.isfinite(self.curvature_radius) or self.aspheric_coeffs):
            raise ValueError("flat surfaces take no curvature or aspheric terms")
        if self.kind == "spherical" and (self.conic_constant != 0 or self.aspheric_coeffs):
            raise ValueError("spherical surfaces take no conic or aspheric terms")

    @property
    def curvature(self) -> float:
        return 0.0 if np.isinf(self.curvature_radius) else 1.0 / self.curvature_radius

    @property
    def paraxial_curvature(self) -> float:
        return self.curvature + 2 * sum(a for p, a in self.aspheric_coeffs if p == 2)

    def sag(self, y: float) -> tuple[float, float]:
        """Sag ``z(y)`` and slope ``dz/dy``."""
        c = self.curvature
        z = dz = 0.0
        if c != 0.0:
            arg = 1.0 - (1.0 + self.conic_constant) * c * c * y * y
            if arg <= 0.0:
                raise TraceError(f"ray height {y:.4g} m beyond the conic's domain")
            root = np.sqrt(arg)
            z = c * y * y / (1.0 + root)
            dz = c * y / root
        for p, a in self.aspheric_coeffs:
            z += a * y ** p
            dz += p * a * y ** (p - 1)
        return z, dz

    def mirrored(self) -> "Surface":
        """Same surface seen from the opposite side (z -> -z)."""
        return replace(self, curvature_radius=-self.curvature_radius,
                       aspheric_coeffs=tuple((p, -a) for p, a in self.aspheric_coeffs))


@dataclass(frozen=True)
class OpticalSystem:
    surfaces: tuple[Surface, ...]
    name: str = ""

    def __post_init__(self):
        if not self.surfaces:
            raise ValueError("an optical system needs at least one surface")
        object.__setattr__(self, "surfaces", tuple(self.surfaces))

    @property
    def vertex_positions(self) -> np.ndarray:
        thick = [s.thickness_to_next for s in self.surfaces[:-1]]
        return np.concatenate([[0.0], np.cumsum(thick)])

    @property
    def length(self) -> float:
        return float(self.vertex_positions[-1])

    def media(self) -> list[GlassModel | None]:
        """Medium in front of every surface, plus the final image-space medium."""
        return [None] + [s.following_medium for s in self.surfaces]

    def reversed(self, image_distance: float = 0.0) -> "OpticalSystem":
        """The system traversed backwards; the last vertex becomes the first.

        Assumes the system sits in air on both sides.
        """
        media = self.media()
        out = []
        n = len(self.surfaces)
        for k in range(n - 1, -1, -1):
            s = self.surfaces[k].mirrored()
            thick = self.surfaces[k - 1].thickness_to_next if k > 0 else image_distance
            out.append(replace(s, following_medium=media[k], thickness_to_next=thick))
        return OpticalSystem(tuple(out), name=f"{self.name} (reversed)")


@dataclass(frozen=True)
class Ray:
    height: float
    direction_angle: float
    wavelength: float

    def __post_init__(self):
        if not abs(self.direction_angle) < np.pi / 2:
            raise ValueError("direction_angle must satisfy |angle| < pi/2")


@dataclass(frozen=True)
class TraceResult:
    crossing_z: float  # axis crossing, measured past the last vertex
    exit_height: float  # height at the last surface
    exit_angle: float  # signed angle to the axis after the last surface
    path: tuple[tuple[float, float], ...]  # (z, y) at every surface, z from the first vertex


def _refract(d: np.ndarray, slope: float, n1: float, n2: float) -> np.ndarray:
    normal = np.array([1.0, -slope]) / np.hypot(1.0, slope)
    cos_i = float(normal @ d)
    mu = n1 / n2
    k = 1.0 - mu * mu * (1.0 - cos_i * cos_i)
    if k < 0.0:
        raise TraceError("total internal reflection")
    out = mu * d + (np.sqrt(k) - mu * cos_i) * normal
    return out / np.hypot(out[0], out[1])


def _propagate(system: OpticalSystem, ray: Ray, z0: float = 0.0):
    """Trace to after the last surface; returns position, direction and path."""
    d = np.array([np.cos(ray.direction_angle), np.sin(ray.direction_angle)])
    z, y = z0, ray.height
    n1 = 1.0
    path = []
    for zv, surf in zip(system.vertex_positions, system.surfaces):
        t = (zv - z) / d[0]
        for _ in range(100):
            yt = y + t * d[1]
            s, ds = surf.sag(yt)
            f = z + t * d[0] - (zv + s)
            t -= f / (d[0] - ds * d[1])
            if abs(f) < _NEWTON_TOL:
                break
        else:
            raise TraceError("ray-surface intersection did not converge")
        z, y = z + t * d[0], y + t * d[1]
        if abs(y) > surf.aperture_radius:
            raise VignettingError(f"ray clipped at height {y:.4g} m by aperture {surf.aperture_radius:.4g} m")
        _, slope = surf.sag(y)
        n2 = refractive_index(surf.following_medium, ray.wavelength)
        d = _refract(d, slope, n1, n2)
        n1 = n2
        path.append((z, y))
    return z, y, d, path


def trace_ray(system: OpticalSystem, ray: Ray) -> TraceResult:
    """Exact meridional trace of ``ray`` starting in the first vertex plane."""
    z, y, d, path = _propagate(system, ray)
    if abs(d[1]) < 1e-15:
        raise NoFocusError("output ray is parallel to the axis")
    z_cross = z - y * d[0] / d[1]
    return TraceResult(crossing_z=z_cross - system.length, exit_height=y,
                       exit_angle=float(np.arctan2(d[1], d[0])), path=tuple(path))


def reverse_trace(system: OpticalSystem, result: TraceResult, wavelength: float) -> Ray:
    """Send the exit ray of ``result`` back through the system.

    Returns the recovered ray in the first vertex plane, with the sign of
    ``z`` flipped back to the forward convention.
    """
    z_last, y_last = result.path[-1]
    back = system.reversed()
    # reversed frame: z' = length - z, angle' = pi - angle -> -angle about the axis
    ray = Ray(height=y_last, direction_angle=-result.exit_angle, wavelength=wavelength)
    z, y, d, _ = _propagate(back, ray, z0=system.length - z_last)
    # carry the ray to the reversed system's last vertex plane (the original first vertex)
    y = y + (back.length - z) * d[1] / d[0]
    return Ray(height=y, direction_angle=float(-np.arctan2(d[1], d[0])), wavelength=wavelength)


def paraxial_trace(system: OpticalSystem, wavelength: float) -> tuple[float, float]:
    """Return ``(back focal distance, effective focal length)`` for a collimated input."""
    y, nu = 1.0, 0.0
    n1 = 1.0
    for k, surf in enumerate(system.surfaces):
        n2 = refractive_index(surf.following_medium, wavelength)
        nu = nu - y * (n2 - n1) * surf.paraxial_curvature
        if k < len(system.surfaces) - 1:
            y = y + surf.thickness_to_next * nu / n2
        n1 = n2
    u = nu / n1
    if u >= 0:
        raise NoFocusError("system has no positive power at this wavelength")
    return -y / u, -1.0 / u


def paraxial_focus(system: OpticalSystem, wavelength: float) -> float:
    """Paraxial back focal distance (past the last vertex) for a collimated beam."""
    return paraxial_trace(system, wavelength)[0]


def effective_focal_length(system: OpticalSystem, wavelength: float) -> float:
    return paraxial_trace(system, wavelength)[1]


@dataclass(frozen=True)
class FocusReport:
    """Longitudinal aberrations; axial coordinates increase toward the lens."""

    wavelengths: tuple[float, float]
    heights: tuple[float, float]
    paraxial_focus_z: dict[float, float]
    marginal_crossing_z: dict[tuple[float, float], float]
    lsa: dict[float, float]
    lca: float
    delta_f: float

    def rows(self):
        for lam, h in zip(self.wavelengths, self.heights):
            yield (lam * 1e9, h * 1e3, self.marginal_crossing_z[(lam, h)] * 1e3,
                   self.lsa[lam] * 1e3, self.lca * 1e3, self.delta_f * 1e3)


def aberration_report(system: OpticalSystem, wavelength1: float, wavelength2: float,
                      height1: float, height2: float) -> FocusReport:
    """LSA per wavelength, LCA and total focal error ``crossing(l2, h2) - crossing(l1, h1)``."""
    lams, hs = (wavelength1, wavelength2), (height1, height2)
    paraxial = {lam: -paraxial_focus(system, lam) for lam in lams}
    marginal = {(lam, h): -trace_ray(system, Ray(h, 0.0, lam)).crossing_z for lam, h in zip(lams, hs)}
    lsa = {lam: marginal[(lam, h)] - paraxial[lam] for lam, h in zip(lams, hs)}
    return FocusReport(
        wavelengths=lams, heights=hs, paraxial_focus_z=paraxial, marginal_crossing_z=marginal,
        lsa=lsa, lca=paraxial[wavelength2] - paraxial[wavelength1],
        delta_f=marginal[(wavelength2, height2)] - marginal[(wavelength1, height1)],
    )


def write_focus_report_csv(path, report: FocusReport) -> Path:
    return _io.write_csv(path, ("lambda_nm", "height_mm", "crossing_mm", "lsa_mm", "lca_mm", "delta_f_mm"),
                         report.rows())


# -- lens construction -----------------------------------------------------

def plano_convex(focal_length: float, glass: GlassModel, center_thickness: float,
                 aperture_radius: float, curved_first: bool = True,
                 design_wavelength: float = 587.6e-9, thickness_after: float = 0.0) -> tuple[Surface, Surface]:
    """Spherical plano-convex singlet with thin-lens focal length at ``design_wavelength``."""
    R = (refractive_index(glass, design_wavelength) - 1.0) * focal_length
    flat = dict(kind="flat", aperture_radius=aperture_radius)
    if curved_first:
        return (Surface("spherical", R, aperture_radius=aperture_radius, following_medium=glass,
                        thickness_to_next=center_thickness),
                Surface(**flat, thickness_to_next=thickness_after))
    return (Surface(**flat, following_medium=glass, thickness_to_next=center_thickness),
            Surface("spherical", -R, aperture_radius=aperture_radius, thickness_to_next=thickness_after))


@lru_cache(maxsize=64)
def stigmatic_asphere(focal_length: float, glass: GlassModel, center_thickness: float,
                      aperture_radius: float, design_wavelength: float,
                      orders: Sequence[int] = (4, 6, 8, 10, 12, 14, 16),
                      thickness_after: float = 0.0) -> tuple[Surface, Surface]:
    """Plano-convex asphere, convex side first, free of spherical aberration
    for a collimated beam at ``design_wavelength``.

    The exact aspheric profile follows from equal optical path to the
    focus: a ray leaving the flat back face at angle ``alpha`` travels a
    glass path ``s`` with ``s (n - cos beta) = (n - 1) t + b (1 - 1/cos alpha)``,
    ``beta`` being the internal angle and ``b`` the back focal distance.  The
    profile is then fitted with a conic plus even polynomial terms.
    """
    n = refractive_index(glass, design_wavelength)
    R = (n - 1.0) * focal_length
    t = center_thickness
    bfd = focal_length - t / n
    alpha = np.linspace(0.0, np.radians(85.0), 20000)
    beta = np.arcsin(np.sin(alpha) / n)
    s = ((n - 1.0) * t + bfd * (1.0 - 1.0 / np.cos(alpha))) / (n - np.cos(beta))
    z = t - s * np.cos(beta)
    y = bfd * np.tan(alpha) + s * np.sin(beta)
    keep = (s > 0) & (np.concatenate([[True], np.diff(y) > 0]))
    keep &= np.cumprod(keep).astype(bool)
    keep &= y <= 1.02 * aperture_radius
    y, z = y[keep], z[keep]
    if y.max() < aperture_radius:
        raise TraceError("stigmatic profile does not reach the requested aperture; increase center thickness")
    c = 1.0 / R
    scale = aperture_radius

    def model(p):
        arg = np.maximum(1.0 - (1.0 + p[0]) * c * c * y * y, 1e-12)
        zz = c * y * y / (1.0 + np.sqrt(arg))
        for k, order in enumerate(orders):
            zz = zz + p[k + 1] * (y / scale) ** order
        return zz

    fit = optimize.least_squares(lambda p: (model(p) - z) * 1e6, np.r_[-1.0, np.zeros(len(orders))],
                                 xtol=1e-15, ftol=1e-15, gtol=1e-15)
    coeffs = tuple((order, float(fit.x[k + 1] / scale ** order)) for k, order in enumerate(orders))
    front = Surface("conic_asphere", R, float(fit.x[0]), coeffs, aperture_radius=aperture_radius,
                    following_medium=glass, thickness_to_next=t)
    back = Surface("flat", aperture_radius=aperture_radius, thickness_to_next=thickness_after)
    if front.sag(aperture_radius)[0] >= t:
        raise TraceError("asphere has non-positive edge thickness")
    return front, back


@dataclass(frozen=True)
class LensDesign:
    """Parameterised two-lens front objective with chamber window.

    A weak spherical plano-convex lens (flat side toward the incoming beams)
    sits ``d1`` before an ideal asphere, which sits ``d2`` before a fused-silica
    chamber window.  Lattice beams arrive parallel to the axis at heights
    ``collimator_focal_length * tan(theta)`` where ``theta`` is the grating's
    first-order angle.  Lengths in metres.
    """

    weak_focal_length: float = 175e-3
    d1: float = 50e-3
    d2: float = 6e-3
    include_weak: bool = True
    asphere_focal_length: float = 40e-3
    asphere_thickness: float = 20e-3
    asphere_glass: str = "N-BK7"
    design_wavelength: float = 872.5e-9
    weak_glass: str = "N-BK7"
    weak_thickness: float = 6e-3
    weak_aperture: float = 25.4e-3
    asphere_aperture: float = 25e-3
    window_thickness: float = 3e-3
    window_glass: str = "fused_silica"
    collimator_focal_length: float = 500e-3
    triangle_side: float = 26e-6

    def beam_height(self, wavelength: float) -> float:
        theta = first_order_angle(GratingSpec(triangle_side=self.triangle_side), wavelength)
        return self.collimator_focal_length * np.tan(theta)

    def build(self) -> OpticalSystem:
        surfaces: list[Surface] = []
        if self.include_weak:
            surfaces += plano_convex(self.weak_focal_length, get_glass(self.weak_glass), self.weak_thickness,
                                     self.weak_aperture, curved_first=False, thickness_after=self.d1)
        asph = stigmatic_asphere(self.asphere_focal_length, get_glass(self.asphere_glass), self.asphere_thickness,
                                 self.asphere_aperture, self.design_wavelength)
        surfaces += [asph[0], replace(asph[1], thickness_to_next=self.d2 if self.window_thickness > 0 else 0.0)]
        if self.window_thickness > 0:
            surfaces += [Surface("flat", aperture_radius=self.asphere_aperture,
                                 following_medium=get_glass(self.window_glass),
                                 thickness_to_next=self.window_thickness),
                         Surface("flat", aperture_radius=self.asphere_aperture)]
        name = "weak lens + asphere" if self.include_weak else "asphere only"
        return OpticalSystem(tuple(surfaces), name=name)


def design_report(design: LensDesign, wavelength1: float = 681e-9, wavelength2: float = 1064e-9) -> FocusReport:
    return aberration_report(design.build(), wavelength1, wavelength2,
                             design.beam_height(wavelength1), design.beam_height(wavelength2))


@dataclass(frozen=True)
class BalanceResult:
    design: LensDesign
    system: OpticalSystem
    delta_f: float
    start_delta_f: float
    success: bool
    evaluations: int
    message: str = ""


_DEFAULT_BOUNDS = {"weak_focal_length": (100e-3, 400e-3), "d1": (10e-3, 100e-3)}


def balance_aberrations(base: LensDesign, free_params: Sequence[str] = ("d1",),
                        bounds: dict[str, tuple[float, float]] | None = None,
                        wavelength1: float = 681e-9, wavelength2: float = 1064e-9,
                        target: float = 100e-6) -> BalanceResult:
    """Minimise ``|delta_f|`` over the free design parameters (derivative free).

    One free parameter uses a bounded Brent search (bracketing a sign change
    when one exists); two use bounded Powell.  The result is never worse than
    the starting design.
    """
    bounds = {**_DEFAULT_BOUNDS, **(bounds or {})}
    free_params = tuple(free_params)
    for p in free_params:
        if p not in _DEFAULT_BOUNDS:
            raise ValueError(f"unsupported free parameter {p!r}")
    calls = [0]

    def delta(x) -> float:
        calls[0] += 1
        d = replace(base, **dict(zip(free_params, map(float, np.atleast_1d(x)))))
        try:
            return design_report(d, wavelength1, wavelength2).delta_f
        except TraceError:
            return np.inf

    start = delta([getattr(base, p) for p in free_params])
    lo = np.array([bounds[p][0] for p in free_params])
    hi = np.array([bounds[p][1] for p in free_params])
    if len(free_params) == 1:
        grid = np.linspace(lo[0], hi[0], 19)
        vals = np.array([delta(g) for g in grid])
        finite = np.isfinite(vals)
        if not finite.any():
            raise OptimizationError("no traceable design inside the bounds")
        best_x = np.array([grid[np.nanargmin(np.where(finite, np.abs(vals), np.nan))]])
        sign_change = np.where(finite[:-1] & finite[1:] & (np.sign(vals[:-1]) != np.sign(vals[1:])))[0]
        if sign_change.size:
            k = sign_change[np.argmin(np.abs(grid[sign_change] - getattr(base, free_params[0])))]
            best_x = np.array([optimize.brentq(delta, grid[k], grid[k + 1], xtol=1e-9)])
        else:
            res = optimize.minimize_scalar(lambda x: abs(delta(x)), bounds=(lo[0], hi[0]), method="bounded")
            if abs(res.fun) < abs(delta(best_x)):
                best_x = np.array([res.x])
    else:
        x0 = np.clip([getattr(base, p) for p in free_params], lo, hi)
        res = optimize.minimize(lambda x: abs(delta(x)), x0, method="Powell",
                                bounds=list(zip(lo, hi)), options={"xtol": 1e-6, "ftol": 1e-6, "maxfev": 400})
        best_x = np.atleast_1d(res.x)
    best = delta(best_x)
    if not abs(best) <= abs(start):
        best_x = np.array([getattr(base, p) for p in free_params])
        best = start
    design = replace(base, **dict(zip(free_params, map(float, best_x))))
    ok = abs(best) <= target
    msg = "" if ok else f"best |delta_f| = {abs(best):.3g} m exceeds target {target:.3g} m"
    return BalanceResult(design=design, system=design.build(), delta_f=best, start_delta_f=start,
                         success=ok, evaluations=calls[0], message=msg)


def exit_angle(system: OpticalSystem, entrance_angle: float, wavelength: float,
               collimator_focal_length: float = 500e-3) -> float:
    """Beam-to-axis angle at focus for a grating order leaving at ``entrance_angle``.

    The collimating lens converts the order's angle into a beam parallel to
    the axis at height ``f_c tan(entrance_angle)``.
    """
    h = collimator_focal_length * np.tan(entrance_angle)
    if h == 0.0:
        return 0.0
    return abs(trace_ray(system, Ray(h, 0.0, wavelength)).exit_angle)


def singlet_delta_f(design: LensDesign, wavelength1: float = 681e-9, wavelength2: float = 1064e-9,
                    glass: str = "N-BK7") -> float:
    """Focal error of one spherical plano-convex lens working at the same
    numerical aperture as ``design``.

    The singlet has the asphere's focal length, convex side first; for each
    wavelength the ray height is chosen so the exit angle matches the angle
    the design produces.
    """
    ref = design.build()
    single = OpticalSystem(plano_convex(design.asphere_focal_length, get_glass(glass), design.asphere_thickness / 2,
                                        design.asphere_aperture, curved_first=True,
                                        design_wavelength=design.design_wavelength), name="spherical singlet")
    crossings = []
    for lam in (wavelength1, wavelength2):
        target = abs(trace_ray(ref, Ray(design.beam_height(lam), 0.0, lam)).exit_angle)
        hmax = design.asphere_focal_length

        def mismatch(h):
            try:
                return abs(trace_ray(single, Ray(h, 0.0, lam)).exit_angle) - target
            except TraceError:
                return 1.0
        h = optimize.brentq(mismatch, 1e-4, _max_traceable_height(single, lam, hmax))
        crossings.append(-trace_ray(single, Ray(h, 0.0, lam)).crossing_z)
    return crossings[1] - crossings[0]


def _max_traceable_height(system: OpticalSystem, wavelength: float, upper: float) -> float:
    lo, hi = 1e-4, upper
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        try:
            trace_ray(system, Ray(mid, 0.0, wavelength))
            lo = mid
        except TraceError:
            hi = mid
    return lo


# -- prescription text format ----------------------------------------------

def format_prescription(system: OpticalSystem) -> str:
    """One surface per line: kind radius conic thickness glass aperture [order:coef ...] (SI units)."""
    lines = [f"# {system.name}" if system.name else "# optical system",
             "# kind radius_m conic thickness_m glass aperture_m [order:coefficient ...]"]
    for s in system.surfaces:
        glass = s.following_medium.name if s.following_medium is not None else "air"
        radius = "inf" if np.isinf(s.curvature_radius) else repr(float(s.curvature_radius))
        fields = [s.kind, radius, repr(float(s.conic_constant)), repr(float(s.thickness_to_next)), glass,
                  repr(float(s.aperture_radius))]
        fields += [f"{p}:{a!r}" for p, a in s.aspheric_coeffs]
        lines.append(" ".join(fields))
    return "\n".join(lines) + "\n"


def parse_prescription(text: str) -> OpticalSystem:
    surfaces = []
    name = ""
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if not name and lineno == 1:
                name = line.lstrip("# ").strip()
            continue
        parts = line.split()
        if len(parts) < 6:
            raise ValueError(f"line {lineno}: expected at least 6 fields, got {len(parts)}")
        kind, radius, conic, thick, glass, aperture = parts[:6]
        coeffs = tuple((int(p), float(a)) for p, a in (tok.split(":") for tok in parts[6:]))
        surfaces.append(Surface(kind, float(radius), float(conic), coeffs, float(aperture),
                                get_glass(glass), float(thick)))
    return OpticalSystem(tuple(surfaces), name=name)


def write_prescription(path, system: OpticalSystem) -> Path:
    return _io.atomic_write_text(path, format_prescription(system))


def read_prescription(path) -> OpticalSystem:
    return parse_prescription(Path(path).read_text(encoding="utf-8"))
