"""Command-line front end: ``latticescope <subcommand> --config FILE [--out DIR] [--seed N]``.

Exit codes: 0 success, 1 domain error, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import _io, config as cfgmod
from . import doe, dynamics, eom, lattice, lens, stability
from .errors import ConfigError, DomainError
from .grid import Grid2D

SUBCOMMANDS = ("doe", "lens", "lattice", "translate", "jump", "dynamics", "stability", "figures")


class Run:
    """Output directory plus the list of files written, for the manifest."""

    def __init__(self, cfg: dict, out: Path):
        self.cfg = cfg
        self.out = out
        self.written: list[Path] = []
        self.seed = int(cfg["run"]["seed"])

    def path(self, name: str) -> Path:
        return self.out / name

    def add(self, *paths) -> None:
        for p in paths:
            p = Path(p)
            if p not in self.written:
                self.written.append(p)

    def csv(self, name, header, rows) -> Path:
        p = _io.write_csv(self.path(name), header, rows)
        self.add(p)
        return p

    def summary(self, name, rows) -> Path:
        return self.csv(name, ("metric", "value"), rows)

    def rng(self, stream: int) -> np.random.Generator:
        return np.random.default_rng([self.seed, stream])

    def write_manifest(self) -> Path:
        rows = [(str(p.relative_to(self.out)), p.stat().st_size, _io.sha256_file(p)) for p in self.written]
        return _io.write_csv(self.path("manifest.csv"), ("path", "bytes", "sha256"), rows)


# -- subcommands --------------------------------------------------------------

def run_doe(run: Run) -> None:
    c = run.cfg["doe"]
    spec = doe.GratingSpec(triangle_side=c["L_um"] * 1e-6, etch_depth=c["depth_nm"] * 1e-9)
    mask = doe.synthesize_grating_profile(spec, spec.mask_grid(c["grid_n"], (c["cells"], c["cells"])))
    run.add(*doe.write_mask_pgm(run.path("doe_mask.pgm"), mask, binary=run.cfg["output"]["pgm_binary"]))
    ideal = doe.order_efficiencies(mask, np.pi)
    run.add(doe.write_efficiency_csv(run.path("doe_efficiencies.csv"), spec, ideal, c["max_order"]))
    rows = [("first_order_efficiency_ideal", doe.first_order_efficiency(ideal)),
            ("zeroth_order_efficiency_ideal", ideal[(0, 0)]),
            ("compromise_depth_nm", doe.compromise_depth(c["lambda1_nm"] * 1e-9, c["lambda2_nm"] * 1e-9) * 1e9)]
    for key in ("lambda1_nm", "lambda2_nm"):
        lam = c[key] * 1e-9
        step = doe.reflection_phase_step(spec, lam)
        eff = doe.order_efficiencies(mask, step)
        tag = f"{c[key]:g}nm"
        run.add(doe.write_efficiency_csv(run.path(f"doe_efficiencies_{tag}.csv"), spec, eff, c["max_order"]))
        rows += [(f"first_order_angle_deg_{tag}", np.degrees(doe.first_order_angle(spec, lam))),
                 (f"phase_step_rad_{tag}", step),
                 (f"zeroth_order_efficiency_{tag}", eff[(0, 0)]),
                 (f"first_order_efficiency_{tag}", doe.first_order_efficiency(eff))]
    run.summary("doe_summary.csv", rows)


def lens_design(run: Run) -> lens.LensDesign:
    c = run.cfg["lens"]
    return lens.LensDesign(
        weak_focal_length=c["weak_f_mm"] * 1e-3, d1=c["d1_mm"] * 1e-3, d2=c["d2_mm"] * 1e-3,
        asphere_focal_length=c["asphere_f_mm"] * 1e-3, asphere_thickness=c["asphere_ct_mm"] * 1e-3,
        design_wavelength=c["design_lambda_nm"] * 1e-9, window_thickness=c["window_mm"] * 1e-3,
        collimator_focal_length=c["collimator_f_mm"] * 1e-3, triangle_side=run.cfg["doe"]["L_um"] * 1e-6)


def run_lens(run: Run, prefix: str = "lens") -> None:
    c = run.cfg["lens"]
    lam1, lam2 = c["lambda1_nm"] * 1e-9, c["lambda2_nm"] * 1e-9
    design = lens_design(run)
    h1 = c["height1_mm"] * 1e-3 or design.beam_height(lam1)
    h2 = c["height2_mm"] * 1e-3 or design.beam_height(lam2)
    rows = [("height1_mm", h1 * 1e3), ("height2_mm", h2 * 1e3)]
    if c["prescription_path"]:
        system = lens.read_prescription(c["prescription_path"])
        report = lens.aberration_report(system, lam1, lam2, h1, h2)
        run.add(lens.write_focus_report_csv(run.path(f"{prefix}_focus.csv"), report))
        rows.append(("delta_f_mm", report.delta_f * 1e3))
        run.summary(f"{prefix}_summary.csv", rows)
        return
    design = replace(design, include_weak=False)
    alone = lens.aberration_report(design.build(), lam1, lam2, h1, h2)
    run.add(lens.write_focus_report_csv(run.path(f"{prefix}_focus_asphere_only.csv"), alone))
    free = tuple({"d1": "d1", "weak_f": "weak_focal_length"}[p.strip()] for p in c["optimize"].split(","))
    bounds = {"d1": (c["d1_min_mm"] * 1e-3, c["d1_max_mm"] * 1e-3),
              "weak_focal_length": (c["weak_f_min_mm"] * 1e-3, c["weak_f_max_mm"] * 1e-3)}
    result = lens.balance_aberrations(replace(design, include_weak=True), free, bounds, lam1, lam2)
    balanced = lens.aberration_report(result.system, lam1, lam2, h1, h2)
    run.add(lens.write_focus_report_csv(run.path(f"{prefix}_focus_balanced.csv"), balanced))
    run.add(lens.write_prescription(run.path(f"{prefix}_prescription.txt"), result.system))
    rows += [("delta_f_asphere_only_mm", alone.delta_f * 1e3),
             ("delta_f_start_mm", result.start_delta_f * 1e3),
             ("delta_f_balanced_mm", balanced.delta_f * 1e3),
             ("balance_success", int(result.success)),
             ("d1_mm", result.design.d1 * 1e3),
             ("weak_f_mm", result.design.weak_focal_length * 1e3),
             ("exit_angle1_deg", np.degrees(abs(lens.trace_ray(result.system, lens.Ray(h1, 0.0, lam1)).exit_angle))),
             ("exit_angle2_deg", np.degrees(abs(lens.trace_ray(result.system, lens.Ray(h2, 0.0, lam2)).exit_angle))),
             ("delta_f_spherical_singlet_mm", lens.singlet_delta_f(result.design, lam1, lam2) * 1e3)]
    run.summary(f"{prefix}_summary.csv", rows)


def _lattice_image(run: Run, lam: float, angle: float, path: str, stream: int) -> lattice.IntensityImage:
    c = run.cfg["lattice"]
    if path:
        return lattice.read_intensity_pgm(path)
    cfg = lattice.LatticeConfig.hexagonal(lam, angle, phases=c["phases_rad"])
    grid = Grid2D.centered(c["pitch_nm"] * 1e-9, c["grid_n"])
    img = lattice.interference_intensity(cfg, grid)
    if c["noise_fraction"] > 0:
        noisy = img.values + c["noise_fraction"] * img.values.max() * run.rng(stream).standard_normal(grid.shape)
        img = replace(img, values=np.clip(noisy, 0.0, None))
    return img


def run_lattice(run: Run, prefix: str = "lattice") -> None:
    c = run.cfg["lattice"]
    rows = []
    measured = []
    for n, stream in ((1, 11), (2, 12)):
        lam, angle = c[f"lambda{n}_nm"] * 1e-9, np.radians(c[f"angle{n}_deg"])
        img = _lattice_image(run, lam, angle, c[f"image{n}_path"], stream)
        tag = f"{c[f'lambda{n}_nm']:g}nm"
        run.add(*lattice.write_intensity_pgm(run.path(f"{prefix}_{tag}.pgm"), img,
                                             binary=run.cfg["output"]["pgm_binary"]))
        a_img = lattice.lattice_constant_from_image(img)
        measured.append(a_img)
        rows += [(f"lattice_constant_analytic_um_{tag}", lattice.lattice_constant_analytic(lam, angle) * 1e6),
                 (f"lattice_constant_image_um_{tag}", a_img * 1e6)]
    rows.append(("mismatch", lattice.commensurability_mismatch(*measured)))
    run.summary(f"{prefix}_constants.csv", rows)


def _modulator(run: Run):
    c = run.cfg["eom"]
    mod = eom.ModulatorSpec(r13=c["r13_pm_per_v"] * 1e-12, passes=c["passes"],
                            incidence_angle=np.radians(c["incidence_deg"]),
                            pad_capacitance=c["capacitance_pf"] * 1e-12, series_resistance=c["resistance_ohm"])
    amp = eom.AmplifierSpec(c["supply_kv"] * 1e3, c["current_limit_ma"] * 1e-3, c["bandwidth_mhz"] * 1e6)
    spark = eom.DischargeSpec(c["reservoir_nf"] * 1e-9, c["reservoir_bias_kv"] * 1e3, c["ignition_ns"] * 1e-9)
    geometry = lattice.LatticeConfig.hexagonal(c["lambda_nm"] * 1e-9, np.radians(c["angle_deg"]))
    return mod, amp, spark, geometry


def run_translate(run: Run, prefix: str = "translate") -> None:
    c = run.cfg["eom"]
    mod, amp, _, geometry = _modulator(run)
    lam = c["lambda_nm"] * 1e-9
    if c["drive_path"]:
        t, V = eom.read_voltage_csv(c["drive_path"])
    else:
        # all pads ramp together at the slew limit
        targets = np.array(c["drive_kv"]) * 1e3
        longest = max(eom.slew_limited_ramp(v, amp, mod).duration for v in targets)
        t = np.linspace(0.0, longest, 201)
        slew = amp.slew_rate(mod)
        V = np.column_stack([np.sign(v) * np.minimum(slew * t, abs(v)) for v in targets])
        run.add(eom.write_voltage_csv(run.path(f"{prefix}_drive.csv"), t, V))
    traj = eom.drive_to_trajectory(t, V, mod, lam, geometry)
    run.add(eom.write_trajectory_csv(run.path(f"{prefix}_trajectory.csv"), traj))
    run.summary(f"{prefix}_summary.csv", [
        ("half_wave_voltage_kv", eom.half_wave_voltage(mod, lam) * 1e-3),
        ("slew_v_per_us", amp.slew_rate(mod) * 1e-6),
        ("phase_slew_rad_per_us", eom.phase_slew(amp, mod, lam) * 1e-6),
        ("one_site_ramp_us", eom.slew_limited_ramp(2 * eom.half_wave_voltage(mod, lam), amp, mod).duration * 1e6),
        ("final_sites", traj.sites[-1]),
        ("resets", len(traj.resets)),
    ])


def run_jump(run: Run, prefix: str = "jump") -> None:
    c = run.cfg["eom"]
    mod, _, spark, geometry = _modulator(run)
    lam = c["lambda_nm"] * 1e-9
    wave = eom.spark_discharge(c["spark_start_kv"] * 1e3, mod, spark)
    run.csv(f"{prefix}_discharge.csv", ("t_s", "voltage_V", "current_A"),
            zip(wave.timestamps, wave.voltage, wave.current))
    V = np.column_stack([wave.voltage, np.zeros_like(wave.voltage), np.zeros_like(wave.voltage)])
    traj = eom.drive_to_trajectory(wave.timestamps, V, mod, lam, geometry, reset_rate=np.inf)
    run.add(eom.write_trajectory_csv(run.path(f"{prefix}_trajectory.csv"), traj))
    run.summary(f"{prefix}_summary.csv", [
        ("tau_ps", wave.tau * 1e12),
        ("ideal_peak_current_a", wave.ideal_peak_current),
        ("peak_current_a", wave.peak_current),
        ("final_voltage_v", wave.v_final),
        ("rise_time_10_90_ns", eom.rise_time_10_90(wave.timestamps, wave.voltage) * 1e9),
        ("jump_sites", traj.sites[-1] - traj.sites[0]),
    ])


def _protocol(c: dict, period: float) -> dynamics.TransportProtocol:
    ramp = dynamics.TransportProtocol.smooth_ramp(c["distance_sites"], c["duration_us"] * 1e-6, c["ramp_shape"])
    if c["mode"] == "smooth_ramp":
        return ramp
    if c["mode"] == "sudden_jump":
        return dynamics.TransportProtocol.sudden_jump(c["distance_sites"])
    return dynamics.TransportProtocol.composite(ramp, dynamics.TransportProtocol.sudden_jump(1.0))


def run_dynamics(run: Run, prefix: str = "dynamics") -> None:
    c = run.cfg["dynamics"]
    mass = c["mass_amu"] * dynamics.ATOMIC_MASS_UNIT
    a = c["lattice_constant_um"] * 1e-6
    omega = 2 * np.pi * c["site_frequency_khz"] * 1e3
    pot = dynamics.LatticePotential1D(dynamics.depth_for_frequency(omega, a, mass), a)
    period = 2 * np.pi / omega
    kw = dict(mass=mass, sites=c["sites"], samples_per_site=c["samples_per_site"], dt=period / c["steps_per_period"])
    result = dynamics.transport_fidelity(_protocol(c, period), pot, record_every=c["record_every"], **kw)
    run.add(dynamics.write_history_csv(run.path(f"{prefix}_history.csv"), result))
    sweep = [dynamics.transport_fidelity(
        dynamics.TransportProtocol.smooth_ramp(c["distance_sites"], n * period, c["ramp_shape"]), pot, **kw).fidelity
        for n in c["sweep_periods"]]
    run.add(dynamics.write_sweep_csv(run.path(f"{prefix}_sweep_periods.csv"), c["sweep_periods"], sweep))
    w = c["width_nm"] * 1e-9
    closed = [dynamics.jitter_overlap_fidelity(s * 1e-9, w) for s in c["jitter_nm"]]
    mc = [dynamics.jitter_overlap_monte_carlo(s * 1e-9, w, c["mc_draws"], run.rng(100 + k))
          for k, s in enumerate(c["jitter_nm"])]
    run.add(dynamics.write_sweep_csv(run.path(f"{prefix}_jitter_closed_form.csv"), c["jitter_nm"], closed))
    run.add(dynamics.write_sweep_csv(run.path(f"{prefix}_jitter_monte_carlo.csv"), c["jitter_nm"], mc))
    run.summary(f"{prefix}_summary.csv", [
        ("depth_hbar_omega", pot.depth / (dynamics.HBAR * omega)),
        ("fidelity", result.fidelity),
        ("excitation_energy_hbar_omega", result.excitation_energy / (dynamics.HBAR * omega)),
    ])


def run_stability(run: Run, prefix: str = "stability") -> None:
    c = run.cfg["stability"]
    if c["series1_path"]:
        s1 = stability.read_series_csv(c["series1_path"], "1")
        s2 = stability.read_series_csv(c["series2_path"], "2")
    else:
        s1, s2 = stability.synthetic_pair(c["duration_s"], c["step_s"], c["vibration_nm"] * 1e-9,
                                          c["drift_nm"] * 1e-9, c["noise_nm"] * 1e-9, seed=run.seed)
        run.add(stability.write_series_csv(run.path(f"{prefix}_series1.csv"), s1),
                stability.write_series_csv(run.path(f"{prefix}_series2.csv"), s2))
    report = stability.stability_report(s1, s2, c["window_s"])
    run.add(stability.write_report_csv(run.path(f"{prefix}_report.csv"), report))


def run_figures(run: Run) -> None:
    run_lens(run, "figures_lens")
    run_lattice(run, "figures_lattice")
    run_stability(run, "figures_stability")
    run_translate(run, "figures_translate")
    run_jump(run, "figures_jump")


RUNNERS = {"doe": run_doe, "lens": run_lens, "lattice": run_lattice, "translate": run_translate,
           "jump": run_jump, "dynamics": run_dynamics, "stability": run_stability, "figures": run_figures}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="latticescope", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=RUNNERS[name].__name__.replace("run_", "") + " artifacts")
        p.add_argument("--config", required=True, help="INI run configuration")
        p.add_argument("--out", help="output directory (default: [output] directory)")
        p.add_argument("--seed", type=int, help="random seed overriding [run] seed")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = cfgmod.parse_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative", key="seed")
            cfg["run"]["seed"] = args.seed
    except ConfigError as exc:
        print(f"latticescope: config error: {exc}", file=sys.stderr)
        return 2
    out = Path(args.out or cfg["output"]["directory"])
    run = Run(cfg, out)
    try:
        run.add(_io.atomic_write_text(run.path("resolved.cfg"), cfgmod.dump_config(cfg)))
        run.add(_io.atomic_write_text(run.path("config_reference.txt"), cfgmod.reference_text()))
        RUNNERS[args.command](run)
    except DomainError as exc:
        print(f"latticescope: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"latticescope: {exc}", file=sys.stderr)
        return 1
    finally:
        if run.written:
            run.write_manifest()
    return 0


if __name__ == "__main__":
    sys.exit(main())
