"""Command-line entry point.

Every subcommand writes plot-ready CSV, a JSON metadata sidecar and the
fully resolved configuration into the output directory.  Outputs depend
only on the configuration and seed, never on the worker count.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .calibration import align_rows, shear_to_epsilon, synthetic_raw_scan
from .config import AUTO, load_config
from .errors import NumericalError, SpinPatError, ValidationError
from .fitting import (delta_eps_plus_zero, fit_g_factor, fit_relaxation_rate, fit_tc_b0,
                      synthetic_series)
from .hamiltonian import level_diagram, st_plus_anticrossing_detuning
from .io import (read_peak_series, read_raw_scan, read_relaxation, write_calibrated, write_csv,
                 write_json, write_peak_series, write_raw_scan)
from .mechanisms import (DotGeometry, HyperfineParams, SOCouplingParams, field_angle_factor,
                         matrix_element_ratio, rate_ratio_main_text, so_direction_vector,
                         t_nuc_rms, t_so_magnitude)
from .spectra import locate_peaks, relaxation_decay_signal, resolve_threads, scan_spectrum

log = logging.getLogger("spinpat")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def rng_for(seed, stream=0):
    """Counter-based generator; each (seed, stream) pair is an independent stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def _prepare_out(cfg, out, command, extra=None):
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.resolved.ini"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(cfg.resolved_text())
    meta = {"command": command, "version": __version__, "seed": cfg.seed}
    meta.update(extra or {})
    return meta


def cmd_levels(cfg, args):
    cfg.require("levels")
    s = cfg.section("levels")
    dev = cfg.device()
    diag = level_diagram(dev, s["B"], (s["epsilon_min"], s["epsilon_max"]), s["n_points"])
    header = ["epsilon_ueV"] + [f"E{k}_ueV" for k in range(1, 6)] + [f"char{k}" for k in range(1, 6)]
    rows = [[e, *en, *lab] for e, en, lab in zip(diag.epsilon, diag.energies, diag.labels)]
    write_csv(os.path.join(args.out, "levels.csv"), header, rows)
    meta = _prepare_out(cfg, args.out, "levels", {"B_T": s["B"]})
    try:
        meta["st_plus_crossing_ueV"] = st_plus_anticrossing_detuning(dev, s["B"])
    except SpinPatError:
        meta["st_plus_crossing_ueV"] = None
    write_json(os.path.join(args.out, "levels.meta.json"), meta)


def cmd_spectrum(cfg, args):
    spec = cfg.scan()
    threads = args.threads if args.threads is not None else cfg.threads
    grid = scan_spectrum(spec, threads=resolve_threads(None if threads == AUTO else threads))
    axis_col = "B_T" if spec.axis == "B" else "omega_ueV"
    rows = []
    for i, a in enumerate(grid.axis_values):
        for j, e in enumerate(grid.epsilon):
            rows.append((a, e, grid.delta_n[i, j]))
    write_csv(os.path.join(args.out, "spectrum.csv"), (axis_col, "epsilon_ueV", "delta_n"), rows)
    meta = _prepare_out(cfg, args.out, "spectrum", grid.metadata)
    meta["failures"] = [list(f) for f in grid.failures]
    write_json(os.path.join(args.out, "spectrum.meta.json"), meta)
    if cfg.section("scan")["locate_peaks"]:
        prow = []
        for i in range(grid.axis_values.size):
            try:
                peaks = locate_peaks(grid, i)
            except NumericalError as exc:
                log.warning("row %d: %s", i, exc)
                continue
            prow.extend((p.axis, p.center, p.height, p.width) for p in peaks)
        write_csv(os.path.join(args.out, "peaks.csv"), ("axis", "center_ueV", "height", "fwhm_ueV"), prow)


def cmd_calibrate(cfg, args):
    cfg.require("calibrate")
    if not args.input:
        raise ValidationError("calibrate needs --input RAW_CSV")
    c = cfg.section("calibration")
    lever = cfg.lever_arm()
    raw = read_raw_scan(args.input, c["pulse_mV"])
    dev = cfg.device()
    cal = align_rows(raw, lever, dev,
                     first_guess_mV=None if c["first_guess_mV"] == AUTO else c["first_guess_mV"],
                     half_width_mV=None if c["half_width_mV"] == AUTO else c["half_width_mV"])
    mode = args.mode or "exact"
    if mode != "none":
        cal = shear_to_epsilon(cal, dev, mode)
    write_calibrated(os.path.join(args.out, "calibrated.csv"), cal)
    meta = _prepare_out(cfg, args.out, "calibrate", {
        "mode": mode, "scale": cal.scale_tag, "lever_arm_ueV_per_mV": lever.alpha,
        "dropped_rows_B_T": cal.dropped, "row_shifts_ueV": dict(zip(map(repr, cal.B.tolist()), cal.shifts)),
    })
    write_json(os.path.join(args.out, "calibrated.meta.json"), meta)


def _fit_report(path, result, extra=()):
    lines = list(extra) + result.report_lines()
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def cmd_fit(cfg, args):
    if not args.input:
        raise ValidationError("fit needs --input CSV")
    f = cfg.section("fit")
    which = args.which
    if which == "relax":
        tau, sig, sigma = read_relaxation(args.input)
        result = fit_relaxation_rate(tau, sig, sigma, resolution=f["resolution"])
    else:
        series = read_peak_series(args.input, f["nu"])
        if which == "g":
            plus = [s for s in series if s.kind == "plus"]
            if len(plus) != 1:
                raise ValidationError("g fit needs exactly one 'plus' series")
            result = fit_g_factor(plus[0])
        elif which == "tcb0":
            prime = [s for s in series if s.kind == "prime"]
            if len(prime) != 1:
                raise ValidationError("t_c/b0 fit needs exactly one 'prime' series")
            result = fit_tc_b0(prime[0], f["g_abs"], starts=f["starts"], seed=cfg.seed)
        else:
            plus = [s for s in series if s.kind == "plus"]
            if not plus:
                raise ValidationError("remanence fit needs 'plus' series")
            result = delta_eps_plus_zero(plus, cfg.device())
    _prepare_out(cfg, args.out, "fit")
    _fit_report(os.path.join(args.out, f"fit_{which}.txt"), result, [f"fit = {which}"])
    rows = [(k, v, result.uncertainties.get(k, float("nan"))) for k, v in result.params.items()]
    write_csv(os.path.join(args.out, f"fit_{which}.csv"), ("param", "value", "sigma"), rows)


def cmd_mechanism(cfg, args):
    m = cfg.section("mechanism")
    so_w = SOCouplingParams.from_weights(m["alpha"], m["beta"], 1.0)
    hf = HyperfineParams(m["A_ueV"], m["N"])
    rows = []
    for sigma in m["sigma_nm"]:
        for a in m["a_nm"]:
            for lam in m["lambda_so_um"]:
                for theta in m["theta_rad"]:
                    geom = DotGeometry(sigma=sigma, a=a, theta=theta)
                    so = SOCouplingParams(so_w.alpha, so_w.beta, lam)
                    n_z, n_y = so_direction_vector(theta, so.alpha, so.beta)
                    af = field_angle_factor([0.0, n_y, n_z], m["field_direction"])
                    rows.append((sigma, a, lam, theta, geom.delta_orbital, t_so_magnitude(geom, so),
                                 t_nuc_rms(geom, hf), af, matrix_element_ratio(geom, so, hf, af)))
    header = ("sigma_nm", "a_nm", "lambda_so_um", "theta_rad", "delta_orbital_ueV", "t_so_ueV",
              "t_nuc_ueV", "angle_factor", "ratio")
    write_csv(os.path.join(args.out, "mechanism.csv"), header, rows)
    main = rate_ratio_main_text(m["E0_ueV"], m["N"], m["A_ueV"], m["d_nm"], m["lambda_so_um"][0])
    ref = matrix_element_ratio(DotGeometry.from_orbital_spacing(m["E0_ueV"], m["d_nm"]),
                               SOCouplingParams(so_w.alpha, so_w.beta, m["lambda_so_um"][0]), hf, 1.5)
    meta = _prepare_out(cfg, args.out, "mechanism", {
        "main_text_expression": main.expression, "main_text_square": main.square, "note": main.note,
        "max_angle_ratio_at_E0": ref,
    })
    write_json(os.path.join(args.out, "mechanism.meta.json"), meta)


def cmd_synth(cfg, args):
    s = cfg.section("synth")
    rng = rng_for(cfg.seed)
    dev = cfg.device()
    kind = s["kind"]
    if kind in ("plus", "minus", "prime"):
        B = np.linspace(s["B_min"], s["B_max"], s["count"])
        series = synthetic_series(kind, B, s["nu"], dev, s["noise"], rng, s["scenario"])
        write_peak_series(os.path.join(args.out, "synth_peaks.csv"), [series])
    elif kind == "relax":
        tau = np.asarray(s["tau_ns"])
        sig = relaxation_decay_signal(s["gamma_s"], tau) + (rng.normal(0, s["noise"], tau.size) if s["noise"] > 0 else 0)
        rows = [(t, v, s["noise"] if s["noise"] > 0 else "") for t, v in zip(tau, np.atleast_1d(sig))]
        write_csv(os.path.join(args.out, "synth_relax.csv"), ("tau_ns", "signal", "sigma"), rows)
    elif kind == "raw":
        cfg.require("calibrate")
        c = cfg.section("calibration")
        lever = cfg.lever_arm()
        B = np.linspace(s["B_min"], s["B_max"], s["count"])
        drift = np.cumsum(rng.normal(0.0, 0.02, B.size))
        gate = np.linspace(-2.0, 5.0, 701)
        eps0 = float(np.sqrt(max((lever.alpha * c["sideband_spacing_mV"]) ** 2 - 4 * dev.t_c ** 2, 0.0)))
        raw = synthetic_raw_scan(dev, B, lever, c["pulse_mV"], gate, drift,
                                 lines=[(lambda b: eps0, 0.5, 4.0)], noise=s["noise"], rng=rng)
        write_raw_scan(os.path.join(args.out, "synth_raw.csv"), raw)
    else:
        raise ValidationError(f"unknown synth kind {kind!r}")
    meta = _prepare_out(cfg, args.out, "synth", {"kind": kind})
    write_json(os.path.join(args.out, "synth.meta.json"), meta)


COMMANDS = {
    "levels": cmd_levels, "spectrum": cmd_spectrum, "calibrate": cmd_calibrate,
    "fit": cmd_fit, "mechanism": cmd_mechanism, "synth": cmd_synth,
}


def build_parser():
    p = argparse.ArgumentParser(prog="spinpat", description="Spin-flip PAT spectra: simulation and analysis.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="INI configuration file")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--seed", type=int, help="overrides [run] seed")
        sp.add_argument("--threads", help="worker processes, integer or 'auto'")
        sp.add_argument("-v", "--verbose", action="store_true")
        if name in ("calibrate", "fit"):
            sp.add_argument("--input", help="input CSV")
        if name == "calibrate":
            sp.add_argument("--mode", choices=("paper_faithful", "exact", "none"))
        if name == "fit":
            sp.add_argument("--which", choices=("g", "tcb0", "remanence", "relax"), required=True)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides[("run", "seed")] = str(args.seed)
    if args.threads is not None:
        overrides[("run", "threads")] = args.threads
    try:
        cfg = load_config(args.config, overrides)
        args.threads = None  # folded into the config above
        os.makedirs(args.out, exist_ok=True)
        COMMANDS[args.command](cfg, args)
    except (ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
