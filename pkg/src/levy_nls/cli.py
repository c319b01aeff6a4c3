"""Command-line driver.

Subcommands: simulate, ensemble, verify-hypotheses, truncation-study,
dt-study, dispersive-test, mild-residual.
Exit codes: 0 success, 1 config error, 2 numerical abort, 3 invariant or
statistical failure."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, config as cfgmod
from .analysis import BoundaryMassViolation
from .dynamics import BoundaryMassError, mild_residual, solve_truncated
from .grid import save_field
from .montecarlo import EnsembleConfig, dt_study, run_ensemble, truncation_study
from .noise import AmplitudeMeasure, AtomicMeasure, check_hypotheses, levy_constants
from .observables import CSV_COLUMNS, mass

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERIC = 2
EXIT_INVARIANT = 3


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="levy-nls")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in (
        "simulate",
        "ensemble",
        "verify-hypotheses",
        "truncation-study",
        "dt-study",
        "dispersive-test",
        "mild-residual",
    ):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
    args = parser.parse_args(argv)

    try:
        cfg = cfgmod.load_config(args.config)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.sections["ensemble"]["seed"] = args.seed
    if args.threads is not None:
        cfg.sections["ensemble"]["threads"] = args.threads
    if args.out is not None:
        cfg.sections["output"]["directory"] = args.out

    handler = {
        "simulate": cmd_simulate,
        "ensemble": cmd_ensemble,
        "verify-hypotheses": cmd_verify_hypotheses,
        "truncation-study": cmd_truncation_study,
        "dt-study": cmd_dt_study,
        "dispersive-test": cmd_dispersive,
        "mild-residual": cmd_mild_residual,
    }[args.command]
    try:
        return handler(cfg)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (BoundaryMassError, BoundaryMassViolation) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def _run_dir(cfg, command: str) -> Path:
    out = Path(cfg["output"]["directory"]) / f"{command}-{cfg.digest()}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "effective_config.toml").write_text(cfgmod.emit_toml(cfg.sections))
    return out


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _build_all(cfg):
    grid = cfgmod.build_grid(cfg)
    u0 = cfgmod.build_initial(cfg, grid)
    model = cfgmod.build_noise_model(cfg, grid)
    coeffs = cfgmod.build_coefficients(cfg)
    solver = cfgmod.build_solver(cfg)
    return grid, u0, model, coeffs, solver


def _mark_value_bound(model) -> float:
    if isinstance(model, AtomicMeasure):
        return max((z.sup_norm for _, z in model.atoms), default=1.0)
    if isinstance(model, AmplitudeMeasure):
        return max(model.a_max * model.base.sup_norm, 1e-12)
    return 1.0


def _write_series_csv(path: Path, series) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_COLUMNS)
        for row in series.csv_rows():
            writer.writerow([repr(float(v)) for v in row])


def cmd_simulate(cfg) -> int:
    _, u0, model, coeffs, solver = _build_all(cfg)
    out = _run_dir(cfg, "simulate")
    seed = cfg["ensemble"]["seed"]
    try:
        rec = solve_truncated(u0, model, coeffs, solver.truncation, (seed, 0), solver)
    except BoundaryMassError as exc:
        _write_json(out / "report.json", {"status": "aborted", "reason": str(exc)})
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if cfg["output"]["write_series"]:
        _write_series_csv(out / "series.csv", rec.series)
    for t in cfg["output"]["dump_fields_at"]:
        u = rec.field_at(float(t))
        save_field(u, out / f"field_t{float(t):.6f}.fld")
    _write_json(
        out / "report.json",
        {
            "status": "ok",
            "jumps": rec.path.count,
            "terminal_mass": mass(rec.terminal),
            "initial_mass": mass(u0),
            "run_directory": str(out),
        },
    )
    print(f"run directory: {out}")
    return EXIT_OK


def cmd_verify_hypotheses(cfg) -> int:
    grid = cfgmod.build_grid(cfg)
    model = cfgmod.build_noise_model(cfg, grid)
    coeffs = cfgmod.build_coefficients(cfg)
    out = _run_dir(cfg, "verify-hypotheses")
    bound = _mark_value_bound(model)
    report = check_hypotheses(coeffs, -bound, bound)
    c0, c1, c2, c3 = levy_constants(model)
    payload = {
        "family": coeffs.name,
        "growth": report.growth_ok,
        "pathwise_mass": report.pathwise_mass_ok,
        "mean_mass": report.mean_mass_ok,
        "worst": report.worst,
        "sample_range": list(report.sample_range),
        "levy_constants": {"C0": c0, "C1": c1, "C2": c2, "C3": c3},
    }
    _write_json(out / "hypotheses.json", payload)
    marks = {True: "ok", False: "FAIL"}
    print(f"{coeffs.name}: growth={marks[report.growth_ok]} "
          f"pathwise-mass={marks[report.pathwise_mass_ok]} "
          f"mean-mass={marks[report.mean_mass_ok]}")
    print(f"C0={c0:.6g} C1={c1:.6g} C2={c2:.6g} C3={c3:.6g}")
    required = cfg["coefficients"]["require"]
    ok = all(payload[{"growth": "growth", "pathwise_mass": "pathwise_mass", "mean_mass": "mean_mass"}[r]] for r in required)
    return EXIT_OK if ok else EXIT_INVARIANT


def _ensemble_config(cfg, u0, model, coeffs, solver) -> EnsembleConfig:
    ens = cfg["ensemble"]
    return EnsembleConfig(
        num_paths=ens["paths"],
        root_seed=ens["seed"],
        solver=solver,
        model=model,
        coeffs=coeffs,
        initial=u0,
        eps_levels=tuple(float(e) for e in ens["eps_levels"]),
        dt_levels=tuple(float(d) for d in ens["dt_levels"]),
        n_jobs=ens["threads"],
    )


def cmd_ensemble(cfg) -> int:
    _, u0, model, coeffs, solver = _build_all(cfg)
    out = _run_dir(cfg, "ensemble")
    ecfg = _ensemble_config(cfg, u0, model, coeffs, solver)
    summary = run_ensemble(ecfg)
    (out / "ensemble.json").write_text(summary.to_json() + "\n")

    m0 = mass(u0)
    checks = {}
    bound = _mark_value_bound(model)
    hyp = check_hypotheses(coeffs, -bound, bound)
    if hyp.pathwise_mass_ok:
        # pathwise conservation: terminal mass of every path
        drift = float(np.max(np.abs(summary.terminal_mass - m0)) / m0)
        checks["pathwise_mass_drift"] = drift
        checks["pathwise_mass_ok"] = drift <= 1e-10
    elif hyp.mean_mass_ok:
        dev = np.abs(summary.mean_mass - m0)
        ok = bool(np.all(dev <= 3.0 * np.maximum(summary.stderr_mass, 1e-300)))
        checks["mean_mass_ok"] = ok
        checks["max_mean_mass_sigma"] = float(
            np.max(dev / np.maximum(summary.stderr_mass, 1e-300))
        )
    _write_json(out / "checks.json", checks)
    print(f"run directory: {out}")
    if summary.partial:
        print("ensemble partial: some paths aborted", file=sys.stderr)
        return EXIT_NUMERIC
    if any(v is False for v in checks.values()):
        return EXIT_INVARIANT
    return EXIT_OK


def cmd_truncation_study(cfg) -> int:
    _, u0, model, coeffs, solver = _build_all(cfg)
    out = _run_dir(cfg, "truncation-study")
    ecfg = _ensemble_config(cfg, u0, model, coeffs, solver)
    report = truncation_study(ecfg)
    (out / "truncation.json").write_text(report.to_json() + "\n")
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_dt_study(cfg) -> int:
    _, u0, model, coeffs, solver = _build_all(cfg)
    out = _run_dir(cfg, "dt-study")
    ecfg = _ensemble_config(cfg, u0, model, coeffs, solver)
    report = dt_study(ecfg)
    (out / "dt.json").write_text(report.to_json() + "\n")
    print(report.to_json())
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_dispersive(cfg) -> int:
    grid = cfgmod.build_grid(cfg)
    phi = cfgmod.build_initial(cfg, grid)
    disp = cfg["dispersive"]
    times = np.geomspace(disp["t_min"], disp["t_max"], disp["t_count"])
    out = _run_dir(cfg, "dispersive-test")
    tol = disp["tolerance"]
    all_ok = True
    reports = []
    for raw_p in disp["p_values"]:
        p = math.inf if raw_p in ("inf", "Inf") else float(raw_p)
        rep = analysis.dispersive_decay_check(phi, p, times)
        if p == 2.0:
            ok = bool(np.max(np.abs(rep.ratios - 1.0)) <= 1e-11)
        else:
            ok = abs(rep.fitted_exponent - rep.theoretical_exponent) <= tol * abs(
                rep.theoretical_exponent
            )
        all_ok &= ok
        reports.append(json.loads(rep.to_json()) | {"passed": ok})
        print(
            f"p={raw_p}: fitted={rep.fitted_exponent:.4f} "
            f"theoretical={rep.theoretical_exponent:.4f} {'ok' if ok else 'FAIL'}"
        )
    _write_json(out / "dispersive.json", reports)
    return EXIT_OK if all_ok else EXIT_INVARIANT


def cmd_mild_residual(cfg) -> int:
    from dataclasses import replace

    _, u0, model, coeffs, solver = _build_all(cfg)
    out = _run_dir(cfg, "mild-residual")
    npaths = cfg["ensemble"]["paths"]
    seed = cfg["ensemble"]["seed"]
    residuals = {}
    for label, s in (("dt", solver), ("dt_half", replace(solver, dt=solver.dt / 2))):
        s = replace(s, record_stride=1, store_fields=True)
        vals = []
        for k in range(npaths):
            rec = solve_truncated(u0, model, coeffs, s.truncation, (seed, k), s)
            vals.append(mild_residual(rec, model, coeffs, s, s.horizon))
        residuals[label] = float(np.mean(vals))
    ratio = residuals["dt"] / residuals["dt_half"]
    ok = 1.5 <= ratio <= 2.5
    payload = residuals | {"ratio": ratio, "passed": ok}
    _write_json(out / "residual.json", payload)
    print(json.dumps(payload, sort_keys=True))
    return EXIT_OK if ok else EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
