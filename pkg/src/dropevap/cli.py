"""Command-line front end: ``dropevap {simulate,validate-d2law,verify,sweep,convergence}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import kernels
from .config import ConfigError, RunConfig, flow_param, load_config, load_sweep, parse_config
from .discretization import SolveError
from .flowfields import describe
from .geometry import build_grid
from .oracle import d2_law, fit_r2_slope, harmonic_convergence
from .physics import PhysicsError
from .timeloop import ConvergenceError, InvariantViolation, run

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_INVARIANT = 0, 1, 2, 3

RADIUS_HEADER = ["t_s", "R_m", "R2_norm", "J_avg", "T_min", "T_max", "rho_min", "rho_max",
                 "newton_iters"]
FIELD_HEADER = ["theta_rad", "r_rescaled", "T_C", "rho_kgm3"]
SWEEP_HEADER = ["label", "flow", "param", "lifetime_s", "lifetime_ratio_vs_stagnant"]


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def write_radius_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RADIUS_HEADER)
        for r in records:
            w.writerow([_fmt(r[k]) for k in RADIUS_HEADER])


def write_fields_csv(path, grid, state) -> None:
    th, r = grid.centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FIELD_HEADER)
        for a, b, T, rho in zip(th.ravel(), r.ravel(), state.T.values.ravel(),
                                state.rho.values.ravel()):
            w.writerow([_fmt(a), _fmt(b), _fmt(T), _fmt(rho)])


def derived_summary(cfg: RunConfig, drying) -> dict:
    return {
        "R0_m" if not cfg.nondimensional else "R0": cfg.R0,
        "T_star_C": drying.T_star,
        "rho_inf_kg_m3": drying.rho_inf,
        "rho_star_kg_m3": drying.rho_star,
        "L_kg_m3_K": drying.L,
        "C_hk_m_per_s": drying.C_hk,
        "J_inf_kg_m2_s": drying.J_inf,
        "max_radius_rate_m_per_s": drying.J_inf / cfg.material.rho_d,
    }


def simulate(cfg: RunConfig, out_dir=None, snapshots: int | None = None, seedless: bool = False):
    """Run one configuration and write radius.csv, optional snapshots and run_meta.json."""
    out = Path(out_dir or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    every = cfg.snapshots_every if snapshots is None else snapshots
    cfg = replace(cfg, output_dir=str(out), snapshots_every=every)
    drying = cfg.build_drying()
    model = cfg.build_model()
    grid = cfg.build_grid()
    tr = run(cfg.solver, cfg.material, model, drying, grid, cfg.R0, keep_states=every or False)
    write_radius_csv(out / "radius.csv", tr.records)
    if every:
        for st in tr.states:
            write_fields_csv(out / f"fields_{st.step}.csv", grid, st)
    meta = {
        "config": cfg.to_dict(),
        "derived": derived_summary(cfg, drying),
        "flow": describe(model),
        "result": {"steps": len(tr.records) - 1, "extinct": tr.extinct,
                   "lifetime_s": tr.lifetime, "final_R_m": tr.records[-1]["R_m"]},
        "audit": tr.audit,
        "kernel_backend": kernels.BACKEND,
        "rng": "none" if seedless else "unused",
    }
    (out / "run_meta.json").write_text(json.dumps(_jsonable(meta), indent=2) + "\n")
    return tr, meta


def validate_d2law(cfg: RunConfig, out_dir=None, tol: float = 0.05, fit_frac: float = 0.8):
    cfg = replace(cfg, flow={"kind": "stagnant"})
    tr, _ = simulate(cfg, out_dir)
    drying = cfg.build_drying()
    law = d2_law(cfg.material, drying, cfg.R0)
    t = tr.column("t_s")
    R2 = tr.column("R_m") ** 2
    horizon = tr.lifetime if math.isfinite(tr.lifetime) else t[-1]
    slope = fit_r2_slope(t, R2, fit_frac * horizon)
    if law.slope == 0.0:
        rel = abs(slope) / (cfg.R0**2)
    else:
        rel = abs(slope - law.slope) / abs(law.slope)
    faster = (not math.isfinite(law.lifetime)) or (math.isfinite(tr.lifetime) and tr.lifetime <= law.lifetime)
    if law.slope == 0.0:
        faster = True
    report = {"T_d_C": law.T_d, "oracle_slope_m2_s": law.slope, "sim_slope_m2_s": slope,
              "rel_error": rel, "oracle_lifetime_s": law.lifetime, "sim_lifetime_s": tr.lifetime,
              "tolerance": tol, "passed": bool(rel <= tol and faster)}
    return report


def _sweep_job(args):
    doc, label = args
    cfg = parse_config(doc)
    kind, param = flow_param(cfg.flow)
    try:
        tr = run(cfg.solver, cfg.material, cfg.build_model(), cfg.build_drying(), cfg.build_grid(),
                 cfg.R0)
        life = tr.lifetime if tr.extinct else math.nan
        return {"label": label, "flow": kind, "param": param, "lifetime_s": life, "error": None}
    except Exception as exc:  # recorded per row; the sweep continues
        return {"label": label, "flow": kind, "param": param, "lifetime_s": math.nan,
                "error": f"{type(exc).__name__}: {exc}"}


def sweep_orderings(rows) -> list[dict]:
    """Qualitative lifetime orderings between the stagnant, Stokes and acoustic members."""
    def life(kind, param=None):
        for r in rows:
            if r["flow"] == kind and (param is None or abs(r["param"] - param) < 1e-9):
                return r["lifetime_s"]
        return None

    checks = []
    stag, s40, s80 = life("stagnant"), life("stokes", 0.4), life("stokes", 0.8)
    ac166 = life("acoustic", 166.0)
    if None not in (stag, s40, s80):
        checks.append({"check": "stagnant > stokes_0.4 > stokes_0.8", "passed": bool(stag > s40 > s80)})
    if None not in (stag, s80):
        q = s80 / stag
        checks.append({"check": "stokes_0.8 / stagnant in [0.4, 0.7]", "value": q,
                       "passed": bool(0.4 <= q <= 0.7)})
    if None not in (s80, ac166):
        q = abs(ac166 - s80) / s80
        checks.append({"check": "|acoustic_166 - stokes_0.8| / stokes_0.8 <= 0.25", "value": q,
                       "passed": bool(q <= 0.25)})
    return checks


def sweep(base: RunConfig, members, out_dir=None, jobs: int | None = None):
    out = Path(out_dir or base.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    docs = []
    for m in members:
        d = base.to_dict()
        d["flow"] = m["flow"]
        docs.append((d, m["label"]))
    jobs = jobs or os.cpu_count() or 1
    if jobs > 1 and len(docs) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(docs))) as ex:
            rows = list(ex.map(_sweep_job, docs))
    else:
        rows = [_sweep_job(d) for d in docs]
    stag = next((r["lifetime_s"] for r in rows if r["flow"] == "stagnant"), math.nan)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            ratio = r["lifetime_s"] / stag if stag and math.isfinite(stag) else math.nan
            r["lifetime_ratio_vs_stagnant"] = ratio
            w.writerow([r["label"], r["flow"], _fmt(r["param"]), _fmt(r["lifetime_s"]), _fmt(ratio)])
    checks = sweep_orderings(rows)
    report = {"members": rows, "orderings": checks}
    (out / "sweep_report.json").write_text(json.dumps(_jsonable(report), indent=2) + "\n")
    return rows, checks


def convergence_table(levels: int = 4, d2: bool = True, cfg: RunConfig | None = None,
                      echo=print) -> dict:
    rows = harmonic_convergence(levels=levels)
    echo("manufactured a + b/r, steady diffusion with exact boundary data")
    echo(f"{'level':>5} {'n_r':>6} {'stretch':>10} {'max_error':>12} {'order':>7}")
    for r in rows:
        o = "" if r["order"] is None else f"{r['order']:.3f}"
        echo(f"{r['level']:>5} {r['n_r']:>6} {r['stretch']:>10.6f} {r['error']:>12.4e} {o:>7}")
    out = {"harmonic": rows}
    if d2:
        cfg = cfg or RunConfig()
        cfg = replace(cfg, flow={"kind": "stagnant"})
        law = d2_law(cfg.material, cfg.build_drying(), cfg.R0)
        g0 = cfg.grid
        variants = [
            ("coarse grid", dict(g0, n_theta=g0["n_theta"] // 2, n_r=g0["n_r"] // 2,
                                 stretch=g0["stretch"] ** 2), cfg.solver.dt),
            ("base", dict(g0), cfg.solver.dt),
            ("base, dt/2", dict(g0), cfg.solver.dt / 2),
        ]
        echo("d2-law slope against grid and time step")
        echo(f"{'variant':>12} {'grid':>9} {'dt_s':>6} {'slope_m2_s':>12} {'rel_error':>10}")
        d2rows = []
        for name, g, dt in variants:
            grid = build_grid(**g)
            tr = run(replace(cfg.solver, dt=dt), cfg.material, cfg.build_model(), cfg.build_drying(),
                     grid, cfg.R0)
            t, R2 = tr.column("t_s"), tr.column("R_m") ** 2
            slope = fit_r2_slope(t, R2, 0.8 * tr.lifetime)
            rel = abs(slope - law.slope) / abs(law.slope)
            d2rows.append({"variant": name, "grid": g, "dt_s": dt, "slope": slope, "rel_error": rel})
            echo(f"{name:>12} {g['n_theta']:>4}x{g['n_r']:<4} {dt:>6.2f} {slope:>12.4e} {rel:>10.4f}")
        out["d2"] = d2rows
    return out


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dropevap", description="single-droplet evaporation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=False):
        sp.add_argument("--config", required=config_required, help="JSON config file")
        sp.add_argument("--out", help="output directory (overrides output.dir)")
        sp.add_argument("--seedless", action="store_true",
                        help="assert that no random numbers are used (none ever are)")
        sp.add_argument("-v", "--verbose", action="store_true")

    s = sub.add_parser("simulate", help="run one configuration")
    common(s)
    s.add_argument("--snapshots", type=int, default=None, metavar="N",
                   help="write fields_<step>.csv every N steps")
    s = sub.add_parser("validate-d2law", help="compare a stagnant run with the d2-law")
    common(s)
    s.add_argument("--tol", type=float, default=0.05)
    s = sub.add_parser("verify", help="run the property suite")
    s.add_argument("--only", action="append", help="run only the named check (repeatable)")
    s.add_argument("--seedless", action="store_true")
    s.add_argument("-v", "--verbose", action="store_true")
    s = sub.add_parser("sweep", help="run flow variants and compare lifetimes")
    common(s)
    s.add_argument("--jobs", type=int, default=None)
    s = sub.add_parser("convergence", help="refinement tables")
    common(s)
    s.add_argument("--levels", type=int, default=4)
    s.add_argument("--no-d2", action="store_true", help="skip the d2-law slope table")
    return p


def _load(args) -> RunConfig:
    return load_config(args.config) if args.config else RunConfig()


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            tr, meta = simulate(_load(args), args.out, args.snapshots, args.seedless)
            res = meta["result"]
            print(f"steps={res['steps']} extinct={res['extinct']} lifetime_s={res['lifetime_s']} "
                  f"final_R_m={res['final_R_m']:.6e}")
            return EXIT_OK
        if args.command == "validate-d2law":
            rep = validate_d2law(_load(args), args.out, args.tol)
            print(f"{'PASS' if rep['passed'] else 'FAIL'} d2-law slope rel_error={rep['rel_error']:.4f} "
                  f"(tol {rep['tolerance']}) T_d={rep['T_d_C']:.3f}C "
                  f"lifetime sim={rep['sim_lifetime_s']:.2f}s oracle={rep['oracle_lifetime_s']:.2f}s")
            return EXIT_OK if rep["passed"] else EXIT_INVARIANT
        if args.command == "verify":
            from .verify import run_suite

            results = run_suite(args.only)
            failed = [r for r in results if not r.passed]
            total = sum(r.seconds for r in results)
            if failed:
                print(f"FAIL {len(failed)}/{len(results)} checks; first failure: {failed[0].name}")
                return EXIT_INVARIANT
            print(f"PASS {len(results)} checks in {total:.2f}s")
            return EXIT_OK
        if args.command == "sweep":
            if args.config:
                base, members = load_sweep(args.config)
            else:
                from .config import sweep_members
                base, members = RunConfig(), sweep_members()
            rows, checks = sweep(base, members, args.out, args.jobs)
            for r in rows:
                status = "" if r["error"] is None else f" ERROR {r['error']}"
                print(f"{r['label']}: lifetime_s={r['lifetime_s']:.2f} "
                      f"ratio={r['lifetime_ratio_vs_stagnant']:.3f}{status}")
            for c in checks:
                print(f"{'PASS' if c['passed'] else 'FAIL'} {c['check']}"
                      + (f" ({c['value']:.3f})" if "value" in c else ""))
            return EXIT_OK if all(c["passed"] for c in checks) else EXIT_INVARIANT
        if args.command == "convergence":
            res = convergence_table(args.levels, not args.no_d2, _load(args))
            if args.out:
                Path(args.out).mkdir(parents=True, exist_ok=True)
                (Path(args.out) / "convergence.json").write_text(
                    json.dumps(_jsonable(res), indent=2) + "\n")
            return EXIT_OK
    except (ConfigError, PhysicsError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, SolveError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
