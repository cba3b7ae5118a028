"""Command-line surface: validate / analyze / simulate / sweep.

Every command reads a JSON experiment config, writes byte-deterministic
artifacts under --out, and exits 0 on success, 1 on a domain failure
(assumption or verdict), 2 on usage/schema problems, and 3 when a numeric
guard refuses the problem size.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import GuardError, PlatoonMssError, SchemaError, UnsupportedModelError
from .montecarlo import ensemble_stats, simulate_run
from .moments import covariance_recursion
from .mss import mss_verdict, per_vehicle_conditions, sweep as run_sweep
from .lti import validate_vehicle_assumptions

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_USAGE = 2
EXIT_GUARD = 3


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def _jsonable(obj):
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(getattr(obj, k)) for k in obj.__dataclass_fields__}
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _write_text(path, text):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(x) for x in row) for row in rows]
    _write_text(path, "\n".join(lines) + "\n")


def _resolve_cases(cfg, args):
    if getattr(args, "all_cases", False):
        return [("", cfg)] + [(name, cfg.with_case(name)) for name in cfg.case_names]
    if getattr(args, "case", None):
        return [(args.case, cfg.with_case(args.case))]
    return [("", cfg)]


def _suffix(name):
    return f"_{name}" if name else ""


def cmd_validate(args):
    cfg = load_config(args.config)
    all_ok = True
    for case, c in _resolve_cases(cfg, args):
        specs = c.vehicle_specs()
        if case:
            print(f"[case {case}]")
        print(f"{'vehicle':>7}  {'T stable':>8}  {'T str.proper':>12}  "
              f"{'no unst.canc':>12}  {'dbl integr':>10}  {'|T|inf':>10}  result")
        for i, spec in enumerate(specs, start=1):
            rep = validate_vehicle_assumptions(spec.plant, spec.scaled_controller(), spec.headway)
            ok = rep.passed
            all_ok &= ok
            print(f"{i:>7}  {str(rep.t_stable):>8}  {str(rep.t_strictly_proper):>12}  "
                  f"{str(rep.no_unstable_cancellation):>12}  {str(rep.double_integrator):>10}  "
                  f"{rep.hinf_t:>10.6f}  {'pass' if ok else 'FAIL'}")
            for msg in rep.messages:
                print(f"         - {msg}")
    return EXIT_OK if all_ok else EXIT_DOMAIN


def _report_dict(report):
    data = {
        "rho_A": report.rho_A,
        "m11_at_one": report.m11_at_one,
        "m11_multiplicity": report.m11_multiplicity,
        "rho_kron": report.rho_kron,
        "m21_at_one": report.m21_at_one,
        "m21_multiplicity": report.m21_multiplicity,
        "mean_converges": report.mean_converges,
        "var_converges": report.var_converges,
        "mss": report.mss,
        "marginal": report.marginal,
        "stationary": report.stationary,
        "per_vehicle": report.per_vehicle,
    }
    return _jsonable(data)


def cmd_analyze(args):
    cfg = load_config(args.config)
    out = Path(args.out)
    worst = EXIT_OK
    for case, c in _resolve_cases(cfg, args):
        m0 = c.leader_profile().final_slope()
        tol = args.tol if args.tol is not None else c.data["analysis"]["tolerance"]
        try:
            report = mss_verdict(c.build_platoon(), m0=m0, tol=tol)
        except GuardError as exc:
            channel = c.channel_model()
            if not channel.is_independent:
                print(f"error: {exc}; reduce N or use independent channels", file=sys.stderr)
                return EXIT_GUARD
            from .strategies import build_vehicle_realization

            vehicles = [build_vehicle_realization(s) for s in c.vehicle_specs()]
            conditions, verdict = per_vehicle_conditions(vehicles, channel.p, tol=tol)
            data = {
                "per_vehicle_only": True,
                "reason": str(exc),
                "mss": verdict,
                "per_vehicle": conditions,
            }
            _write_text(out / f"report{_suffix(case)}.json",
                        json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")
            print(f"[{case or 'base'}] per-vehicle verdict: {'MSS' if verdict else 'not MSS'}")
            continue
        _write_text(out / f"report{_suffix(case)}.json",
                    json.dumps(_report_dict(report), indent=2, sort_keys=True) + "\n")
        label = case or "base"
        print(f"[{label}] rho(A)={report.rho_A:.6f} rho(kron)={report.rho_kron:.6f} "
              f"mean={'ok' if report.mean_converges else 'diverges'} "
              f"var={'ok' if report.var_converges else 'diverges'} "
              f"mss={report.mss} marginal={report.marginal}")
        if not report.mean_converges and np.any(report.m11_multiplicity == 0):
            print(f"[{label}] reason: M11 has no zero at z=1 in some row")
        if report.mss:
            sm = report.stationary
            print(f"[{label}] stationary |mean| max = "
                  f"{0.0 if sm.mean_zeta is None else float(np.max(np.abs(sm.mean_zeta))):.6g}")
    return worst


def cmd_simulate(args):
    cfg = load_config(args.config)
    out = Path(args.out)
    for case, c in _resolve_cases(cfg, args):
        sfx = _suffix(case)
        horizon = c.data["analysis"]["horizon"]
        runs = args.runs if args.runs is not None else c.data["simulation"]["runs"]
        seed = args.seed if args.seed is not None else c.data["simulation"]["seed"]
        leader = c.leader_profile()
        platoon = c.build_platoon()
        N = platoon.n_vehicles

        traj = covariance_recursion(platoon, leader, horizon, store_state=False)
        rows = [
            (k, i + 1, traj.mu_zeta[k, i], traj.P_zeta[k, i, i])
            for k in range(horizon + 1)
            for i in range(N)
        ]
        _write_csv(out / f"moments{sfx}.csv", ["k", "vehicle", "mean", "var"], rows)

        for j in range(c.data["simulation"]["dump_runs"]):
            from .montecarlo import run_seed

            run = simulate_run(platoon, leader, horizon, seed=run_seed(seed, j))
            rows = [
                (k, i + 1, run.y[k, i], run.zeta[k, i])
                for k in range(horizon + 1)
                for i in range(N)
            ]
            _write_csv(out / f"run{sfx}_{j:04d}.csv", ["k", "vehicle", "y", "zeta"], rows)

        if runs < 2:
            run = simulate_run(platoon, leader, horizon, seed=np.random.SeedSequence(seed))
            rows = [
                (k, i + 1, run.zeta[k, i], 0.0, 0.0)
                for k in range(horizon + 1)
                for i in range(N)
            ]
            _write_csv(out / f"ensemble{sfx}.csv", ["k", "vehicle", "mean", "var", "se_mean"], rows)
            _write_text(out / f"agreement{sfx}.txt",
                        "agreement skipped: need at least 2 runs for standard errors\n")
            print(f"[{case or 'base'}] single run written; agreement skipped")
            continue

        stats = ensemble_stats(platoon, leader, horizon, runs, seed)
        rows = [
            (k, i + 1, stats.mean[k, i], stats.var[k, i], stats.se_mean[k, i])
            for k in range(horizon + 1)
            for i in range(N)
        ]
        _write_csv(out / f"ensemble{sfx}.csv", ["k", "vehicle", "mean", "var", "se_mean"], rows)
        diff = np.abs(stats.mean - traj.mu_zeta)
        # floating-point floor: once the true variance is zero the 4-SE band
        # falls below the rounding noise of position-scale cancellations
        floor = 1e-10 * max(1.0, float(np.max(np.abs(leader.positions(horizon)))))
        band = 4.0 * stats.se_mean + floor
        frac = float(np.mean(diff <= band))
        _write_text(
            out / f"agreement{sfx}.txt",
            f"runs = {runs}\nseed = {seed}\n"
            f"fraction of (k, vehicle) points with |empirical - analytic| <= 4 SE: {frac:.6f}\n",
        )
        print(f"[{case or 'base'}] ensemble of {runs} runs done; 4-SE agreement = {frac:.4f}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = load_config(args.config)
    out = Path(args.out)
    make_platoon, grids = cfg.sweep_platoon_factory()
    tol = args.tol if args.tol is not None else cfg.data["analysis"]["tolerance"]
    total = int(np.prod([len(g) for g in grids]))
    print(f"sweeping {total} grid points...", file=sys.stderr)
    rows = run_sweep(make_platoon, grids, tol=tol)
    table = []
    for r in rows:
        p1 = r.p[0]
        p2 = r.p[1] if len(r.p) > 1 else r.p[0]
        table.append((p1, p2, r.rho_A, r.rho_kron, r.m11_norm, r.m21_norm,
                      r.mean_ok, r.var_ok, r.mss, r.marginal))
    _write_csv(
        out / "sweep.csv",
        ["p1", "p2", "rho_A", "rho_kron", "m11_norm", "m21_norm",
         "mean_ok", "var_ok", "mss", "marginal"],
        table,
    )
    print(f"sweep.csv written with {len(table)} rows")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="platoon-mss",
        description="Stochastic stability analysis of vehicle platoons over lossy links",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in (
        ("validate", cmd_validate),
        ("analyze", cmd_analyze),
        ("simulate", cmd_simulate),
        ("sweep", cmd_sweep),
    ):
        p = sub.add_parser(name)
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--tol", type=float, default=None, help="zero-test tolerance override")
        p.add_argument("--case", default=None, help="run a named case override")
        if name in ("validate", "analyze", "simulate"):
            p.add_argument("--all-cases", action="store_true", help="run base config plus every case")
        if name == "simulate":
            p.add_argument("--seed", type=int, default=None, help="ensemble base seed override")
            p.add_argument("--runs", type=int, default=None, help="ensemble size override")
        p.set_defaults(fn=fn)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except SchemaError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GuardError,) as exc:
        print(f"guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except UnsupportedModelError as exc:
        print(f"unsupported: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PlatoonMssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
