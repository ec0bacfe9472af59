"""Command line: ``etcoord run | verify | sweep``.

Exit codes: 0 success, 1 a mandatory check failed, 2 invalid scenario,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, report
from .graph import consensus_rate_constants
from .scenario import ScenarioError, apply_overrides, default_scenario_path, get_key, load_scenario
from .sim import (ConnectivityError, ConsensusTrace, NumericalError, check_connectivity,
                  run_consensus_reference, run_scenario)

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2, 3


def _simulate_and_write(cfg, out_dir: Path):
    trace = run_scenario(cfg)
    summary, bounds, checks = report.evaluate_run(cfg, trace)
    out_dir.mkdir(parents=True, exist_ok=True)
    report.write_trace_csv(trace, out_dir / "trace.csv")
    report.write_events_csv(trace, out_dir / "events.csv")
    doc = summary.to_dict()
    doc["bounds"] = report.bound_report(bounds, checks)
    report.write_json(doc, out_dir / "summary.json")
    return summary, checks


def cmd_run(scenario_path, out_dir, overrides=()) -> int:
    try:
        cfg = load_scenario(scenario_path, overrides)
        summary, checks = _simulate_and_write(cfg, Path(out_dir))
    except (ScenarioError, ConnectivityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for c in checks:
        print(c.line())
    print(f"wrote {out_dir}/trace.csv, events.csv, summary.json "
          f"({summary.total_events} events)")
    return EXIT_OK if summary.pf_certificate else EXIT_CHECK


def cmd_verify(scenario_path, overrides=(), n_consensus: int = 20) -> int:
    try:
        cfg = load_scenario(scenario_path, overrides)
        failing, windows = check_connectivity(cfg)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    ok = True
    print(f"integral connectivity: T={cfg.qos_T:g}, delta={cfg.qos_delta:g}, "
          f"{len(windows)} window(s)")
    for w in windows:
        roots = ",".join(str(r) for r in sorted(w.roots)) or "-"
        print(f"  [{'PASS' if w.holds else 'FAIL'}] window [{w.t_start:g}, "
              f"{w.t_start + cfg.qos_T:g}] roots={roots}")
    if failing:
        print(f"[FAIL] integral_connectivity: first failing window starts at t={failing[0].t_start:g}")
        return EXIT_CHECK
    print("[PASS] integral_connectivity")
    if cfg.n < 2:
        return EXIT_OK

    cr = consensus_rate_constants(cfg.gains.a, cfg.gains.b, cfg.qos_delta, cfg.qos_T, cfg.n)
    print(f"consensus constants: delta'={cr.delta_prime:.6g} k={cr.k:.17g} lambda={cr.lam:.6g}")
    rng = np.random.default_rng(cfg.seed)
    ct = run_consensus_reference(cfg.schedule, cfg.gains.a, cfg.gains.b,
                                 rng.uniform(-1, 1, (n_consensus, cfg.n)), cfg.dt, 10.0)
    violations = sum(not analysis.check_consensus_envelope(
        ConsensusTrace(ct.t, ct.x[:, m]), cr.k, cr.lam).holds for m in range(n_consensus))
    line = analysis.Check("consensus_envelope", violations == 0, None, None,
                          f"{violations}/{n_consensus} runs violated")
    print(line.line())
    ok &= line.holds

    try:
        trace = run_scenario(cfg)
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    summary, bounds, checks = report.evaluate_run(cfg, trace)
    print(f"lambda_TC={bounds.lambda_tc:.6g} kappa1={bounds.kappa1:.6g} "
          f"kappa2={bounds.kappa2:.6g} u_bar={bounds.u_bar:.6g} "
          f"min_interevent={bounds.min_interevent:.6g}")
    try:
        t_hi = min(8.0, float(trace.t[trace.mission_mask()][-1]))
        lam_hat = f"{analysis.fit_decay_rate(trace.t, trace.xi_norm, window=(1.0, t_hi)):.3g}"
    except analysis.FitError:
        lam_hat = "n/a"
    gap = summary.min_interevent_gap
    print(f"observed: decay rate of ||xi|| on [1, {t_hi:g}] s = {lam_hat}, "
          f"min inter-event gap = {'n/a' if gap is None else f'{gap:.3g}'} s")
    for note in bounds.notes:
        print(f"  note: {note}")
    for c in checks:
        print(c.line())
        ok &= c.holds
    return EXIT_OK if ok else EXIT_CHECK


def _sweep_one(args):
    scenario_path, overrides, param, value, out_dir = args
    cfg = load_scenario(scenario_path, list(overrides) + [(param, value)])
    summary, _ = _simulate_and_write(cfg, Path(out_dir))
    return value, summary.to_dict(), cfg.n


def cmd_sweep(scenario_path, param, values, out_dir, overrides=(), jobs: int = 1) -> int:
    out_dir = Path(out_dir)
    try:
        base = apply_overrides(json.loads(Path(scenario_path).read_text()), overrides)
        current = get_key(base, param)
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise ScenarioError(f"sweep target {param!r} is not numeric")
        values = [float(v) for v in values]
        if isinstance(current, int):
            values = [int(v) if v.is_integer() else v for v in values]
        load_scenario(scenario_path, overrides)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    tasks = [(scenario_path, tuple(overrides), param, v, out_dir / f"{param}={v:g}")
             for v in values]
    try:
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_one, tasks))
        else:
            results = [_sweep_one(t) for t in tasks]
    except (ScenarioError, ConnectivityError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC

    out_dir.mkdir(parents=True, exist_ok=True)
    n = results[0][2]
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([param, "total_events"] + [f"events_{i}" for i in range(1, n + 1)]
                   + ["final_max_gamma_spread", "final_max_rate_error", "arrival_spread",
                      "min_interevent_gap", "max_abs_estimation_error"])
        for value, s, _ in results:
            w.writerow([f"{value:.17g}", s["total_events"], *s["events_per_agent"],
                        _fmt(s["final_max_gamma_spread"]), _fmt(s["final_max_rate_error"]),
                        _fmt(s["arrival_spread"]), _fmt(s["min_interevent_gap"]),
                        _fmt(s["max_abs_estimation_error"])])
    for value, s, _ in results:
        print(f"{param}={value:g}: total_events={s['total_events']} "
              f"final_spread={s['final_max_gamma_spread']:.3g}")
    print(f"wrote {out_dir / 'sweep.csv'}")
    return EXIT_OK


def _fmt(v):
    return "" if v is None else f"{v:.17g}"


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="etcoord", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", default=str(default_scenario_path()),
                        help="scenario JSON (default: bundled default.json)")
        sp.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a scenario field (repeatable)")

    run = sub.add_parser("run", help="simulate and write trace.csv, events.csv, summary.json")
    common(run)
    run.add_argument("--out", default="out")

    ver = sub.add_parser("verify", help="check connectivity and theoretical bounds")
    common(ver)

    sw = sub.add_parser("sweep", help="run once per value of a numeric field")
    common(sw)
    sw.add_argument("--param", required=True)
    sw.add_argument("--values", required=True, nargs="+",
                    help="values, space- or comma-separated")
    sw.add_argument("--out", default="sweep")
    sw.add_argument("--jobs", type=int, default=1)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args.scenario, args.out, args.overrides)
    if args.command == "verify":
        return cmd_verify(args.scenario, args.overrides)
    values = [v for item in args.values for v in item.split(",") if v]
    return cmd_sweep(args.scenario, args.param, values, args.out, args.overrides, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
