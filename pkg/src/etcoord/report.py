"""Run summaries, bound reports and CSV/JSON writers."""
from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import analysis
from .scenario import ScenarioConfig
from .sim import TraceLog

# One-step integration allowance on the estimation-error bound at dt = 1e-3.
EPS_INT = 1e-4


@dataclass
class RunSummary:
    scenario: str
    n: int
    t_f: float
    final_max_gamma_spread: float
    final_max_rate_error: float
    max_gamma_spread_after_10s: float | None
    max_rate_error_after_10s: float | None
    arrival_times: list
    arrival_spread: float | None
    events_per_agent: list
    total_events: int
    min_interevent_gap: float | None
    max_abs_estimation_error: float
    max_pf_error: float
    pf_certificate: bool
    eta_margin_ok: bool
    bound_verdicts: dict
    diagnostics: dict

    def to_dict(self) -> dict:
        return asdict(self)


def gamma_ddot_d_max(cfg: ScenarioConfig) -> float:
    # piecewise-constant pace: derivative vanishes between switches
    return 0.0


def theoretical_bounds(cfg: ScenarioConfig, xi0_norm: float, rho: float) -> analysis.TheoreticalBounds:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        bounds = analysis.iss_bound_constants(cfg.gains, cfg.n, cfg.qos_T, cfg.qos_delta)
        analysis.min_interevent_bound(cfg.gains, cfg.trigger, cfg.n, rho, xi0_norm,
                                      gamma_ddot_d_max(cfg), bounds)
    bounds.notes.append(f"eta check uses v_min = min over agents = {cfg.v_min:g}, "
                        f"v_max = {cfg.v_max:g}")
    return bounds


def evaluate_run(cfg: ScenarioConfig, trace: TraceLog):
    """Summary, theoretical constants and checks for one simulated run."""
    mission = trace.mission_mask()
    spread = trace.gamma.max(axis=1) - trace.gamma.min(axis=1)
    rate_err = np.abs(trace.gamma_dot - trace.gamma_dot_d[:, None]).max(axis=1)
    late = mission & (trace.t >= 10.0)
    last = int(np.flatnonzero(mission)[-1])

    rho = cfg.pf.rho
    # after arrival the desired point freezes; path following is no longer defined
    rho_obs = float(trace.epf_stacked[mission].max())
    checks = []
    if cfg.n >= 2:
        bounds = theoretical_bounds(cfg, float(trace.xi_norm[0]), rho)
        checks.append(analysis.check_iss_envelope(trace, bounds, cfg.trigger.sup, rho_obs,
                                                  gamma_ddot_d_max(cfg), mask=mission))
        checks.append(analysis.check_interevent(trace, bounds.min_interevent or 0.0))
        checks.append(analysis.check_sandwich_trace(trace))
    else:
        bounds = None
    if cfg.communication == "event":
        checks.append(analysis.check_estimation_error(trace, EPS_INT))
    checks.append(analysis.check_pf_certificate(trace, rho, mask=mission))

    gaps = [g for g in analysis.interevent_gaps(trace).values() if g.size]
    arrivals = trace.arrival_times
    done = [a for a in arrivals if a is not None]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        eta_ok = cfg.gains.eta_margin_ok(cfg.v_min, cfg.v_max)
    counts = trace.event_counts()
    diag = dict(trace.diagnostics)
    diag["clamp_events"] = [list(c) for c in diag["clamp_events"]]
    diag["negative_gamma_dot"] = {str(k): v for k, v in diag["negative_gamma_dot"].items()}
    summary = RunSummary(
        scenario=cfg.name, n=cfg.n, t_f=cfg.t_f,
        final_max_gamma_spread=float(spread[last]),
        final_max_rate_error=float(rate_err[last]),
        max_gamma_spread_after_10s=float(spread[late].max()) if late.any() else None,
        max_rate_error_after_10s=float(rate_err[late].max()) if late.any() else None,
        arrival_times=[None if a is None else float(a) for a in arrivals],
        arrival_spread=float(max(done) - min(done)) if len(done) == cfg.n else None,
        events_per_agent=counts, total_events=int(sum(counts)),
        min_interevent_gap=float(min(g.min() for g in gaps)) if gaps else None,
        max_abs_estimation_error=float(np.nanmax(np.abs(trace.est_error))),
        max_pf_error=rho_obs,
        pf_certificate=rho_obs <= rho,
        eta_margin_ok=eta_ok,
        bound_verdicts={c.name: c.holds for c in checks},
        diagnostics=diag,
    )
    return summary, bounds, checks


def bound_report(bounds, checks) -> dict:
    return {"constants": bounds.to_dict() if bounds is not None else {},
            "checks": [c.to_dict() for c in checks]}


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _clean(o):
    # JSON has no inf/nan
    if isinstance(o, float) and not math.isfinite(o):
        return None if math.isnan(o) else ("inf" if o > 0 else "-inf")
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    return o


def write_json(obj, path) -> None:
    text = json.dumps(_clean(json.loads(json.dumps(obj, default=_json_default))),
                      indent=2, sort_keys=True)
    Path(path).write_text(text + "\n")


def trace_header(n: int) -> list[str]:
    cols = ["t"]
    for name in ("gamma", "gamma_dot", "gamma_ddot", "e"):
        cols += [f"{name}_{i}" for i in range(1, n + 1)]
    cols.append("xi_norm")
    cols += [f"epf_norm_{i}" for i in range(1, n + 1)]
    cols.append("gamma_dot_d")
    return cols


def write_trace_csv(trace: TraceLog, path) -> None:
    """One row per sample; floats with 17 significant digits."""
    data = np.column_stack([trace.t, trace.gamma, trace.gamma_dot, trace.gamma_ddot,
                            trace.est_error, trace.xi_norm, trace.epf_norm, trace.gamma_dot_d])
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(trace_header(trace.n)),
               comments="")


def write_events_csv(trace: TraceLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["agent", "seq", "t_event", "gamma", "gamma_dot", "trigger_error",
                    "delivered_to"])
        for ev in trace.events:
            dl = ";".join(f"{r}@{td:.17g}" for r, td in ev.delivered_to)
            w.writerow([ev.agent, ev.seq, f"{ev.t_event:.17g}", f"{ev.sample.gamma_at_event:.17g}",
                        f"{ev.sample.gamma_dot_at_event:.17g}", f"{ev.trigger_error:.17g}", dl])


def read_trace_csv(path) -> dict:
    """Column name -> array, for post-processing written traces."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {name: data[name] for name in data.dtype.names}
