"""Fixed-step deterministic simulation of the event-triggered fleet."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .coordination import EstimatorBank, EstimatorSample, threshold
from .graph import BOUNDARY_TOL, NetworkSchedule, laplacian, q_matrix, scan_integral_connectivity
from .scenario import ScenarioConfig
from .vehicle import TrajectoryBank, pf_acceleration


class NumericalError(RuntimeError):
    def __init__(self, step: int, t: float):
        super().__init__(f"non-finite state at step {step} (t={t:.6g})")
        self.step = step
        self.t = t


class ConnectivityError(RuntimeError):
    """Integral connectivity fails on some window of the schedule."""

    def __init__(self, failing):
        self.failing = list(failing)
        w = self.failing[0]
        super().__init__(f"no delta-spanning tree on window starting at t={w.t_start:g} "
                         f"({len(self.failing)} failing window(s))")


@dataclass
class EventRecord:
    agent: int  # 1-based
    t_event: float
    sample: EstimatorSample
    seq: int
    trigger_error: float  # |e_j| just before the reset (0 for the initial broadcast)
    delivered_to: list = field(default_factory=list)  # (receiver, t_delivered)


@dataclass
class TraceLog:
    t: np.ndarray
    gamma: np.ndarray  # (N, n)
    gamma_dot: np.ndarray
    gamma_ddot: np.ndarray
    est_error: np.ndarray  # e_j at each sample before any reset; NaN once arrived
    e_pf: np.ndarray  # (N, n, 3)
    xi_norm: np.ndarray
    gamma_dot_d: np.ndarray
    h: np.ndarray
    events: list
    deliveries: list  # (sender, receiver, t_event, t_delivered), 1-based ids
    arrival_times: list  # per agent, None if not arrived
    diagnostics: dict

    @property
    def n(self) -> int:
        return self.gamma.shape[1]

    def event_times(self, agent: int) -> np.ndarray:
        return np.array([e.t_event for e in self.events if e.agent == agent])

    def event_counts(self) -> list[int]:
        counts = [0] * self.n
        for e in self.events:
            counts[e.agent - 1] += 1
        return counts

    @property
    def epf_norm(self) -> np.ndarray:
        """Per-agent path-following error magnitude, (N, n)."""
        return np.linalg.norm(self.e_pf, axis=2)

    @property
    def epf_stacked(self) -> np.ndarray:
        return np.linalg.norm(self.e_pf.reshape(len(self.t), -1), axis=1)

    def mission_mask(self) -> np.ndarray:
        """Samples before the first arrival (coordination still active)."""
        arrived = [a for a in self.arrival_times if a is not None]
        if not arrived:
            return np.ones(len(self.t), dtype=bool)
        return self.t < min(arrived)


def active_edges(schedule: NetworkSchedule, t: float):
    """Edge set in force at ``t`` and whether a non-cyclic schedule overran."""
    k, overran = schedule.locate(t)
    return schedule.segments[k][1].edges, overran


def check_connectivity(cfg: ScenarioConfig):
    windows = scan_integral_connectivity(cfg.schedule, cfg.qos_T, cfg.qos_delta)
    return [w for w in windows if not w.holds], windows


def _casteljau_with_derivative(points: np.ndarray, s: np.ndarray):
    """Batched position and d/ds from one de Casteljau pass, points (n, m, 3)."""
    P = points
    s = s[:, None, None]
    deg = P.shape[1] - 1
    while P.shape[1] > 2:
        P = P[:, :-1] + s * (P[:, 1:] - P[:, :-1])
    a, b = P[:, 0], P[:, 1]
    s = s[:, 0]
    return a + s * (b - a), deg * (b - a)


def run_scenario(cfg: ScenarioConfig, record_every: int = 1) -> TraceLog:
    failing, _ = check_connectivity(cfg)
    if failing and not cfg.waive_connectivity:
        raise ConnectivityError(failing)

    n, dt = cfg.n, cfg.dt
    a, b, eta = cfg.gains.a, cfg.gains.b, cfg.gains.eta
    pace = cfg.pace
    trajs = TrajectoryBank(cfg.trajectories)
    t_f = trajs.t_f
    pts = trajs.points
    Q = q_matrix(n) if n >= 2 else np.zeros((0, n))
    masks = [_edge_mask(g.edges, n) for _, g in cfg.schedule.segments]
    continuous = cfg.communication == "continuous"
    rng = np.random.default_rng(cfg.seed)

    steps = int(math.floor(cfg.t_end / dt + 1e-9))
    gdd = pace.value_at(0.0)
    bank = EstimatorBank(n, b, gdd)

    gamma = np.array(cfg.gamma0, dtype=float)
    gdot = np.array(cfg.gamma_dot0, dtype=float)
    pd0, vd0 = _casteljau_with_derivative(pts, np.clip(gamma, 0, t_f) / t_f)
    vd0 = vd0 / t_f
    pos = pd0 + np.array(cfg.position_offsets, dtype=float)
    vel = vd0 * gdot[:, None]
    arrived = np.zeros(n, dtype=bool)
    arrival_times = [None] * n

    n_rec = steps // record_every + 1
    rec_t = np.empty(n_rec)
    rec_g = np.empty((n_rec, n))
    rec_gd = np.empty((n_rec, n))
    rec_gdd = np.empty((n_rec, n))
    rec_e = np.empty((n_rec, n))
    rec_epf = np.empty((n_rec, n, 3))
    rec_xi = np.empty(n_rec)
    rec_pace = np.empty(n_rec)
    rec_h = np.empty(n_rec)

    events: list[EventRecord] = []
    by_seq: dict[tuple[int, int], EventRecord] = {}
    deliveries = []
    diagnostics = {
        "negative_gamma_dot": {},  # agent -> [first t, count]
        "clamp_events": [],
        "schedule_overrun": False,
        "max_receiver_discrepancy": 0.0,
        "pace_reanchors": [],
        "gamma_decrease": 0,
    }
    pending_changes = list(pace.change_times)
    disturbance = np.zeros((n, 3))

    def deriv(tau, g, gd, p, v, mask):
        s = np.clip(g, 0.0, t_f) / t_f
        p_d, v_d = _casteljau_with_derivative(pts, s)
        v_d = v_d / t_f
        e_pf = p - p_d
        alpha = np.einsum("ij,ij->i", v_d, e_pf) / (np.sqrt(np.einsum("ij,ij->i", v_d, v_d)) + eta)
        if continuous:
            G = np.broadcast_to(g, (n, n))
        else:
            G = bank.neighbor_estimates(tau)
        coupling = np.where(mask, g[:, None] - G, 0.0).sum(axis=1)
        gdd_i = -b * (gd - gdd) - a * coupling + alpha
        gdd_i[arrived] = 0.0
        acc = pf_acceleration(p, v, p_d, v_d, gd, cfg.pf) + disturbance
        return gd, gdd_i, v, acc, e_pf

    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(steps + 1):
            t = k * dt
            while pending_changes and pending_changes[0] <= t + BOUNDARY_TOL:
                tc = pending_changes.pop(0)
                new = pace.value_at(tc)
                bank.reanchor(t, new)
                gdd = new
                diagnostics["pace_reanchors"].append(t)

            seg, overran = cfg.schedule.locate(t)
            diagnostics["schedule_overrun"] |= overran
            mask = masks[seg]
            h_t = threshold(t, cfg.trigger)

            if k == 0:
                e = np.zeros(n)
                for j in range(n):
                    _emit(bank, events, by_seq, j, t, gamma, gdot, 0.0)
            else:
                e = bank.self_errors(t, gamma)
                if not continuous:
                    fire = (np.abs(e) - h_t > 0.0) & ~arrived
                    for j in np.flatnonzero(fire):
                        _emit(bank, events, by_seq, int(j), t, gamma, gdot, float(abs(e[j])))

            for d in bank.deliver(mask, t):
                rec = by_seq[(d.sender, d.seq)]
                rec.delivered_to.append((d.receiver + 1, t))
                deliveries.append((d.sender + 1, d.receiver + 1, d.t_event, t))

            if not continuous:
                known = bank.recv_seq >= 0
                if known.any():
                    G = bank.neighbor_estimates(t)
                    own = bank.self_estimates(t)[0]
                    disc = np.abs(G - own[None, :])[known].max()
                    if disc > diagnostics["max_receiver_discrepancy"]:
                        diagnostics["max_receiver_discrepancy"] = float(disc)

            if cfg.accel_amplitude > 0:
                disturbance = rng.uniform(-cfg.accel_amplitude, cfg.accel_amplitude, (n, 3))

            k1 = deriv(t, gamma, gdot, pos, vel, mask)
            if k % record_every == 0:
                r = k // record_every
                rec_t[r] = t
                rec_g[r] = gamma
                rec_gd[r] = gdot
                rec_gdd[r] = k1[1]
                rec_e[r] = np.where(arrived, np.nan, e)
                rec_epf[r] = k1[4]
                x1 = Q @ gamma
                x2 = gdot - gdd
                rec_xi[r] = math.sqrt(x1 @ x1 + x2 @ x2)
                rec_pace[r] = gdd
                rec_h[r] = h_t
            if k == steps:
                break

            h2 = dt / 2
            k2 = deriv(t + h2, gamma + h2 * k1[0], gdot + h2 * k1[1], pos + h2 * k1[2],
                       vel + h2 * k1[3], mask)
            k3 = deriv(t + h2, gamma + h2 * k2[0], gdot + h2 * k2[1], pos + h2 * k2[2],
                       vel + h2 * k2[3], mask)
            k4 = deriv(t + dt, gamma + dt * k3[0], gdot + dt * k3[1], pos + dt * k3[2],
                       vel + dt * k3[3], mask)
            w = dt / 6
            g_new = gamma + w * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
            gdot = gdot + w * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
            pos = pos + w * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
            vel = vel + w * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])

            if not (np.isfinite(g_new).all() and np.isfinite(gdot).all()
                    and np.isfinite(pos).all() and np.isfinite(vel).all()):
                raise NumericalError(k + 1, (k + 1) * dt)

            t1 = (k + 1) * dt
            diagnostics["gamma_decrease"] += int((g_new < gamma).sum())
            for i in np.flatnonzero(~arrived & (g_new >= t_f)):
                frac = (t_f - gamma[i]) / (g_new[i] - gamma[i]) if g_new[i] > gamma[i] else 1.0
                arrival_times[i] = t + frac * dt
                arrived[i] = True
                g_new[i] = t_f
                gdot[i] = 0.0
                diagnostics["clamp_events"].append((int(i) + 1, t1))
            neg = np.flatnonzero((gdot < 0) & ~arrived)
            for i in neg:
                slot = diagnostics["negative_gamma_dot"].setdefault(int(i) + 1, [t1, 0])
                slot[1] += 1
            gamma = g_new

    return TraceLog(
        t=rec_t, gamma=rec_g, gamma_dot=rec_gd, gamma_ddot=rec_gdd, est_error=rec_e,
        e_pf=rec_epf, xi_norm=rec_xi, gamma_dot_d=rec_pace, h=rec_h, events=events,
        deliveries=deliveries, arrival_times=arrival_times, diagnostics=diagnostics,
    )


def _edge_mask(edges, n) -> np.ndarray:
    m = np.zeros((n, n), dtype=bool)
    for i, j in edges:
        m[i - 1, j - 1] = True
    return m


def _emit(bank, events, by_seq, j, t, gamma, gdot, err):
    sample = bank.on_event(j, t, float(gamma[j]), float(gdot[j]))
    seq = int(bank.self_seq[j])
    rec = EventRecord(j + 1, t, sample, seq, err)
    events.append(rec)
    by_seq[(j, seq)] = rec


@dataclass
class ConsensusTrace:
    t: np.ndarray
    x: np.ndarray  # (N, n), or (N, m, n) for a batch of m initial conditions


def run_consensus_reference(schedule: NetworkSchedule, a: float, b: float, x0,
                            dt: float, t_end: float) -> ConsensusTrace:
    """RK4 integration of xdot = -(a/b) L(t) x.

    Steps that straddle a schedule switch are split at the switch, so the
    integrand is constant on every RK4 substep. ``x0`` may be a single
    vector of length n or an (m, n) batch integrated together.
    """
    if not (dt > 0 and t_end > 0):
        raise ValueError("dt and t_end must be > 0")
    x = np.array(x0, dtype=float)
    if x.ndim not in (1, 2) or x.shape[-1] != schedule.n:
        raise ValueError(f"x0 must have shape ({schedule.n},) or (m, {schedule.n})")
    r = a / b
    # row-vector form so a batch is x @ M
    Ms = [-r * laplacian(g).T for _, g in schedule.segments]
    bounds = schedule.boundaries
    cycle = bounds[-1]
    steps = int(math.floor(t_end / dt + 1e-9))
    out = np.empty((steps + 1,) + x.shape)
    out[0] = x
    for k in range(steps):
        t0, t1 = k * dt, (k + 1) * dt
        cuts = [t0]
        if schedule.cyclic:
            m = math.floor(t0 / cycle)
            for mm in (m, m + 1):
                for bnd in bounds:
                    c = mm * cycle + bnd
                    if t0 + BOUNDARY_TOL < c < t1 - BOUNDARY_TOL:
                        cuts.append(c)
        else:
            cuts += [c for c in bounds if t0 + BOUNDARY_TOL < c < t1 - BOUNDARY_TOL]
        cuts = sorted(set(cuts)) + [t1]
        for ta, tb in zip(cuts, cuts[1:]):
            M = Ms[schedule.locate(ta)[0]]
            h = tb - ta
            k1 = x @ M
            k2 = (x + h / 2 * k1) @ M
            k3 = (x + h / 2 * k2) @ M
            k4 = (x + h * k3) @ M
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.isfinite(x).all():
            raise NumericalError(k + 1, t1)
        out[k + 1] = x
    return ConsensusTrace(np.arange(steps + 1) * dt, out)
