"""Theoretical constants of the convergence analysis and trace checks."""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .coordination import Gains, TriggerConfig
from .graph import consensus_rate_constants, diameter, q_matrix


class FitError(ValueError):
    pass


class ZenoBoundWarning(UserWarning):
    pass


def spectral_norm(M, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value by power iteration on M^T M."""
    M = np.atleast_2d(np.asarray(M, dtype=float))
    G = M.T @ M
    if not G.any():
        return 0.0
    x = np.random.default_rng(0).standard_normal(G.shape[0])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = G @ x
        new = float(np.linalg.norm(y))
        if new == 0.0:
            return 0.0
        x = y / new
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return math.sqrt(est)


class CoordinationErrorState(NamedTuple):
    xi1: np.ndarray
    xi2: np.ndarray
    norm: float


def coordination_error(gamma, gamma_dot, gamma_dot_d: float, Q=None) -> CoordinationErrorState:
    gamma = np.asarray(gamma, dtype=float)
    gamma_dot = np.asarray(gamma_dot, dtype=float)
    if gamma.shape != gamma_dot.shape:
        raise ValueError(f"gamma {gamma.shape} and gamma_dot {gamma_dot.shape} differ")
    Q = q_matrix(gamma.size) if Q is None else np.asarray(Q)
    if Q.shape != (gamma.size - 1, gamma.size):
        raise ValueError(f"Q has shape {Q.shape}, expected {(gamma.size - 1, gamma.size)}")
    xi1 = Q @ gamma
    xi2 = gamma_dot - gamma_dot_d
    return CoordinationErrorState(xi1, xi2, math.sqrt(xi1 @ xi1 + xi2 @ xi2))


@dataclass
class TheoreticalBounds:
    n: int
    a: float
    b: float
    k: float
    lam: float
    delta_prime: float
    k_phi: float
    lambda_tc: float
    c1: float  # lower Lyapunov bound
    c2: float  # upper Lyapunov bound
    c3: float
    beta: float
    kappa1: float
    kappa2: float
    norm_S: float
    norm_S_inv: float
    decay_matrix_eigvals: tuple  # of U - 3 lambda_TC M2
    decay_matrix_psd: bool
    min_interevent: float | None = None
    u_bar: float | None = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["decay_matrix_eigvals"] = list(self.decay_matrix_eigvals)
        return d


def iss_bound_constants(gains: Gains, n: int, T: float, delta: float,
                        c3: float = 1.0, beta: float | None = None) -> TheoreticalBounds:
    """Rate and gains of the ISS estimate for the coordination error.

    ``beta`` defaults to ``2 * c1`` so that min(c1, beta/2) = c1. The rate
    is taken at its upper bound lambda / (6 n k^2).
    """
    if not c3 > 0:
        raise ValueError("c3 must be > 0")
    a, b = gains.a, gains.b
    cr = consensus_rate_constants(a, b, delta, T, n)
    k, lam = cr.k, cr.lam
    k_phi = math.sqrt(2 * n) * k
    lambda_tc = lam / (6 * n * k ** 2)
    c1 = b * c3 / (2 * a * n)
    c2 = k_phi ** 2 * c3 / (2 * lam)
    if beta is None:
        beta = 2 * c1
    if not beta > 0:
        raise ValueError("beta must be > 0")

    Q = q_matrix(n)
    S = np.block([[b * np.eye(n - 1), Q], [np.zeros((n, n - 1)), np.eye(n)]])
    S_inv = np.block([[np.eye(n - 1) / b, -Q / b], [np.zeros((n, n - 1)), np.eye(n)]])
    nS, nSi = spectral_norm(S), spectral_norm(S_inv)
    lo, hi = min(c1, beta / 2), max(c2, beta / 2)
    cond = math.sqrt(hi / lo)
    kappa1 = nSi * cond * nS
    kappa2 = nSi * cond * (k_phi ** 2 * c3 / lam + beta) / (lambda_tc * lo)

    r = a / b
    off = -0.5 * (r * n * k_phi ** 2 / lam * c3 + beta * r * n)
    D = np.array([[c3 - lambda_tc * 1.5 * k_phi ** 2 / lam * c3, off],
                  [off, beta * (b - r * n - 1.5 * lambda_tc)]])
    eig = tuple(float(v) for v in np.linalg.eigvalsh(D))
    psd = min(eig) >= 0.0
    notes = []
    if not psd:
        notes.append("U - 3*lambda_TC*M2 is not positive semidefinite for these gains "
                      "(b is not large enough for the Lyapunov argument)")
        warnings.warn(notes[-1], stacklevel=2)
    if lambda_tc < 1e-6:
        notes.append("bound is conservative: lambda_TC is many orders below observed rates")
    return TheoreticalBounds(
        n=n, a=a, b=b, k=k, lam=lam, delta_prime=cr.delta_prime, k_phi=k_phi,
        lambda_tc=lambda_tc, c1=c1, c2=c2, c3=c3, beta=beta,
        kappa1=kappa1, kappa2=kappa2, norm_S=nS, norm_S_inv=nSi,
        decay_matrix_eigvals=eig, decay_matrix_psd=psd, notes=notes,
    )


def control_bound(gains: Gains, trigger: TriggerConfig, n: int, rho: float,
                  xi0_norm: float, gamma_ddot_d_max: float, bounds: TheoreticalBounds) -> float:
    """Upper bound u-bar on the input driving the estimation-error dynamics."""
    an = gains.a * n
    h_term = an * math.sqrt(n) * (trigger.c1 + trigger.c2)
    return (an * bounds.kappa1 * xi0_norm
            + an * bounds.kappa2 * (h_term + rho + gamma_ddot_d_max)
            + h_term + rho)


def interevent_from_ubar(b: float, c1_trigger: float, u_bar: float) -> float:
    A = np.array([[0.0, 1.0], [0.0, -b]])
    nA = spectral_norm(A)
    nB = 1.0
    return math.log1p(c1_trigger * nA / (nB * u_bar)) / nA


def min_interevent_bound(gains: Gains, trigger: TriggerConfig, n: int, rho: float,
                         xi0_norm: float, gamma_ddot_d_max: float,
                         bounds: TheoreticalBounds) -> float:
    """Guaranteed lower bound on the time between two events of one agent."""
    if trigger.c1 == 0.0:
        warnings.warn("c1 = 0: no Zeno guarantee from this bound", ZenoBoundWarning, stacklevel=2)
        return 0.0
    u_bar = control_bound(gains, trigger, n, rho, xi0_norm, gamma_ddot_d_max, bounds)
    bounds.u_bar = u_bar
    tau = interevent_from_ubar(gains.b, trigger.c1, u_bar)
    bounds.min_interevent = tau
    return tau


@dataclass
class Check:
    name: str
    holds: bool
    margin: float | None = None
    first_violation_t: float | None = None
    detail: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    def line(self) -> str:
        tag = "PASS" if self.holds else "FAIL"
        extra = f" margin={self.margin:.6g}" if self.margin is not None else ""
        if self.first_violation_t is not None:
            extra += f" first_violation_t={self.first_violation_t:.6g}"
        return f"[{tag}] {self.name}{extra}" + (f" ({self.detail})" if self.detail else "")


def iss_envelope(t, xi0_norm: float, bounds: TheoreticalBounds, h_sup: float, rho: float,
                 gamma_ddot_d_max: float):
    t = np.asarray(t, dtype=float)
    offset = bounds.kappa2 * (bounds.a * bounds.n * math.sqrt(bounds.n) * h_sup
                              + rho + gamma_ddot_d_max)
    return bounds.kappa1 * xi0_norm * np.exp(-bounds.lambda_tc * t) + offset


def check_iss_envelope(trace, bounds: TheoreticalBounds, h_sup: float, rho: float,
                       gamma_ddot_d_max: float, mask=None) -> Check:
    """Compare ||xi_TC(t)|| with the ISS envelope at every sample.

    The margin is the smallest envelope/norm ratio over samples with a
    nonzero norm (inf if the trace stays at equilibrium).
    """
    t = np.asarray(trace.t)
    xi = np.asarray(trace.xi_norm)
    if mask is not None:
        t, xi = t[mask], xi[mask]
    env = iss_envelope(t, float(trace.xi_norm[0]), bounds, h_sup, rho, gamma_ddot_d_max)
    bad = np.flatnonzero(xi > env)
    pos = xi > 0
    margin = float(np.min(env[pos] / xi[pos])) if pos.any() else math.inf
    return Check("iss_envelope", bad.size == 0, margin,
                 float(t[bad[0]]) if bad.size else None)


def fit_decay_rate(t, values, window=None) -> float:
    """Least-squares exponential rate: minus the slope of log(values)."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(values, dtype=float)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, v = t[sel], v[sel]
    if t.size < 2:
        raise FitError("need at least two samples in the window")
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        raise FitError("values must be positive and finite on the fit window")
    slope = np.polyfit(t, np.log(v), 1)[0]
    return float(-slope)


def check_estimation_error(trace, slack: float) -> Check:
    """|e_j| <= h(t) + slack at every sample of every agent still en route."""
    e = np.abs(np.asarray(trace.est_error))
    lim = np.asarray(trace.h)[:, None] + slack
    live = np.isfinite(e)
    over = live & (e > lim)
    rows = np.flatnonzero(over.any(axis=1))
    ratio = np.where(live, e, 0.0) / lim
    margin = float(1.0 - ratio.max())
    return Check("estimation_error_bound", rows.size == 0, margin,
                 float(trace.t[rows[0]]) if rows.size else None,
                 f"max |e| = {np.nanmax(e):.6g}, slack {slack:g}")


def interevent_gaps(trace) -> dict:
    return {i: np.diff(trace.event_times(i)) for i in range(1, trace.n + 1)}


def check_interevent(trace, bound: float) -> Check:
    gaps = [g for g in interevent_gaps(trace).values() if g.size]
    if not gaps:
        return Check("zeno_exclusion", bound > 0, math.inf, None, "no inter-event gaps")
    all_gaps = np.concatenate(gaps)
    ok = bool(all_gaps.min() >= bound) and bound > 0
    first = None
    if not ok:
        bad = [e.t_event for i in range(1, trace.n + 1)
               for e, g in zip([ev for ev in trace.events if ev.agent == i][1:],
                               np.diff(trace.event_times(i))) if g < bound]
        first = min(bad) if bad else None
    return Check("zeno_exclusion", ok, float(all_gaps.min() - bound), first,
                 f"min gap {all_gaps.min():.6g} s vs bound {bound:.3g} s")


def check_pf_certificate(trace, rho: float, mask=None) -> Check:
    """Stacked ||e_PF(t)|| <= rho on the masked samples (all by default)."""
    norm = trace.epf_stacked
    t = np.asarray(trace.t)
    if mask is not None:
        norm, t = norm[mask], t[mask]
    bad = np.flatnonzero(norm > rho)
    return Check("pf_certificate", bad.size == 0, float(rho - norm.max()),
                 float(t[bad[0]]) if bad.size else None,
                 f"max ||e_PF|| = {norm.max():.6g} vs rho = {rho:g}")


def check_consensus_envelope(ctrace, k: float, lam: float, slack: float = 0.0) -> Check:
    """diam(x(t)) <= k diam(x(0)) exp(-lam t) along a consensus reference run.

    Batched traces pass only if every member does.
    """
    x = np.asarray(ctrace.x)
    t = np.asarray(ctrace.t)
    diam = x.max(axis=-1) - x.min(axis=-1)
    decay = np.exp(-lam * t).reshape((-1,) + (1,) * (diam.ndim - 1))
    env = k * diam[0] * decay + slack
    bad_rows = np.flatnonzero((diam > env).reshape(len(t), -1).any(axis=1))
    pos = diam > 0
    margin = float(np.min(env[pos] - diam[pos])) if pos.any() else math.inf
    return Check("consensus_envelope", bad_rows.size == 0, margin,
                 float(t[bad_rows[0]]) if bad_rows.size else None)


def sandwich_holds(x, Q=None, slack: float = 1e-12) -> bool:
    """(1/sqrt n) ||Qx|| <= diam(x) <= sqrt(2) ||Qx||."""
    x = np.asarray(x, dtype=float)
    n = x.size
    Q = q_matrix(n) if Q is None else Q
    qn = float(np.linalg.norm(Q @ x))
    d = diameter(x)
    return qn / math.sqrt(n) <= d + slack and d <= math.sqrt(2) * qn + slack


def check_sandwich_trace(trace, slack: float = 1e-9) -> Check:
    Q = q_matrix(trace.n)
    g = np.asarray(trace.gamma)
    qn = np.linalg.norm(g @ Q.T, axis=1)
    d = g.max(axis=1) - g.min(axis=1)
    # slack scales with |gamma| because both sides lose relative precision
    tol = slack * (1.0 + np.abs(g).max(axis=1))
    bad = np.flatnonzero((qn / math.sqrt(trace.n) > d + tol) | (d > math.sqrt(2) * qn + tol))
    return Check("sandwich_trace", bad.size == 0, None,
                 float(trace.t[bad[0]]) if bad.size else None)
