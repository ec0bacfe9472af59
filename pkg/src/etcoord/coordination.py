"""Decentralized coordination law, neighbor estimators and event triggers."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np


class TemporalOrderError(ValueError):
    """An estimator was queried before its anchoring sample."""


class CoordinationState(NamedTuple):
    gamma: float
    gamma_dot: float


class EstimatorSample(NamedTuple):
    t_event: float
    gamma_at_event: float
    gamma_dot_at_event: float


@dataclass(frozen=True)
class TriggerConfig:
    """Threshold h(t) = c1 + c2 exp(-decay_rate t)."""

    c1: float
    c2: float = 0.0
    decay_rate: float = 0.0

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0 or self.decay_rate < 0:
            raise ValueError("c1, c2 and decay_rate must be >= 0")
        if not self.c1 + self.c2 > 0:
            raise ValueError("threshold is identically zero (c1 + c2 = 0)")

    @property
    def sup(self) -> float:
        return self.c1 + self.c2


@dataclass(frozen=True)
class Gains:
    a: float
    b: float
    eta: float

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.eta > 0):
            raise ValueError("gains a, b and eta must be > 0")

    def eta_margin_ok(self, v_min: float, v_max: float) -> bool:
        """Whether eta > v_max - v_min; warns otherwise."""
        ok = self.eta > v_max - v_min
        if not ok:
            warnings.warn(f"eta={self.eta} <= v_max - v_min = {v_max - v_min}; "
                          "the ISS argument assumes eta > v_max - v_min",
                          stacklevel=2)
        return ok


def alpha_term(traj_velocity, e_pf, eta: float) -> float:
    """Progression correction from the path-following error.

    Positive when the vehicle is ahead of its desired position along the
    direction of travel, negative when it lags behind.
    """
    v = np.asarray(traj_velocity, dtype=float)
    e = np.asarray(e_pf, dtype=float)
    return float(v @ e / (np.linalg.norm(v) + eta))


def controller_rhs(state: CoordinationState, estimates: Mapping[int, float] | Sequence[float],
                   gains: Gains, gamma_dot_d: float, alpha: float) -> float:
    """Second derivative of the coordination state for one agent.

    ``estimates`` holds gamma-hat_j for exactly the current in-neighbors.
    """
    vals = estimates.values() if isinstance(estimates, Mapping) else estimates
    coupling = math.fsum(state.gamma - g for g in vals)
    return -gains.b * (state.gamma_dot - gamma_dot_d) - gains.a * coupling + alpha


def estimator_propagate(sample: EstimatorSample, b: float, gamma_dot_d: float,
                        t: float) -> tuple[float, float]:
    """Closed-form solution of the neighbor estimator at time ``t``.

    Solves gh'' = -b (gh' - gamma_dot_d) from the sample's state, with
    ``gamma_dot_d`` held constant over [t_event, t].
    """
    dt = t - sample.t_event
    if dt < 0:
        raise TemporalOrderError(f"t={t} precedes the sample time {sample.t_event}")
    decay = math.exp(-b * dt)
    slip = sample.gamma_dot_at_event - gamma_dot_d
    g = sample.gamma_at_event + gamma_dot_d * dt - slip * math.expm1(-b * dt) / b
    return g, gamma_dot_d + slip * decay


def propagate_piecewise(sample: EstimatorSample, b: float, profile: "RateProfile",
                        t: float) -> tuple[float, float]:
    """Closed-form estimator propagation across a piecewise-constant pace.

    The estimate is re-anchored at every pace change between the sample
    time and ``t``.
    """
    if t < sample.t_event:
        raise TemporalOrderError(f"t={t} precedes the sample time {sample.t_event}")
    cur = sample
    for tc in profile.change_times:
        if cur.t_event < tc <= t:
            g, gd = estimator_propagate(cur, b, profile.value_at(cur.t_event), tc)
            cur = EstimatorSample(tc, g, gd)
    return estimator_propagate(cur, b, profile.value_at(cur.t_event), t)


def self_estimation_error(gamma_j: float, own_sample: EstimatorSample, b: float,
                          gamma_dot_d: float, t: float) -> float:
    """e_j(t) = gamma-hat_j(t) - gamma_j(t) using agent j's own last broadcast."""
    return estimator_propagate(own_sample, b, gamma_dot_d, t)[0] - gamma_j


def threshold(t: float, cfg: TriggerConfig) -> float:
    if cfg.c2 == 0.0:
        return cfg.c1
    return cfg.c1 + cfg.c2 * math.exp(-cfg.decay_rate * t)


def trigger_check(e_j: float, t: float, cfg: TriggerConfig) -> bool:
    return abs(e_j) - threshold(t, cfg) > 0.0


class RateProfile:
    """Piecewise-constant desired pace, given as (start time, value) pairs."""

    def __init__(self, pieces: Sequence[tuple[float, float]]):
        pieces = sorted((float(t), float(v)) for t, v in pieces)
        if not pieces or pieces[0][0] != 0.0:
            raise ValueError("pace profile must start at t=0")
        self.pieces = pieces
        self.change_times = [t for t, _ in pieces[1:]]

    @classmethod
    def constant(cls, value: float) -> "RateProfile":
        return cls([(0.0, value)])

    def value_at(self, t: float) -> float:
        v = self.pieces[0][1]
        for ts, vs in self.pieces:
            if ts <= t:
                v = vs
            else:
                break
        return v

    @property
    def max_jump(self) -> float:
        vals = [v for _, v in self.pieces]
        return max((abs(b - a) for a, b in zip(vals, vals[1:])), default=0.0)


class Delivery(NamedTuple):
    sender: int
    receiver: int
    seq: int
    t_event: float
    t_delivered: float


class EstimatorBank:
    """Self-estimators and received neighbor estimators for a whole fleet.

    Agent indices are 0-based here. Each stored estimator is an anchor
    (t, gamma-hat, gamma-hat-dot) propagated in closed form; ``seq`` counts
    the sender's events and decides staleness on reception.
    """

    def __init__(self, n: int, b: float, gamma_dot_d: float):
        self.n = n
        self.b = b
        self.gamma_dot_d = gamma_dot_d
        self.self_anchor = np.zeros((n, 3))
        self.self_seq = np.full(n, -1, dtype=np.int64)
        self.self_t_event = np.zeros(n)
        # recv_*[i, j]: receiver i's estimator of sender j
        self.recv_anchor = np.zeros((n, n, 3))
        self.recv_seq = np.full((n, n), -1, dtype=np.int64)

    def on_event(self, j: int, t: float, gamma: float, gamma_dot: float) -> EstimatorSample:
        """Sample agent j's state; its self-estimator resets so e_j(t) = 0."""
        self.self_anchor[j] = (t, gamma, gamma_dot)
        self.self_seq[j] += 1
        self.self_t_event[j] = t
        return EstimatorSample(t, gamma, gamma_dot)

    def on_reception(self, i: int, j: int, sample: EstimatorSample, seq: int,
                     t_now: float) -> tuple[float, float] | None:
        """Install a sample from j at receiver i, caught up to ``t_now``.

        Returns the caught-up estimate, or None if the sample is stale.
        """
        if t_now < sample.t_event:
            raise TemporalOrderError(f"delivery at {t_now} precedes event {sample.t_event}")
        if seq <= self.recv_seq[i, j]:
            return None
        self.recv_anchor[i, j] = sample
        self.recv_seq[i, j] = seq
        return estimator_propagate(sample, self.b, self.gamma_dot_d, t_now)

    def deliver(self, active: np.ndarray, t: float) -> list[Delivery]:
        """Push each sender's newest sample over the active edges.

        ``active[i, j]`` is True when i currently receives from j.
        """
        out = []
        pending = active & (self.self_seq[None, :] > self.recv_seq)
        for i, j in zip(*np.nonzero(pending)):
            anchor = EstimatorSample(*self.self_anchor[j])
            self.on_reception(int(i), int(j), anchor, int(self.self_seq[j]), t)
            out.append(Delivery(int(j), int(i), int(self.self_seq[j]),
                                float(self.self_t_event[j]), t))
        return out

    def reanchor(self, t: float, new_gamma_dot_d: float):
        """Re-anchor every estimator at a pace change instant ``t``."""
        for anchor in (self.self_anchor, self.recv_anchor.reshape(-1, 3)):
            g, gd = _propagate_arrays(anchor, self.b, self.gamma_dot_d, t)
            anchor[:, 0] = t
            anchor[:, 1] = g
            anchor[:, 2] = gd
        self.gamma_dot_d = new_gamma_dot_d

    def self_estimates(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        return _propagate_arrays(self.self_anchor, self.b, self.gamma_dot_d, t)

    def self_errors(self, t: float, gamma: np.ndarray) -> np.ndarray:
        return self.self_estimates(t)[0] - gamma

    def neighbor_estimates(self, t: float) -> np.ndarray:
        """Matrix G[i, j] = receiver i's current estimate of gamma_j."""
        g, _ = _propagate_arrays(self.recv_anchor.reshape(-1, 3), self.b, self.gamma_dot_d, t)
        return g.reshape(self.n, self.n)


def _propagate_arrays(anchor: np.ndarray, b: float, gdd: float, t: float):
    dt = t - anchor[:, 0]
    slip = anchor[:, 2] - gdd
    g = anchor[:, 1] + gdd * dt - slip * np.expm1(-b * dt) / b
    gd = gdd + slip * np.exp(-b * dt)
    return g, gd
