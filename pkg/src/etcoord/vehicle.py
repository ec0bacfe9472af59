"""Bezier desired trajectories and a point-mass path-following surrogate."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import comb


class TrajectoryError(ValueError):
    pass


def de_casteljau(points: np.ndarray, s):
    """Evaluate Bezier control points at curve parameter(s) ``s``.

    ``points`` has shape (..., m, d); ``s`` broadcasts against the leading
    dimensions. Returns shape (..., d).
    """
    P = np.asarray(points, dtype=float)
    s = np.asarray(s, dtype=float)[..., None, None]
    while P.shape[-2] > 1:
        P = P[..., :-1, :] + s * (P[..., 1:, :] - P[..., :-1, :])
    return P[..., 0, :]


def elevate_degree(points: np.ndarray, times: int = 1) -> np.ndarray:
    """Exact degree elevation of a Bezier control polygon."""
    P = np.asarray(points, dtype=float)
    for _ in range(times):
        m = P.shape[0]  # current degree + 1
        i = np.arange(1, m)[:, None] / m
        inner = i * P[:-1] + (1 - i) * P[1:]
        P = np.vstack([P[:1], inner, P[-1:]])
    return P


@dataclass(frozen=True)
class BezierTrajectory:
    """Desired position p_d(gamma) for gamma in [0, t_f]."""

    control_points: np.ndarray
    t_f: float

    def __post_init__(self):
        P = np.array(self.control_points, dtype=float)
        if P.ndim != 2 or P.shape[1] != 3:
            raise TrajectoryError(f"control points must be (m, 3), got {P.shape}")
        if P.shape[0] < 2:
            raise TrajectoryError("a Bezier trajectory needs at least 2 control points")
        if not self.t_f > 0:
            raise TrajectoryError(f"t_f must be > 0, got {self.t_f}")
        P.setflags(write=False)
        object.__setattr__(self, "control_points", P)
        object.__setattr__(self, "t_f", float(self.t_f))

    @property
    def degree(self) -> int:
        return self.control_points.shape[0] - 1

    @property
    def hodograph(self) -> np.ndarray:
        """Control points of d p_d / d gamma (already divided by t_f)."""
        P = self.control_points
        return self.degree * np.diff(P, axis=0) / self.t_f

    def _param(self, gamma: float) -> float:
        if gamma < 0.0 or gamma > self.t_f:
            warnings.warn(f"virtual time {gamma} clamped to [0, {self.t_f}]", stacklevel=3)
            gamma = min(max(gamma, 0.0), self.t_f)
        return gamma / self.t_f

    def position(self, gamma: float) -> np.ndarray:
        return de_casteljau(self.control_points, self._param(gamma))

    def velocity(self, gamma: float) -> np.ndarray:
        return de_casteljau(self.hodograph, self._param(gamma))

    def to_dict(self) -> dict:
        return {"control_points": self.control_points.tolist(), "t_f": self.t_f}


def bezier_eval(traj: BezierTrajectory, gamma: float) -> np.ndarray:
    return traj.position(gamma)


def bezier_velocity(traj: BezierTrajectory, gamma: float) -> np.ndarray:
    return traj.velocity(gamma)


def bernstein_eval(points: np.ndarray, s: float) -> np.ndarray:
    """Power-basis evaluation, kept as an independent check on de Casteljau."""
    P = np.asarray(points, dtype=float)
    m = P.shape[0] - 1
    k = np.arange(m + 1)
    w = comb(m, k) * s ** k * (1 - s) ** (m - k)
    return w @ P


class TrajectoryBank:
    """All agents' trajectories stacked for batched evaluation.

    Curves are degree-elevated to a common degree, which is exact.
    """

    def __init__(self, trajectories):
        self.trajectories = list(trajectories)
        t_fs = {t.t_f for t in self.trajectories}
        if len(t_fs) != 1:
            raise TrajectoryError(f"all trajectories must share t_f, got {sorted(t_fs)}")
        self.t_f = t_fs.pop()
        deg = max(t.degree for t in self.trajectories)
        self.points = np.stack([elevate_degree(t.control_points, deg - t.degree)
                                for t in self.trajectories])
        self.hodograph = deg * np.diff(self.points, axis=1) / self.t_f

    def evaluate(self, gamma: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Positions and d p_d / d gamma for every agent, shape (n, 3) each."""
        s = np.clip(gamma, 0.0, self.t_f) / self.t_f
        return de_casteljau(self.points, s), de_casteljau(self.hodograph, s)


class VehicleState(NamedTuple):
    position: np.ndarray
    velocity: np.ndarray


@dataclass(frozen=True)
class PFConfig:
    kp: float
    kd: float
    rho: float

    def __post_init__(self):
        if not (self.kp > 0 and self.kd > 0 and self.rho > 0):
            raise ValueError("kp, kd and rho must be > 0")


def pf_error(v: VehicleState, traj: BezierTrajectory, gamma: float) -> np.ndarray:
    return np.asarray(v.position, dtype=float) - traj.position(gamma)


def pf_acceleration(p, vel, p_d, v_d, gamma_dot, cfg: PFConfig):
    """Commanded acceleration of the surrogate; works on (3,) or (n, 3) arrays."""
    gd = np.asarray(gamma_dot, dtype=float)
    if gd.ndim:
        gd = gd[:, None]
    return -cfg.kp * (p - p_d) - cfg.kd * (vel - v_d * gd)


def pf_surrogate_step(v: VehicleState, traj: BezierTrajectory, gamma: float,
                      gamma_dot: float, cfg: PFConfig, dt: float) -> VehicleState:
    """One RK4 step of the double integrator tracking p_d(gamma(t)).

    The virtual time advances at the constant rate ``gamma_dot`` over the
    step.
    """
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")

    def f(tau, p, vel):
        g = gamma + gamma_dot * tau
        acc = pf_acceleration(p, vel, traj.position(g), traj.velocity(g), gamma_dot, cfg)
        return vel, acc

    p0 = np.asarray(v.position, dtype=float)
    v0 = np.asarray(v.velocity, dtype=float)
    k1p, k1v = f(0.0, p0, v0)
    k2p, k2v = f(dt / 2, p0 + dt / 2 * k1p, v0 + dt / 2 * k1v)
    k3p, k3v = f(dt / 2, p0 + dt / 2 * k2p, v0 + dt / 2 * k2v)
    k4p, k4v = f(dt, p0 + dt * k3p, v0 + dt * k3v)
    p1 = p0 + dt / 6 * (k1p + 2 * k2p + 2 * k3p + k4p)
    v1 = v0 + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return VehicleState(p1, v1)
