"""Scenario files: parsing, validation, dotted-key overrides and the default mission.

A scenario is a JSON object with ``"schema": 1``. Parsing is strict: unknown
keys are reported and rejected.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .coordination import Gains, RateProfile, TriggerConfig
from .graph import Digraph, NetworkSchedule
from .vehicle import BezierTrajectory, PFConfig

SCHEMA_VERSION = 1


class ScenarioError(ValueError):
    """Scenario file failed validation."""


# Nested key layout; leaves are "required" or a default value.
_REQ = object()
_LAYOUT: dict[str, Any] = {
    "schema": _REQ,
    "name": "scenario",
    "n": _REQ,
    "gains": {"a": _REQ, "b": _REQ, "eta": _REQ},
    "trigger": {"c1": _REQ, "c2": 0.0, "decay_rate": 0.0},
    "schedule": {"cyclic": True, "segments": _REQ},
    "qos": {"T": _REQ, "delta": _REQ},
    "trajectories": _REQ,
    "pf": {"kp": _REQ, "kd": _REQ, "rho": _REQ},
    "initial": {"gamma": _REQ, "gamma_dot": _REQ, "position_offsets": None},
    "gamma_dot_d": [[0.0, 1.0]],
    "speed_envelope": {"v_min": 0.0, "v_max": 13.0},
    "disturbance": {"accel_amplitude": 0.0},
    "communication": "event",
    "waive_connectivity": False,
    "dt": 1e-3,
    "t_end": _REQ,
    "seed": 0,
}
_SEGMENT_KEYS = {"duration_s", "edges"}
_TRAJ_KEYS = {"control_points", "t_f"}


def _fill(layout: dict, data: dict, path: str, unknown: list, missing: list) -> dict:
    if not isinstance(data, dict):
        raise ScenarioError(f"{path or 'scenario'} must be an object")
    out = {}
    for key in data:
        if key not in layout:
            unknown.append(f"{path}{key}")
    for key, spec in layout.items():
        if isinstance(spec, dict):
            out[key] = _fill(spec, data.get(key, {}), f"{path}{key}.", unknown, missing)
        elif key in data:
            out[key] = data[key]
        elif spec is _REQ:
            missing.append(f"{path}{key}")
        else:
            out[key] = copy.deepcopy(spec)
    return out


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    n: int
    gains: Gains
    trigger: TriggerConfig
    schedule: NetworkSchedule
    qos_T: float
    qos_delta: float
    trajectories: tuple  # of BezierTrajectory
    pf: PFConfig
    gamma0: tuple
    gamma_dot0: tuple
    position_offsets: tuple  # n x 3
    gamma_dot_d: tuple  # of (t_start, value)
    v_min: float
    v_max: float
    accel_amplitude: float
    communication: str
    waive_connectivity: bool
    dt: float
    t_end: float
    seed: int

    def __eq__(self, other):
        if not isinstance(other, ScenarioConfig):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    __hash__ = None

    @property
    def pace(self) -> RateProfile:
        return RateProfile(self.gamma_dot_d)

    @property
    def t_f(self) -> float:
        return self.trajectories[0].t_f

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        unknown, missing = [], []
        d = _fill(_LAYOUT, data, "", unknown, missing)
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        if missing:
            raise ScenarioError(f"missing scenario keys: {', '.join(sorted(missing))}")
        if d["schema"] != SCHEMA_VERSION:
            raise ScenarioError(f"unsupported schema {d['schema']!r}, expected {SCHEMA_VERSION}")
        try:
            return cls._build(d)
        except ScenarioError:
            raise
        except (ValueError, TypeError, KeyError, IndexError) as exc:
            raise ScenarioError(str(exc)) from exc

    @classmethod
    def _build(cls, d: dict) -> "ScenarioConfig":
        n = d["n"]
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ScenarioError(f"n must be a positive integer, got {n!r}")

        segments = []
        for k, seg in enumerate(d["schedule"]["segments"]):
            extra = set(seg) - _SEGMENT_KEYS
            if extra:
                raise ScenarioError(f"unknown scenario keys: "
                                    + ", ".join(f"schedule.segments.{k}.{e}" for e in sorted(extra)))
            edges = frozenset(tuple(e) for e in seg["edges"])
            segments.append((float(seg["duration_s"]), Digraph(n, edges)))
        schedule = NetworkSchedule(tuple(segments), bool(d["schedule"]["cyclic"]))

        trajs = []
        for k, tr in enumerate(d["trajectories"]):
            extra = set(tr) - _TRAJ_KEYS
            if extra:
                raise ScenarioError(f"unknown scenario keys: "
                                    + ", ".join(f"trajectories.{k}.{e}" for e in sorted(extra)))
            trajs.append(BezierTrajectory(tr["control_points"], float(tr["t_f"])))
        if len(trajs) != n:
            raise ScenarioError(f"expected {n} trajectories, got {len(trajs)}")
        if len({t.t_f for t in trajs}) != 1:
            raise ScenarioError("all trajectories must share the same t_f")

        init = d["initial"]
        gamma0 = tuple(float(x) for x in init["gamma"])
        gamma_dot0 = tuple(float(x) for x in init["gamma_dot"])
        offsets = init["position_offsets"]
        if offsets is None:
            offsets = [[0.0, 0.0, 0.0]] * n
        offsets = tuple(tuple(float(c) for c in row) for row in offsets)
        for label, vec in (("initial.gamma", gamma0), ("initial.gamma_dot", gamma_dot0),
                           ("initial.position_offsets", offsets)):
            if len(vec) != n:
                raise ScenarioError(f"{label} has length {len(vec)}, expected {n}")
        if any(len(row) != 3 for row in offsets):
            raise ScenarioError("initial.position_offsets rows must have 3 entries")

        pace = tuple((float(t), float(v)) for t, v in d["gamma_dot_d"])
        RateProfile(pace)

        dt, t_end = float(d["dt"]), float(d["t_end"])
        if not dt > 0:
            raise ScenarioError(f"dt must be > 0, got {dt}")
        if not t_end > 0:
            raise ScenarioError(f"t_end must be > 0, got {t_end}")
        T, delta = float(d["qos"]["T"]), float(d["qos"]["delta"])
        if not T > 0 or not delta > 0:
            raise ScenarioError("qos.T and qos.delta must be > 0")
        if delta > T:
            raise ScenarioError(f"qos.delta={delta} exceeds qos.T={T}")
        if d["communication"] not in ("event", "continuous"):
            raise ScenarioError(f"communication must be 'event' or 'continuous', "
                                f"got {d['communication']!r}")
        amp = float(d["disturbance"]["accel_amplitude"])
        if amp < 0:
            raise ScenarioError("disturbance.accel_amplitude must be >= 0")
        for key in ("seed",):
            if not isinstance(d[key], int) or isinstance(d[key], bool):
                raise ScenarioError(f"{key} must be an integer")

        return cls(
            name=str(d["name"]), n=n,
            gains=Gains(**{k: float(v) for k, v in d["gains"].items()}),
            trigger=TriggerConfig(**{k: float(v) for k, v in d["trigger"].items()}),
            schedule=schedule, qos_T=T, qos_delta=delta,
            trajectories=tuple(trajs),
            pf=PFConfig(**{k: float(v) for k, v in d["pf"].items()}),
            gamma0=gamma0, gamma_dot0=gamma_dot0, position_offsets=offsets,
            gamma_dot_d=pace,
            v_min=float(d["speed_envelope"]["v_min"]), v_max=float(d["speed_envelope"]["v_max"]),
            accel_amplitude=amp, communication=d["communication"],
            waive_connectivity=bool(d["waive_connectivity"]),
            dt=dt, t_end=t_end, seed=d["seed"],
        )

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION,
            "name": self.name,
            "n": self.n,
            "gains": {"a": self.gains.a, "b": self.gains.b, "eta": self.gains.eta},
            "trigger": {"c1": self.trigger.c1, "c2": self.trigger.c2,
                        "decay_rate": self.trigger.decay_rate},
            "schedule": {
                "cyclic": self.schedule.cyclic,
                "segments": [{"duration_s": dur, "edges": sorted([list(e) for e in g.edges])}
                             for dur, g in self.schedule.segments],
            },
            "qos": {"T": self.qos_T, "delta": self.qos_delta},
            "trajectories": [t.to_dict() for t in self.trajectories],
            "pf": {"kp": self.pf.kp, "kd": self.pf.kd, "rho": self.pf.rho},
            "initial": {"gamma": list(self.gamma0), "gamma_dot": list(self.gamma_dot0),
                        "position_offsets": [list(r) for r in self.position_offsets]},
            "gamma_dot_d": [list(p) for p in self.gamma_dot_d],
            "speed_envelope": {"v_min": self.v_min, "v_max": self.v_max},
            "disturbance": {"accel_amplitude": self.accel_amplitude},
            "communication": self.communication,
            "waive_connectivity": self.waive_connectivity,
            "dt": self.dt,
            "t_end": self.t_end,
            "seed": self.seed,
        }

    def with_overrides(self, overrides) -> "ScenarioConfig":
        return ScenarioConfig.from_dict(apply_overrides(self.to_dict(), overrides))


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ScenarioError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def apply_overrides(data: dict, overrides) -> dict:
    """Set dotted keys (``gains.b``, ``initial.gamma.2``) in a copy of ``data``.

    ``overrides`` is a list of ``key=value`` strings or (key, value) pairs.
    Keys that do not already exist are rejected.
    """
    out = copy.deepcopy(data)
    for item in overrides or ():
        key, value = parse_override(item) if isinstance(item, str) else item
        parts = key.split(".")
        node = out
        for depth, part in enumerate(parts):
            last = depth == len(parts) - 1
            if isinstance(node, list):
                try:
                    idx = int(part)
                    node[idx]
                except (ValueError, IndexError):
                    raise ScenarioError(f"unknown scenario key {key!r}") from None
                if last:
                    node[idx] = value
                else:
                    node = node[idx]
            elif isinstance(node, dict) and (part in node or _layout_has(parts[:depth + 1])):
                if last:
                    node[part] = value
                else:
                    node = node[part]
            else:
                raise ScenarioError(f"unknown scenario key {key!r}")
    return out


def _layout_has(parts) -> bool:
    node = _LAYOUT
    for p in parts:
        if not isinstance(node, dict) or p not in node:
            return False
        node = node[p]
    return True


def get_key(data: dict, key: str):
    node = data
    for part in key.split("."):
        try:
            node = node[int(part)] if isinstance(node, list) else node[part]
        except (KeyError, IndexError, ValueError):
            raise ScenarioError(f"unknown scenario key {key!r}") from None
    return node


def load_scenario(path, overrides=None) -> ScenarioConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from exc
    return ScenarioConfig.from_dict(apply_overrides(data, overrides))


def dump_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")


def default_scenario_path() -> Path:
    return Path(str(resources.files("etcoord") / "scenarios" / "default.json"))


def default_scenario() -> ScenarioConfig:
    return load_scenario(default_scenario_path())


def build_default_scenario_dict() -> dict:
    """Five-quadrotor mission over a switching directed 5-cycle.

    Starts lie on a pentagon in the (x, z) plane at y = 0; each vehicle ends
    at its neighbor's (x, z) on y = 150 m. Vehicles 3 and 5 start ahead of
    y = 0, vehicle 4 behind, vehicles 1 and 2 with lateral offsets only.
    """
    n, t_f, radius, z_mid, length = 5, 21.10, 15.0, 30.0, 150.0
    angles = np.pi / 2 + 2 * np.pi * np.arange(n) / n
    lateral = [(round(radius * math.cos(a), 6), round(z_mid + radius * math.sin(a), 6))
               for a in angles]
    trajectories = []
    for i in range(n):
        (x0, z0), (x1, z1) = lateral[i], lateral[(i + 1) % n]
        pts = [[x0, 0.0, z0], [x0, length / 3, z0], [x1, 2 * length / 3, z1], [x1, length, z1]]
        trajectories.append({"control_points": pts, "t_f": t_f})
    return {
        "schema": SCHEMA_VERSION,
        "name": "default",
        "n": n,
        "gains": {"a": 3.75, "b": 4.82, "eta": 12.0},
        "trigger": {"c1": 0.03, "c2": 0.0, "decay_rate": 0.0},
        "schedule": {
            "cyclic": True,
            "segments": [
                {"duration_s": 0.03, "edges": [[2, 1], [3, 2]]},
                {"duration_s": 0.03, "edges": [[4, 3], [5, 4]]},
                {"duration_s": 0.03, "edges": [[1, 5]]},
            ],
        },
        "qos": {"T": 0.09, "delta": 0.03},
        "trajectories": trajectories,
        "pf": {"kp": 1.0, "kd": 2.0, "rho": 4.0},
        "initial": {
            "gamma": [0.0] * n,
            "gamma_dot": [1.0] * n,
            "position_offsets": [[0.8, 0.0, 0.0], [0.0, 0.0, -0.8], [0.0, 1.5, 0.0],
                                 [0.0, -1.5, 0.0], [0.0, 1.5, 0.0]],
        },
        "gamma_dot_d": [[0.0, 1.0]],
        "speed_envelope": {"v_min": 0.0, "v_max": 13.0},
        "disturbance": {"accel_amplitude": 0.0},
        "communication": "event",
        "waive_connectivity": False,
        "dt": 1e-3,
        "t_end": 22.0,
        "seed": 0,
    }
