import json
from pathlib import Path

import numpy as np
import pytest

from etcoord.scenario import (
    ScenarioConfig, ScenarioError, apply_overrides, build_default_scenario_dict, default_scenario,
    default_scenario_path, dump_scenario, get_key, load_scenario, parse_override,
)
from etcoord.vehicle import TrajectoryBank

ROOT = Path(__file__).resolve().parents[1]


def test_bundled_file_matches_builder_and_repo_copy():
    bundled = json.loads(default_scenario_path().read_text())
    assert bundled == build_default_scenario_dict()
    assert default_scenario_path().read_bytes() == (ROOT / "scenarios" / "default.json").read_bytes()


def test_round_trip(tmp_path):
    cfg = default_scenario()
    dump_scenario(cfg, tmp_path / "s.json")
    assert load_scenario(tmp_path / "s.json") == cfg
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


def test_default_values(default_cfg):
    c = default_cfg
    assert c.n == 5 and c.t_f == 21.1
    assert (c.gains.a, c.gains.b, c.gains.eta) == (3.75, 4.82, 12.0)
    assert c.trigger.c1 == 0.03 and c.trigger.c2 == 0.0
    assert (c.qos_T, c.qos_delta) == (0.09, 0.03)
    assert c.schedule.cycle_duration == pytest.approx(0.09)
    assert [sorted(g.edges) for _, g in c.schedule.segments] == [
        [(2, 1), (3, 2)], [(4, 3), (5, 4)], [(1, 5)]]


def test_default_trajectories_keep_clearance(default_cfg):
    bank = TrajectoryBank(default_cfg.trajectories)
    worst = np.inf
    for g in np.linspace(0, default_cfg.t_f, 1000):
        p, _ = bank.evaluate(np.full(default_cfg.n, g))
        d = np.linalg.norm(p[:, None] - p[None], axis=-1) 
        d[np.diag_indices(default_cfg.n)] = np.inf
        worst = min(worst, d.min())
    assert worst >= 10.0


def test_unknown_and_missing_keys():
    d = build_default_scenario_dict()
    d["gains"]["zeta"] = 1.0
    with pytest.raises(ScenarioError, match="gains.zeta"):
        ScenarioConfig.from_dict(d)
    d = build_default_scenario_dict()
    del d["t_end"]
    with pytest.raises(ScenarioError, match="t_end"):
        ScenarioConfig.from_dict(d)
    d = build_default_scenario_dict()
    d["schedule"]["segments"][0]["weight"] = 2
    with pytest.raises(ScenarioError, match="schedule.segments.0.weight"):
        ScenarioConfig.from_dict(d)


@pytest.mark.parametrize("key,value", [
    ("schema", 2), ("n", 0), ("dt", 0.0), ("qos.delta", 0.2), ("communication", "radio"),
    ("gains.b", -1.0), ("trigger.c1", 0.0), ("initial.gamma", [0.0] * 4),
    ("disturbance.accel_amplitude", -1.0),
])
def test_invalid_values(key, value):
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict(apply_overrides(build_default_scenario_dict(), [(key, value)]))


def test_overrides():
    d = build_default_scenario_dict()
    out = apply_overrides(d, ["gains.b=5.5", "initial.gamma.2=0.25", "name=y"])
    assert out["gains"]["b"] == 5.5 and out["initial"]["gamma"][2] == 0.25
    assert out["name"] == "y"
    assert d["gains"]["b"] == 4.82  # input untouched
    with pytest.raises(ScenarioError):
        apply_overrides(d, ["gains.zeta=1"])
    with pytest.raises(ScenarioError):
        apply_overrides(d, ["initial.gamma.9=1"])
    with pytest.raises(ScenarioError):
        parse_override("gains.b")
    assert get_key(d, "trajectories.1.t_f") == 21.1


def test_no_op_override_keeps_config(default_cfg):
    assert default_cfg.with_overrides(["gains.b=4.82"]) == default_cfg


def test_load_errors(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "bad.json")
