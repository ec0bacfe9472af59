import numpy as np
import pytest

from etcoord.scenario import ScenarioConfig, build_default_scenario_dict, default_scenario
from etcoord.sim import run_scenario


@pytest.fixture(scope="session")
def default_cfg():
    return default_scenario()


@pytest.fixture(scope="session")
def default_trace(default_cfg):
    return run_scenario(default_cfg)


def line_scenario(n=3, **over):
    """Straight constant-speed trajectories; zero PF error stays zero."""
    d = build_default_scenario_dict()
    d["n"] = n
    d["trajectories"] = [
        {"control_points": [[10.0 * i, 0.0, 0.0], [10.0 * i, 50.0, 0.0],
                            [10.0 * i, 100.0, 0.0], [10.0 * i, 150.0, 0.0]], "t_f": 21.1}
        for i in range(n)
    ]
    d["schedule"] = {"cyclic": True, "segments": [
        {"duration_s": 0.03, "edges": [[i % n + 1, (i - 1) % n + 1] for i in range(1, n + 1)]}]}
    d["initial"] = {"gamma": [0.0] * n, "gamma_dot": [1.0] * n,
                    "position_offsets": [[0.0, 0.0, 0.0]] * n}
    d["t_end"] = 2.0
    for k, v in over.items():
        node = d
        parts = k.split("__")
        for p in parts[:-1]:
            node = node[p]
        node[parts[-1]] = v
    return ScenarioConfig.from_dict(d)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
