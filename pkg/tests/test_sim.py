import numpy as np
import pytest

from conftest import line_scenario
from etcoord.graph import NetworkSchedule, complete_digraph, consensus_rate_constants, Digraph
from etcoord.analysis import check_consensus_envelope
from etcoord.sim import (
    ConnectivityError, NumericalError, active_edges, check_connectivity, run_consensus_reference,
    run_scenario,
)

SMOOTH = dict(initial__gamma=[0.5, 0.8, 0.2], initial__gamma_dot=[1.0, 1.2, 0.9],
              initial__position_offsets=[[0, 1.0, 0], [0, -0.5, 0], [0.3, 0, 0]], t_end=1.0)


def test_single_agent_follows_pace():
    cfg = line_scenario(1, schedule={"cyclic": True, "segments": [{"duration_s": 0.03, "edges": []}]})
    tr = run_scenario(cfg)
    np.testing.assert_allclose(tr.gamma[:, 0], tr.t, atol=1e-12)
    np.testing.assert_allclose(tr.gamma_dot[:, 0], 1.0, atol=1e-12)
    assert len(tr.events) == 1


def test_equilibrium_is_preserved():
    tr = run_scenario(line_scenario(3))
    assert tr.xi_norm.max() <= 1e-9
    assert tr.epf_stacked.max() <= 1e-9
    assert all(e.t_event == 0.0 for e in tr.events) and len(tr.events) == 3


def test_runs_are_deterministic():
    cfg = line_scenario(3, disturbance={"accel_amplitude": 0.5}, **SMOOTH)
    a, b = run_scenario(cfg), run_scenario(cfg)
    for name in ("gamma", "gamma_dot", "est_error", "e_pf", "xi_norm"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert [(e.agent, e.t_event) for e in a.events] == [(e.agent, e.t_event) for e in b.events]
    c = run_scenario(line_scenario(3, disturbance={"accel_amplitude": 0.5}, seed=1, **SMOOTH))
    assert not np.array_equal(a.e_pf, c.e_pf)


def test_rk4_convergence_order():
    # no events beyond the initial broadcast, so the right-hand side is smooth
    finals = []
    for dt in (2e-3, 1e-3, 5e-4):
        tr = run_scenario(line_scenario(3, dt=dt, trigger={"c1": 1e6}, **SMOOTH))
        assert len(tr.events) == 3
        finals.append(np.concatenate([tr.gamma[-1], tr.gamma_dot[-1]]))
    ratio = np.abs(finals[0] - finals[1]).max() / np.abs(finals[1] - finals[2]).max()
    assert ratio >= 8.0


def test_record_every_subsamples():
    cfg = line_scenario(3, **SMOOTH)
    full, sub = run_scenario(cfg), run_scenario(cfg, record_every=10)
    np.testing.assert_array_equal(sub.t, full.t[::10])
    np.testing.assert_array_equal(sub.gamma, full.gamma[::10])


def test_active_edges_at_switches(default_cfg):
    s = default_cfg.schedule
    assert active_edges(s, 0.0) == (frozenset({(2, 1), (3, 2)}), False)
    assert active_edges(s, 0.03)[0] == frozenset({(4, 3), (5, 4)})
    assert active_edges(s, 0.06)[0] == frozenset({(1, 5)})
    assert active_edges(s, 0.09)[0] == frozenset({(2, 1), (3, 2)})
    assert active_edges(s, 0.0299)[0] == frozenset({(2, 1), (3, 2)})


def test_noncyclic_schedule_overrun_flagged():
    seg = {"duration_s": 0.5, "edges": [[2, 1], [3, 2], [1, 3]]}
    tr = run_scenario(line_scenario(3, schedule={"cyclic": False, "segments": [seg]},
                                    qos={"T": 0.5, "delta": 0.5}))
    assert tr.diagnostics["schedule_overrun"]


def test_deliveries_reference_events(default_trace, default_cfg):
    sent = {(e.agent, e.t_event) for e in default_trace.events}
    assert default_trace.deliveries
    for sender, receiver, t_event, t_del in default_trace.deliveries:
        assert (sender, t_event) in sent
        assert t_del >= t_event
        edges, _ = active_edges(default_cfg.schedule, t_del)
        assert (receiver, sender) in edges


def test_default_mission_behaviour(default_trace, default_cfg):
    tr = default_trace
    assert all(a is not None for a in tr.arrival_times)
    assert max(tr.arrival_times) - min(tr.arrival_times) < 0.2
    # agents 3 and 5 start ahead of their desired point, agent 4 behind
    assert tr.gamma_ddot[0, 2] > 0 and tr.gamma_ddot[0, 4] > 0 and tr.gamma_ddot[0, 3] < 0
    assert tr.event_counts() == [2, 2, 7, 6, 5]
    # links switch, so receivers hold stale samples for part of each cycle
    assert tr.diagnostics["max_receiver_discrepancy"] > 0


def test_always_on_links_keep_receivers_in_sync():
    edges = [[i, j] for i in range(1, 4) for j in range(1, 4) if i != j]
    cfg = line_scenario(3, schedule={"cyclic": True, "segments": [{"duration_s": 0.03,
                                                                    "edges": edges}]},
                        trigger={"c1": 0.005}, **SMOOTH)
    tr = run_scenario(cfg)
    assert len(tr.events) > 3
    assert tr.diagnostics["max_receiver_discrepancy"] <= 1e-12


def test_event_mode_tracks_continuous_mode():
    cfg_e = line_scenario(3, trigger={"c1": 0.005}, t_end=3.0, **{k: v for k, v in SMOOTH.items()
                                                                 if k != "t_end"})
    cfg_c = cfg_e.with_overrides([("communication", "continuous")])
    te, tc = run_scenario(cfg_e), run_scenario(cfg_c)
    assert len(tc.events) == 3 and len(te.events) > 3
    assert np.abs(te.gamma - tc.gamma).max() < 0.05
    assert te.xi_norm[-1] < 0.25 * te.xi_norm[0] and tc.xi_norm[-1] < 0.25 * tc.xi_norm[0]


def test_numerical_failure_raises():
    with pytest.raises(NumericalError) as exc:
        run_scenario(line_scenario(3, dt=0.5, gains={"a": 3.75, "b": 200.0, "eta": 12.0},
                                   t_end=50.0, **{k: v for k, v in SMOOTH.items() if k != "t_end"}))
    assert exc.value.step > 0


def test_disconnected_schedule_rejected_unless_waived():
    seg = {"duration_s": 0.03, "edges": [[2, 1]]}
    cfg = line_scenario(3, schedule={"cyclic": True, "segments": [seg]})
    failing, windows = check_connectivity(cfg)
    assert failing and len(failing) == len(windows)
    with pytest.raises(ConnectivityError):
        run_scenario(cfg)
    run_scenario(cfg.with_overrides([("waive_connectivity", True)]))


def test_pace_change_is_tracked():
    tr = run_scenario(line_scenario(3, gamma_dot_d=[[0.0, 1.0], [1.0, 0.8]], t_end=20.0))
    assert tr.diagnostics["pace_reanchors"] == [1.0]
    np.testing.assert_allclose(tr.gamma_dot_d[tr.t >= 1.0], 0.8)
    # identical agents slow down together; the lag of the vehicles feeds back via alpha
    spread = tr.gamma.max(axis=1) - tr.gamma.min(axis=1)
    assert spread.max() <= 1e-9
    np.testing.assert_allclose(tr.gamma_dot[-1], 0.8, atol=1e-4)


def test_consensus_reference_fixed_points_and_rate():
    s = NetworkSchedule(((1.0, complete_digraph(4)),))
    ct = run_consensus_reference(s, 2.0, 4.0, np.full(4, 0.7), 1e-3, 1.0)
    np.testing.assert_allclose(ct.x, 0.7, atol=1e-15)
    x0 = np.array([1.0, -1.0, 0.5, 0.0])
    ct = run_consensus_reference(s, 2.0, 4.0, x0, 1e-3, 2.0)
    diam = ct.x.max(axis=1) - ct.x.min(axis=1)
    np.testing.assert_allclose(diam, 2.0 * np.exp(-4 * 0.5 * ct.t), rtol=1e-9)
    np.testing.assert_allclose(ct.x.mean(axis=1), x0.mean(), atol=1e-14)


def test_consensus_reference_splits_steps_at_switches():
    # switching inside a coarse step must match a fine step run
    g1, g2 = Digraph(2, {(1, 2)}), Digraph(2, {(2, 1)})
    s = NetworkSchedule(((0.015, g1), (0.025, g2)))
    coarse = run_consensus_reference(s, 1.0, 1.0, [1.0, 0.0], 0.01, 1.0)
    fine = run_consensus_reference(s, 1.0, 1.0, [1.0, 0.0], 0.0005, 1.0)
    np.testing.assert_allclose(coarse.x[-1], fine.x[-1], atol=1e-8)


def test_consensus_reference_respects_rate_bound(default_cfg, rng):
    c = default_cfg
    cr = consensus_rate_constants(c.gains.a, c.gains.b, c.qos_delta, c.qos_T, c.n)
    ct = run_consensus_reference(c.schedule, c.gains.a, c.gains.b, rng.uniform(-1, 1, c.n), 1e-3, 10.0)
    assert check_consensus_envelope(ct, cr.k, cr.lam).holds


def test_consensus_reference_batch_matches_single(default_cfg, rng):
    c = default_cfg
    X = rng.uniform(-1, 1, (4, c.n))
    batch = run_consensus_reference(c.schedule, c.gains.a, c.gains.b, X, 1e-3, 1.0)
    for m in range(4):
        one = run_consensus_reference(c.schedule, c.gains.a, c.gains.b, X[m], 1e-3, 1.0)
        np.testing.assert_allclose(batch.x[:, m], one.x, rtol=0, atol=1e-14)
    with pytest.raises(ValueError):
        run_consensus_reference(c.schedule, 1.0, 1.0, np.zeros(3), 1e-3, 1.0)
