import numpy as np
import pytest

from intersim.config import SimConfig
from intersim.preference import (PreferenceModel, log_base_components,
                                 log_comm_components, log_norm_components,
                                 log_preference)
from intersim.states import Scenario
from intersim.vehicle import IA, IV


def build(**norms):
    cfg = SimConfig()
    for k, v in norms.items():
        setattr(cfg.norms, k, v)
    pm = PreferenceModel(cfg.preference, cfg.norms, cfg.vehicle, Scenario())
    return cfg, pm


def ideal_obs(dA=-60.0, dB=-120.0):
    """Well separated, on-lane, preferred speed, zero controls, compliant."""
    w = Scenario().initial_world(dA, dB, 10.0)
    return w


def test_ideal_observation_attains_max():
    cfg, pm = build()
    obs = ideal_obs()
    val = pm.log_pref(obs, 0)
    assert val == pytest.approx(pm.max_log(), abs=1e-9)
    # any perturbation strictly lowers the value
    worse = ideal_obs()
    worse.kin[0, IV] = 9.0
    assert pm.log_pref(worse, 0) < val - 1.0
    worse2 = ideal_obs()
    worse2.ctrl[0, IA] = 1.0
    assert pm.log_pref(worse2, 0) < val - 1.0


def test_signal_cost_example():
    cfg, pm = build(communication=True)
    obs = ideal_obs(dA=-120.0, dB=-60.0)   # ego clearly arrives second
    obs.sig[0] = (1.0, 1.0)
    val = pm.log_pref(obs, 0)
    assert val == pytest.approx(pm.max_log() + 2 * cfg.preference.g_signal,
                                abs=1e-9)
    assert val == pytest.approx(pm.max_log() - 0.25, abs=1e-9)


def test_stop_violation_example():
    cfg, pm = build(stop_signs=True)
    obs = ideal_obs(dA=-2.0, dB=-120.0)
    obs.h[0] = False
    val = pm.log_pref(obs, 0)
    assert val == pytest.approx(pm.max_log() - 10000.0, abs=1e-6)


def test_speed_limit_component_values():
    cfg, pm = build()
    obs = ideal_obs()
    obs.kin[0, IV] = 11.0
    comps = pm.norm_components(obs, 0)
    assert comps["speed_limit"] == pytest.approx(-10000.0 / 4.2, rel=1e-9)
    obs.kin[0, IV] = 10.2
    comps = pm.norm_components(obs, 0)
    assert comps["speed_limit"] == 0.0


def test_priority_component_example():
    cfg, pm = build(priority_rule=True, stop_signs=True)
    obs = ideal_obs(dA=-3.5, dB=-10.0)
    obs.h[0] = True      # stopped already; isolate the priority term
    obs.p[0] = False
    comps = pm.norm_components(obs, 0)
    assert comps["priority"] == pytest.approx(-5000.0)
    obs.p[0] = True
    assert pm.norm_components(obs, 0)["priority"] == 0.0


def test_comm_cost_multiplier_before_stop():
    cfg, pm = build(communication=True, stop_signs=True, priority_rule=True)
    obs = ideal_obs(dA=-30.0, dB=-10.0)
    obs.sig[0] = (1.0, 0.0)
    obs.h[0] = True
    comps = pm.comm_components(obs, 0)
    assert comps["comm"] == pytest.approx(-0.125)
    obs.h[0] = False
    comps = pm.comm_components(obs, 0)
    assert comps["comm"] == pytest.approx(-1.25)


def test_uncooperative_yield_with_priority():
    cfg, pm = build(communication=True, stop_signs=True, priority_rule=True)
    obs = ideal_obs(dA=-30.0, dB=-40.0)
    obs.sig[0] = (0.0, 1.0)
    obs.p[0] = True
    obs.h[0] = True
    comps = pm.comm_components(obs, 0)
    assert comps["coop"] == pytest.approx(-10000.0)


def test_unanswered_prompt_penalty_uses_sigmoid_priority():
    cfg, pm = build(communication=True)
    obs = ideal_obs(dA=-80.0, dB=-20.0)   # ego far behind: arrives second
    obs.sig[1, 0] = 1.0                   # other prompting, ego silent
    rng = np.random.default_rng(0)
    comps = pm.comm_components(obs, 0, rng)
    assert comps["coop"] == pytest.approx(-10000.0)
    # yielding clears the penalty (cost moves to the comm term)
    obs.sig[0, 1] = 1.0
    comps = pm.comm_components(obs, 0, rng)
    assert comps["coop"] == 0.0


def test_decomposition_matches_total():
    cfg = SimConfig()
    cfg.norms.communication = True
    cfg.norms.stop_signs = True
    cfg.norms.priority_rule = True
    pm = PreferenceModel(cfg.preference, cfg.norms, cfg.vehicle, Scenario())
    rng = np.random.default_rng(3)
    w = Scenario().initial_world(-20, -18, 9).tile(64)
    w.kin += rng.normal(0, 4.0, w.kin.shape)
    w.ctrl += rng.normal(0, 1.0, w.ctrl.shape)
    w.sig = rng.uniform(0, 1, w.sig.shape).round()
    w.h = rng.uniform(size=w.h.shape) < 0.5
    w.p = rng.uniform(size=w.p.shape) < 0.5
    args = (cfg.preference, cfg.norms, cfg.vehicle, Scenario())
    total = log_preference(w, 0, *args, rng=np.random.default_rng(5))
    parts = (log_base_components(w, 0, *args)
             + log_norm_components(w, 0, *args)
             + log_comm_components(w, 0, *args, rng=np.random.default_rng(5)))
    assert np.allclose(total, parts)
    assert np.all(np.isfinite(total))


def test_speed_penalty_monotone():
    cfg, pm = build()
    vals = []
    for v in (10.4, 10.8, 11.5, 12.5):
        obs = ideal_obs()
        obs.kin[0, IV] = v
        vals.append(pm.norm_components(obs, 0)["speed_limit"])
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_mirror_equivariance_of_components():
    cfg, pm = build(stop_signs=True, priority_rule=True, communication=True)
    scen = Scenario()
    w = scen.initial_world(-17.0, -23.0, 8.0)
    w.kin[1, IV] = 6.0
    w.sig[1, 1] = 1.0
    comps_a = pm.components(w, 0)

    m = scen.initial_world(-23.0, -17.0, 6.0)
    m.kin[0, IV] = 6.0
    m.kin[1, IV] = 8.0
    m.sig[0, 1] = 1.0
    comps_b = pm.components(m, 1)
    for key in comps_a:
        assert comps_a[key] == pytest.approx(comps_b[key], abs=1e-9), key
