import numpy as np
import pytest
from scipy.optimize import brentq

from intersim.belief import initial_belief
from intersim.config import SimConfig
from intersim.model import TransitionModel
from intersim.planner import (Policy, SurpriseState, accumulate_and_select,
                              bernoulli_entropy, cem_optimize, evaluate_efe,
                              g_prompt, rollout_policies, select_signals)
from intersim.preference import ALL_KEYS, PreferenceModel
from intersim.states import Scenario
from intersim.vehicle import IA, IOMEGA, IV


def build(zero_noise=True, n=40, seed=0, **norms):
    cfg = SimConfig()
    for k, v in norms.items():
        setattr(cfg.norms, k, v)
    if zero_noise:
        cfg.noise.sigma_x_ego = (0, 0, 0, 0, 0)
        cfg.noise.sigma_x_ov = (0, 0, 0, 0, 0)
        cfg.noise.sigma_u_ov = (0, 0)
        cfg.noise.sigma_signal = 0.0
        cfg.noise.sigma_x_obs = (1e-9, 1e-9, 1e-9, 1e-9, 1e-9)
        cfg.noise.sigma_u_obs = (1e-9, 1e-9)
    scen = Scenario()
    tm = TransitionModel(cfg.noise, cfg.norms, cfg.vehicle, scen,
                         cfg.scenario.dt, cfg.norm_horizon_steps)
    pm = PreferenceModel(cfg.preference, cfg.norms, cfg.vehicle, scen)
    world = scen.initial_world(-60.0, -300.0, 10.0)  # no interaction in range
    rng = np.random.default_rng(seed)
    bel = initial_belief(world, 0, cfg.noise, n, rng)
    return cfg, tm, pm, world, bel, rng


# ---------------------------------------------------------------- g_prompt
def test_g_prompt_values():
    assert g_prompt(0.5, -0.125) == pytest.approx(np.log(2) - 0.125, abs=1e-9)
    assert g_prompt(0.5, -0.125) == pytest.approx(0.5681, abs=1e-4)
    assert g_prompt(1.0, -0.125) == pytest.approx(-0.125)
    assert g_prompt(0.0, -0.125) == pytest.approx(-0.125)


def test_g_prompt_zero_crossing_bisection():
    root = brentq(lambda p: g_prompt(p, -0.125), 1e-6, 0.5)
    assert root == pytest.approx(0.027, abs=0.003)
    upper = brentq(lambda p: g_prompt(p, -0.125), 0.5, 1 - 1e-6)
    assert upper == pytest.approx(1 - root, abs=1e-6)


def test_g_prompt_concave_symmetric():
    ps = np.linspace(0.01, 0.99, 99)
    vals = np.array([g_prompt(p, -0.125) for p in ps])
    assert np.allclose(vals, vals[::-1], atol=1e-12)
    second = np.diff(vals, 2)
    assert np.all(second < 0)
    assert ps[np.argmax(vals)] == pytest.approx(0.5, abs=0.011)


# ---------------------------------------------------------------- EFE parts
def test_ideal_predictions_give_h_times_max():
    cfg, tm, pm, world, bel, rng = build()
    cfg.norms.violation_prob = 1.0
    bel.cloud.sig[:] = 0.0
    pol = Policy(np.zeros((20, 2)))
    res = evaluate_efe(bel, pol, None, 0, tm, pm, cfg.planner, rng)
    assert res.g_prag == pytest.approx(20 * pm.max_log(), abs=1e-4)
    assert res.total == pytest.approx(-res.g_prag - res.g_epist)


def _collapse_kinematics(bel):
    bel.cloud.kin[:] = bel.cloud.kin[:1]
    bel.cloud.ctrl[:] = bel.cloud.ctrl[:1]


def test_signal_epistemic_zero_without_prompting():
    cfg, tm, pm, world, bel, rng = build()
    _collapse_kinematics(bel)
    bel.cloud.sig[:, 1, :] = 0.5
    pol = Policy(np.zeros((1, 2)))
    res = evaluate_efe(bel, pol, np.zeros((1, 2)), 0, tm, pm, cfg.planner, rng)
    assert abs(res.g_epist) < 1e-3


def test_signal_epistemic_ln2_when_prompting():
    cfg, tm, pm, world, bel, rng = build(n=2000)
    _collapse_kinematics(bel)
    bel.cloud.sig[:, 1, :] = np.array([0.001, 0.5])
    plan = np.array([[1.0, 0.0]])
    pol = Policy(np.zeros((1, 2)), plan)
    res = evaluate_efe(bel, pol, plan, 0, tm, pm, cfg.planner, rng)
    assert res.g_epist == pytest.approx(np.log(2), abs=0.05)


# ---------------------------------------------------------------- CEM
class QuadraticPreference:
    """Toy objective: log preference peaked at a constant acceleration."""

    def __init__(self, target=-2.0):
        self.target = target

    def components(self, obs, ego, rng=None):
        a = obs.ctrl[..., ego, IA]
        out = {k: np.zeros_like(a) for k in ALL_KEYS}
        out["accel"] = -25.0 * (a - self.target) ** 2
        return out

    def max_log(self):
        return 0.0


def test_cem_finds_quadratic_optimum():
    cfg, tm, pm, world, bel, rng = build(n=8)
    cfg.planner.use_kernels = False
    stub = QuadraticPreference(-2.0)
    pol = cem_optimize(bel, 10, 0, tm, stub, cfg.planner, cfg.vehicle,
                       np.random.default_rng(0))
    assert np.all(np.abs(pol.controls[:, IA] + 2.0) < 0.2)


def test_cem_steering_negligible_and_deterministic():
    cfg, tm, pm, world, bel, rng = build(zero_noise=False, n=30)
    p1 = cem_optimize(bel, 12, 0, tm, pm, cfg.planner, cfg.vehicle,
                      np.random.default_rng(11))
    p2 = cem_optimize(bel, 12, 0, tm, pm, cfg.planner, cfg.vehicle,
                      np.random.default_rng(11))
    assert np.array_equal(p1.controls, p2.controls)
    assert np.all(np.abs(p1.controls[:, IOMEGA]) < 0.01)


# ---------------------------------------------------------------- surprise
class FlatPreference:
    """Constant shortfall: every observation scores `level` below the max."""

    def __init__(self, level):
        self.level = level

    def components(self, obs, ego, rng=None):
        base = np.zeros(obs.batch_shape)
        out = {k: base.copy() for k in ALL_KEYS}
        out["speed"] = base + self.level
        return out

    def max_log(self):
        return 0.0


def test_surprise_accumulation_arithmetic():
    cfg, tm, pm, world, bel, rng = build(n=6)
    cfg.planner.use_kernels = False
    lam = cfg.planner.drift_rate
    assert 1e5 * lam == pytest.approx(0.1259, abs=2e-4)

    stub = FlatPreference(-5000.0)       # eps = 20 * 5000 = 1e5 per tick
    sur = SurpriseState(evidence=0.0, drift_rate=lam)
    remaining = np.zeros((19, 2))
    pol, sur2, replanned, diag = accumulate_and_select(
        sur, bel, remaining, 0, tm, stub, cfg.planner, cfg.vehicle, 20,
        np.random.default_rng(0))
    assert diag["epsilon"] == pytest.approx(1e5, rel=1e-9)
    assert sur2.evidence == pytest.approx(0.1259, abs=2e-4)
    assert not replanned
    # first 19 actions preserved by the extension
    assert np.array_equal(pol.controls[:19], remaining)

    sur3 = SurpriseState(evidence=0.95, drift_rate=lam)
    pol, sur4, replanned, _ = accumulate_and_select(
        sur3, bel, remaining, 0, tm, stub, cfg.planner, cfg.vehicle, 20,
        np.random.default_rng(0))
    assert replanned
    assert sur4.evidence == 0.0


def test_epsilon_zero_for_ideal_predictions():
    cfg, tm, pm, world, bel, rng = build(n=10)
    cfg.norms.violation_prob = 1.0
    bel.cloud.sig[:] = 0.0
    sur = SurpriseState(evidence=0.0, drift_rate=cfg.planner.drift_rate)
    pol, sur2, replanned, diag = accumulate_and_select(
        sur, bel, np.zeros((20, 2)), 0, tm, pm, cfg.planner, cfg.vehicle, 20,
        rng)
    assert diag["epsilon"] == pytest.approx(0.0, abs=1e-3)
    assert not replanned


def test_epsilon_nonnegative_under_noise():
    cfg, tm, pm, world, bel, rng = build(zero_noise=False, n=40,
                                         stop_signs=True, priority_rule=True,
                                         communication=True)
    sur = SurpriseState(drift_rate=cfg.planner.drift_rate)
    remaining = np.zeros((19, 2))
    remaining[:, IA] = -0.5
    for _ in range(5):
        pol, sur, _, diag = accumulate_and_select(
            sur, bel, remaining, 0, tm, pm, cfg.planner, cfg.vehicle, 20, rng)
        assert diag["epsilon"] >= 0.0
        bel.predict(pol.controls[0], np.zeros(2), pol.controls[1:], tm, rng)
        remaining = pol.controls[1:]


# ---------------------------------------------------------------- signals
def test_select_signals_prompt_when_uncertain():
    cfg, tm, pm, world, bel, rng = build(communication=True)
    bel.counts[1] = [[1.0, 1.0], [1.0, 1.0]]       # yield mean 0.5
    bel.cloud.h[:, 0] = True
    got = select_signals(bel, 0, cfg.preference, cfg.norms,
                         ego_arrives_second=False)
    assert got == (1, 0)


def test_select_signals_answers_prompt_with_yield():
    cfg, tm, pm, world, bel, rng = build(communication=True)
    bel.counts[1, 0] = (25.0, 1.0)     # other believed prompting
    bel.counts[1, 1] = (1.0, 8.0)      # low yield uncertainty -> no prompt
    got = select_signals(bel, 0, cfg.preference, cfg.norms,
                         ego_arrives_second=True)
    assert got[1] == 1


def test_select_signals_never_yields_with_priority():
    cfg, tm, pm, world, bel, rng = build(communication=True,
                                         priority_rule=True, stop_signs=True)
    bel.counts[1, 0] = (25.0, 1.0)
    bel.cloud.p[:, 0] = True
    bel.cloud.h[:, 0] = True
    got = select_signals(bel, 0, cfg.preference, cfg.norms,
                         ego_arrives_second=True)
    assert got[1] == 0


def test_select_signals_silent_without_communication():
    cfg, tm, pm, world, bel, rng = build()
    assert select_signals(bel, 0, cfg.preference, cfg.norms, False) == (0, 0)


def test_prestop_cost_blocks_early_prompt():
    cfg, tm, pm, world, bel, rng = build(communication=True, stop_signs=True,
                                         priority_rule=True)
    bel.counts[1] = [[1.0, 1.0], [1.0, 1.0]]
    bel.cloud.h[:, 0] = False          # not yet stopped: 10x signal cost
    got = select_signals(bel, 0, cfg.preference, cfg.norms,
                         ego_arrives_second=False)
    assert got == (0, 0)               # 1.25 > ln 2
