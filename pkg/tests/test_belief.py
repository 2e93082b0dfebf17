import logging

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import minimize_scalar

from intersim.belief import (DegenerateBeliefError, ParticleBelief, SignalBelief,
                             estimate, initial_belief, signal_posterior_update,
                             systematic_resample_indices)
from intersim.config import SimConfig
from intersim.model import TransitionModel
from intersim.states import Scenario
from intersim.vehicle import IV, IX


def make_setup(n=50, seed=0, **noise):
    cfg = SimConfig()
    for k, v in noise.items():
        setattr(cfg.noise, k, v)
    scen = Scenario()
    tm = TransitionModel(cfg.noise, cfg.norms, cfg.vehicle, scen,
                         cfg.scenario.dt, cfg.norm_horizon_steps)
    world = scen.initial_world(-65, -65, 10)
    rng = np.random.default_rng(seed)
    bel = initial_belief(world, 0, cfg.noise, n, rng)
    return cfg, tm, world, bel, rng


# ------------------------------------------------------------- pseudo counts
def test_signal_posterior_update_examples():
    sb = signal_posterior_update(SignalBelief(1, 1), 1)
    assert (sb.alpha, sb.beta) == (9, 1)
    assert sb.mean == pytest.approx(0.9)
    sb = signal_posterior_update(SignalBelief(1, 1), 0)
    assert sb.beta == pytest.approx(1.15)
    assert sb.mean == pytest.approx(1 / 2.15)
    sb = signal_posterior_update(SignalBelief(9, 1), 0)
    assert sb.mean == pytest.approx(9 / 10.15)


def test_asymmetric_forgetting():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = rng.uniform(0.2, 12, 2)
        m = a / (a + b)
        up = signal_posterior_update(SignalBelief(a, b), 1).mean - m
        down = m - signal_posterior_update(SignalBelief(a, b), 0).mean
        assert up > down


def test_neg_pseudo_count_is_least_squares_match():
    """0.15 minimizes the L2 gap between (1-g)^M and 1-g^10 on [0, 1]."""

    def loss(M):
        val, _ = quad(lambda g: ((1 - g) ** M - (1 - g ** 10)) ** 2, 0, 1)
        return val

    res = minimize_scalar(loss, bounds=(0.01, 2.0), method="bounded")
    assert res.x == pytest.approx(0.15, abs=0.02)


# ------------------------------------------------------------- resampling
def test_resample_uniform_weights_keeps_counts():
    rng = np.random.default_rng(0)
    idx = systematic_resample_indices(np.full(64, 1 / 64), rng)
    counts = np.bincount(idx, minlength=64)
    assert np.all(np.abs(counts - 1) <= 1)


def test_resample_degenerate_weight():
    rng = np.random.default_rng(0)
    w = np.zeros(32)
    w[4] = 1.0
    idx = systematic_resample_indices(w, rng)
    assert np.all(idx == 4)


def test_resample_expected_counts():
    rng = np.random.default_rng(0)
    w = np.array([0.3, 0.5, 0.2])
    w = np.repeat(w / w.sum() / 1, 1)
    weights = np.array([0.3] + [0.7 / 99] * 99)
    counts = []
    for _ in range(10_000):
        idx = systematic_resample_indices(weights, rng)
        counts.append(np.sum(idx == 0))
    mean = np.mean(counts)
    sigma = np.sqrt(100 * 0.3 * 0.7)
    assert abs(mean - 30.0) < 3 * sigma


# ------------------------------------------------------------- estimates
def test_estimate_examples():
    cfg, tm, world, bel, rng = make_setup(n=8)
    val = float(world.kin[0, IX])
    bel.cloud.kin[:, 0, IX] = val
    assert bel.estimate(lambda c: c.kin[:, 0, IX]) == pytest.approx(val)

    bel2 = initial_belief(world, 0, cfg.noise, 2, rng)
    bel2.cloud.kin[0, 0, IX] = 0.0
    bel2.cloud.kin[1, 0, IX] = 1.0
    bel2.log_w = np.log([0.25, 0.75])
    assert bel2.estimate(lambda c: c.kin[:, 0, IX]) == pytest.approx(0.75)
    assert estimate(bel2, lambda c: (c.kin[:, 0, IX] > 0.5).astype(float)) == \
        pytest.approx(0.75)


def test_weights_normalized_after_operations():
    cfg, tm, world, bel, rng = make_setup(n=40)
    for _ in range(4):
        bel.predict(np.zeros(2), np.zeros(2), None, tm, rng)
        obs = world.copy()
        bel.update(obs, tm, cfg.belief, rng)
        assert np.exp(bel.log_w).sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(np.exp(bel.log_w) >= 0)


def test_single_particle_predict():
    cfg, tm, world, bel, rng = make_setup(n=1)
    bel.predict(np.zeros(2), np.zeros(2), None, tm, rng)
    assert np.exp(bel.log_w[0]) == pytest.approx(1.0)


# ------------------------------------------------------------- updates
def test_update_concentrates_on_matching_particle():
    cfg, tm, world, bel, rng = make_setup(
        n=3, sigma_x_obs=(1e-3, 1e-3, 1e-4, 1e-4, 1e-3),
        sigma_u_obs=(1e-3, 1e-4))
    # particle 1 sits exactly on the observation, the others far away
    for i, off in enumerate((5.0, 0.0, -7.0)):
        bel.cloud.kin[i] = world.kin
        bel.cloud.kin[i, :, IX] += off
        bel.cloud.ctrl[i] = 0.0
    bel.log_w[:] = np.log(1 / 3)
    bel.update(world.copy(), tm, cfg.belief, rng)
    # resampling may have run; the surviving particles all match the obs
    assert np.allclose(bel.cloud.kin[:, 0, IX], world.kin[0, IX], atol=0.05)


def test_update_moves_signal_belief_to_09():
    cfg, tm, world, bel, rng = make_setup(n=30)
    obs = world.copy()
    obs.sig[1, 1] = 1.0
    bel.update(obs, tm, cfg.belief, rng)
    assert bel.signal_mean(1, 1) == pytest.approx(0.9)
    assert np.all((bel.cloud.sig[:, 1, 1] > 0) & (bel.cloud.sig[:, 1, 1] < 1))


def test_signal_beliefs_stay_interior():
    cfg, tm, world, bel, rng = make_setup(n=20)
    obs = world.copy()
    for _ in range(50):
        obs.sig[1, :] = 1.0
        bel.update(obs, tm, cfg.belief, rng)
    assert 0 < bel.signal_mean(1, 1) < 1
    other = bel.cloud.sig[:, 1, :]
    assert np.all(other > 0) and np.all(other < 1)


def test_degenerate_belief_recovery(caplog):
    cfg, tm, world, bel, rng = make_setup(n=10)
    bel.log_w[:] = -np.inf
    with caplog.at_level(logging.WARNING):
        bel.update(world.copy(), tm, cfg.belief, rng)
    assert "reinitializing" in caplog.text
    assert np.exp(bel.log_w).sum() == pytest.approx(1.0, abs=1e-9)


def test_degenerate_weights_error_surface():
    cfg, tm, world, bel, rng = make_setup(n=5)
    bel.log_w[:] = -np.inf
    with pytest.raises(DegenerateBeliefError):
        bel.weights()


# ------------------------------------------------------------- Kalman oracle
def _kalman_filter(obs_seq, x0, P0, Q, R):
    """Scalar random-walk Kalman filter (independent oracle)."""
    means, variances = [], []
    x, P = x0, P0
    for z in obs_seq:
        P = P + Q
        K = P / (P + R)
        x = x + K * (z - x)
        P = (1 - K) * P
        means.append(x)
        variances.append(P)
    return np.array(means), np.array(variances)


def test_particle_filter_tracks_kalman_oracle():
    sx = 0.3     # transition std on the x dimension
    so = 0.4     # observation std
    cfg, tm, world, bel, rng = make_setup(
        n=400, seed=3,
        sigma_x_ego=(sx, 0, 0, 0, 0), sigma_x_ov=(sx, 0, 0, 0, 0),
        sigma_u_ov=(0, 0), sigma_x_obs=(so, 1e-6, 1e-6, 1e-6, 1e-6),
        sigma_u_obs=(1e-6, 1e-6))
    cfg.norms.violation_prob = 1.0
    tm = TransitionModel(cfg.noise, cfg.norms, cfg.vehicle, Scenario(),
                         cfg.scenario.dt, cfg.norm_horizon_steps)
    world.kin[:, IV] = 0.0        # static vehicles: x evolves only via noise
    bel = initial_belief(world, 0, cfg.noise, 400, rng)

    truth_rng = np.random.default_rng(99)
    x_true = world.kin[0, IX]
    obs_seq = []
    pf_means = []
    for _ in range(50):
        x_true = x_true + truth_rng.normal(0, sx)
        z = x_true + truth_rng.normal(0, so)
        obs_seq.append(z)
        bel.predict(np.zeros(2), np.zeros(2), None, tm, rng)
        obs = world.copy()
        obs.kin[0, IX] = z
        bel.update(obs, tm, cfg.belief, rng)
        pf_means.append(bel.mean_kin()[0, IX])

    kf_means, kf_vars = _kalman_filter(obs_seq, world.kin[0, IX],
                                       cfg.noise.sigma_x_obs[0] ** 2,
                                       sx ** 2, so ** 2)
    se = np.sqrt(kf_vars) / np.sqrt(bel.ess())
    err = np.abs(np.array(pf_means) - kf_means)
    # per-step comparison at 3 Monte Carlo standard errors, plus a small
    # allowance for the kernel-bandwidth regularization bias
    assert np.mean(err <= 3 * se + 0.05) > 0.9
    assert err[-10:].mean() < 3 * np.sqrt(kf_vars[-10:]).mean()
