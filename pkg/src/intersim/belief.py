"""Particle belief over the joint state, with conjugate kernel updates.

Kinematic and control dimensions use Gaussian kernels: on each observation a
particle's value shifts toward the observed value by the Kalman gain implied
by the kernel bandwidth, and its weight picks up the Gaussian marginal
likelihood.  Signal dimensions use Beta pseudo-counts: a positive observation
adds a large count, a negative one a small count, so positive signals are
remembered far longer than they take to build up.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .config import BeliefConfig, NoiseConfig
from .model import EPS_OPEN, TransitionModel, truncnorm_sample
from .states import StateCloud
from .vehicle import IV

log = logging.getLogger(__name__)


class DegenerateBeliefError(RuntimeError):
    """All particle weights collapsed to zero."""


@dataclass
class SignalBelief:
    """Beta pseudo-counts over one signal dimension of one other agent."""

    alpha: float = 1.0
    beta: float = 1.0

    @property
    def mean(self) -> float:
        return self.alpha / (self.alpha + self.beta)


def signal_posterior_update(sb: SignalBelief, observed: int,
                            pos_pseudo: float = 8.0,
                            neg_pseudo: float = 0.15) -> SignalBelief:
    """Conjugate update of a signal belief from one binary observation."""
    if observed:
        return SignalBelief(sb.alpha + pos_pseudo, sb.beta)
    return SignalBelief(sb.alpha, sb.beta + neg_pseudo)


def systematic_resample_indices(weights, rng) -> np.ndarray:
    """Systematic resampling: counts proportional to weights in expectation."""
    n = len(weights)
    positions = (np.arange(n) + rng.uniform()) / n
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, positions)


class ParticleBelief:
    """Weighted particle cloud owned by one agent."""

    def __init__(self, cloud: StateCloud, owner: int, counts=None):
        self.cloud = cloud
        self.owner = owner
        n = cloud.batch_shape[0]
        self.log_w = np.full(n, -np.log(n))
        # Beta pseudo-counts per (agent, signal dim, alpha/beta)
        if counts is None:
            counts = np.ones((cloud.n_agents, 2, 2))
        self.counts = counts

    # -- basic accessors ----------------------------------------------------
    @property
    def n(self) -> int:
        return self.cloud.batch_shape[0]

    def weights(self) -> np.ndarray:
        m = np.max(self.log_w)
        if not np.isfinite(m):
            raise DegenerateBeliefError("all particle weights are zero")
        w = np.exp(self.log_w - m)
        s = w.sum()
        if s <= 0 or not np.isfinite(s):
            raise DegenerateBeliefError("all particle weights are zero")
        return w / s

    def normalize(self) -> None:
        w = self.weights()
        self.log_w = np.log(w)

    def ess(self) -> float:
        w = self.weights()
        return float(1.0 / np.sum(w * w))

    def estimate(self, f) -> float:
        """Weighted expectation of ``f(cloud) -> (N,)`` under the belief."""
        vals = np.asarray(f(self.cloud), float)
        return float(np.sum(self.weights() * vals))

    def mean_kin(self) -> np.ndarray:
        w = self.weights()
        return np.einsum("n,nad->ad", w, self.cloud.kin)

    def mean_ctrl(self) -> np.ndarray:
        w = self.weights()
        return np.einsum("n,nad->ad", w, self.cloud.ctrl)

    def signal_mean(self, agent: int, dim: int) -> float:
        a, b = self.counts[agent, dim]
        return float(a / (a + b))

    def own_flag_prob(self, flag: str) -> float:
        arr = getattr(self.cloud, flag)[:, self.owner]
        return float(np.sum(self.weights() * arr))

    def copy(self) -> "ParticleBelief":
        out = ParticleBelief(self.cloud.copy(), self.owner, self.counts.copy())
        out.log_w = self.log_w.copy()
        return out

    # -- particle-filter steps ----------------------------------------------
    def resample(self, rng) -> None:
        idx = systematic_resample_indices(self.weights(), rng)
        self.cloud = self.cloud.take(idx)
        self.log_w = np.full(self.n, -np.log(self.n))

    def predict(self, ego_ctrl, ego_sig, tail_ctrl, tm: TransitionModel,
                rng) -> None:
        """Advance every particle one model step and fold in the norm weight."""
        nxt, w = tm.sample(self.cloud, self.owner, ego_ctrl, ego_sig,
                           tail_ctrl, rng)
        self.cloud = nxt
        with np.errstate(divide="ignore"):
            self.log_w = self.log_w + np.log(w)
        self.normalize()

    def update(self, obs: StateCloud, tm: TransitionModel, bcfg: BeliefConfig,
               rng) -> None:
        """Condition the belief on one observation of the true state."""
        noise = tm.noise
        try:
            w_before = self.weights()
        except DegenerateBeliefError:
            self._reinitialize(obs, noise, rng)
            return
        silverman = (4.0 / (3.0 * self.n)) ** 0.2

        for arr, obs_arr, sig_obs, floor in (
                (self.cloud.kin, obs.kin, np.asarray(noise.sigma_x_obs, float),
                 self._kin_floor(tm)),
                (self.cloud.ctrl, obs.ctrl, np.asarray(noise.sigma_u_obs, float),
                 self._ctrl_floor(tm))):
            mean = np.einsum("n,nad->ad", w_before, arr)
            var = np.einsum("n,nad->ad", w_before, (arr - mean) ** 2)
            band = np.maximum(silverman * np.sqrt(var),
                              floor * bcfg.bandwidth_floor_scale)
            tot_var = np.maximum(band ** 2 + sig_obs ** 2, 1e-24)
            diff = obs_arr - arr
            self.log_w = self.log_w + np.sum(
                -0.5 * diff * diff / tot_var
                - 0.5 * np.log(2.0 * np.pi * tot_var), axis=(-2, -1))
            gain = band ** 2 / tot_var
            arr += gain * diff

        # signal dimensions: Beta counts for other agents, exact for self
        for agent in range(self.cloud.n_agents):
            if agent == self.owner:
                self.cloud.sig[:, agent, :] = obs.sig[agent]
                continue
            for dim in range(2):
                bit = int(obs.sig[agent, dim] > 0.5)
                a, b = self.counts[agent, dim]
                sb = signal_posterior_update(SignalBelief(a, b), bit,
                                             bcfg.pos_pseudo, bcfg.neg_pseudo)
                self.counts[agent, dim] = (sb.alpha, sb.beta)
                self.cloud.sig[:, agent, dim] = truncnorm_sample(
                    rng, np.full(self.n, sb.mean), noise.sigma_signal_update)

        try:
            self.normalize()
        except DegenerateBeliefError:
            self._reinitialize(obs, noise, rng)
            return
        if self.ess() < bcfg.resample_frac * self.n:
            self.resample(rng)

    def _kin_floor(self, tm: TransitionModel):
        floor = np.empty((self.cloud.n_agents, 5))
        for w in range(self.cloud.n_agents):
            floor[w] = (tm.noise.sigma_x_ego if w == self.owner
                        else tm.noise.sigma_x_ov)
        return floor

    def _ctrl_floor(self, tm: TransitionModel):
        floor = np.zeros((self.cloud.n_agents, 2))
        for w in range(self.cloud.n_agents):
            if w != self.owner:
                floor[w] = tm.noise.sigma_u_ov
        return floor

    def _reinitialize(self, obs: StateCloud, noise: NoiseConfig, rng) -> None:
        log.warning("degenerate belief of agent %d: reinitializing from the "
                    "current observation", self.owner)
        fresh = initial_belief(obs, self.owner, noise, self.n, rng,
                               counts=self.counts)
        self.cloud = fresh.cloud
        self.log_w = fresh.log_w


def initial_belief(world: StateCloud, owner: int, noise: NoiseConfig, n: int,
                   rng, counts=None) -> ParticleBelief:
    """Particles concentrated on the true state with observation-noise spread."""
    cloud = world.tile(n)
    cloud.kin += rng.standard_normal(cloud.kin.shape) * np.asarray(
        noise.sigma_x_obs, float)
    cloud.kin[..., IV] = np.maximum(cloud.kin[..., IV], 0.0)
    cloud.ctrl += rng.standard_normal(cloud.ctrl.shape) * np.asarray(
        noise.sigma_u_obs, float)
    for agent in range(cloud.n_agents):
        if agent == owner:
            continue
        if counts is None:
            cloud.sig[:, agent, :] = rng.uniform(
                EPS_OPEN, 1.0 - EPS_OPEN, size=(n, 2))
        else:
            for dim in range(2):
                a, b = counts[agent, dim]
                cloud.sig[:, agent, dim] = truncnorm_sample(
                    rng, np.full(n, a / (a + b)), noise.sigma_signal_update)
    return ParticleBelief(cloud, owner, counts=counts)


def estimate(bel: ParticleBelief, f) -> float:
    return bel.estimate(f)
