"""Environment dynamics and each agent's probabilistic model of them.

The true process is deterministic given the agents' actions.  An agent's
internal model adds Gaussian transition noise, constant-control drift for the
other agent, signal dynamics, and a normative bias: sampled next states are
importance-weighted by the projected normative probability, which scores how
norm-compliant the other agent's behavior would remain if pursued over a
short rollout horizon.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtr, ndtri

from .config import NoiseConfig, NormConfig, VehicleConfig
from .states import ISIG_PROMPT, ISIG_YIELD, AgentAction, Scenario, StateCloud
from .vehicle import (IA, IDELTA, IOMEGA, ITH, IV, IX, IY, rollout_constant_like,
                      step_kinematics)

EPS_OPEN = 1e-9  # keeps continuous signal values strictly inside (0, 1)


def truncnorm_sample(rng, mean, std, lo=0.0, hi=1.0):
    """Truncated-normal draws on (lo, hi) via the inverse CDF; std may be 0."""
    mean = np.asarray(mean, float)
    if std == 0.0:
        return np.clip(mean, lo + EPS_OPEN, hi - EPS_OPEN)
    a = ndtr((lo - mean) / std)
    b = ndtr((hi - mean) / std)
    u = rng.uniform(size=mean.shape)
    q = np.clip(a + u * (b - a), 1e-12, 1.0 - 1e-12)
    x = mean + std * ndtri(q)
    return np.clip(x, lo + EPS_OPEN, hi - EPS_OPEN)


# ---------------------------------------------------------------------------
# flag dynamics
# ---------------------------------------------------------------------------

def stopped_flag_next(h_old, d_long_new, v_new, norms: NormConfig):
    """Monotone has-stopped update: standstill inside the stop window latches."""
    lo, hi = norms.stop_region
    trig = (d_long_new >= lo) & (d_long_new <= hi) & (v_new < norms.stop_speed)
    return h_old | trig


def update_h(d_long: float, v: float, h: bool, norms: NormConfig) -> bool:
    return bool(stopped_flag_next(np.asarray(h), np.asarray(d_long),
                                  np.asarray(v), norms))


def priority_flag_next(p_old, h_new, h_old, d_new, d_old, v_old, ego, other,
                       norms: NormConfig):
    """Monotone priority update for the ego agent against one other agent.

    With stop signs priority is claimed at the instant the ego completes its
    stop while still leading; without them it is claimed when the handover
    line is crossed with the smaller time-to-arrival ratio.  All inputs are
    stacked (..., A) arrays except the agent indices.
    """
    if norms.stop_signs:
        trig = (h_new[..., ego] & ~h_old[..., ego]
                & (d_new[..., ego] > d_new[..., other]))
    else:
        crossed = ((d_old[..., ego] < norms.handover_distance)
                   & (d_new[..., ego] >= norms.handover_distance))
        r_ego = _arrival_ratio(d_new[..., ego], v_old[..., ego])
        r_oth = _arrival_ratio(d_new[..., other], v_old[..., other])
        trig = crossed & (r_ego > r_oth)
    return p_old[..., ego] | trig


def _arrival_ratio(d, v):
    """d / max(0, v) with the convention that a standstill never wins priority."""
    v = np.maximum(v, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(v > 0.0, d / np.maximum(v, 1e-300), np.where(d < 0, -np.inf, np.inf))
    return r


def update_priority(d_new, d_old, v_old, h_new, h_old, p: bool, ego: int,
                    other: int, norms: NormConfig) -> bool:
    """Scalar convenience wrapper over :func:`priority_flag_next`.

    ``d_new/d_old/v_old/h_new/h_old`` are per-agent pairs indexed like the
    scenario's agents; ``p`` is the ego's current priority flag.
    """
    p_pair = np.zeros(2, bool)
    p_pair[ego] = p
    return bool(priority_flag_next(
        p_pair, np.asarray(h_new, bool), np.asarray(h_old, bool),
        np.asarray(d_new, float), np.asarray(d_old, float),
        np.asarray(v_old, float), ego, other, norms))


def advance_flags(cloud_new: StateCloud, kin_old, h_old, p_old,
                  scenario: Scenario, norms: NormConfig) -> None:
    """Update h/p flags of every agent in-place on the already-stepped cloud."""
    d_new = scenario.d_long(cloud_new.kin)
    d_old = scenario.d_long(kin_old)
    v_new = cloud_new.kin[..., IV]
    v_old = kin_old[..., IV]
    cloud_new.h = stopped_flag_next(h_old, d_new, v_new, norms)
    p = np.empty_like(p_old)
    for v_idx in range(cloud_new.n_agents):
        w_idx = 1 - v_idx
        p[..., v_idx] = priority_flag_next(
            p_old, cloud_new.h, h_old, d_new, d_old, v_old, v_idx, w_idx, norms)
    cloud_new.p = p


# ---------------------------------------------------------------------------
# generative process (deterministic)
# ---------------------------------------------------------------------------

def process_step(world: StateCloud, actions: dict[int, AgentAction], dt: float,
                 vehicle: VehicleConfig, scenario: Scenario,
                 norms: NormConfig) -> StateCloud:
    """True environment update: every agent executes its action exactly."""
    n = world.n_agents
    missing = [i for i in range(n) if i not in actions]
    if missing:
        raise KeyError(f"missing action for agent(s) {missing}")
    ctrl = np.stack([actions[i].control_array() for i in range(n)])
    sig = np.stack([actions[i].signal_array() for i in range(n)])
    kin = step_kinematics(world.kin, ctrl, dt, vehicle.wheelbase,
                          vehicle.max_steer)
    out = StateCloud(kin=kin, ctrl=ctrl, sig=sig,
                     h=world.h.copy(), p=world.p.copy())
    advance_flags(out, world.kin, world.h, world.p, scenario, norms)
    return out


def process_observe(world: StateCloud) -> StateCloud:
    """Observations expose the true state exactly (noise lives in the models)."""
    return world.copy()


# ---------------------------------------------------------------------------
# signal dynamics inside an agent's model
# ---------------------------------------------------------------------------

def signal_transition(sig_w, prompting: bool, sigma: float, rng):
    """Advance an other agent's continuous signal pair one step.

    The prompting dimension always drifts by a truncated normal.  The yielding
    dimension drifts too unless the ego prompts, in which case it collapses to
    a Bernoulli draw of its current value (commitment to a reply).
    """
    sig_w = np.asarray(sig_w, float)
    out = np.empty_like(sig_w)
    out[..., ISIG_PROMPT] = truncnorm_sample(rng, sig_w[..., ISIG_PROMPT], sigma)
    if prompting:
        out[..., ISIG_YIELD] = (
            rng.uniform(size=sig_w[..., ISIG_YIELD].shape)
            < sig_w[..., ISIG_YIELD]).astype(float)
    else:
        out[..., ISIG_YIELD] = truncnorm_sample(rng, sig_w[..., ISIG_YIELD], sigma)
    return out


# ---------------------------------------------------------------------------
# normative probability
# ---------------------------------------------------------------------------

def _norm_terms(d_long_w, d_lat_w, head_err_w, v_w, sig_yield_w, h_w, p_ego,
                d_long_ego, norms: NormConfig, vehicle: VehicleConfig):
    """Per-sample normative probability of one other agent given the ego state."""
    q = norms.violation_prob
    pn = np.ones(np.broadcast_shapes(np.shape(d_long_w), np.shape(d_long_ego)),
                 float)
    lat_limit = vehicle.lane_width / 2.0 + vehicle.width / 2.0 + norms.lane_lateral_slack
    off_lane = (np.abs(d_lat_w) > lat_limit) | (np.abs(head_err_w) > norms.lane_heading_tol)
    pn = np.where(off_lane, pn * q, pn)
    pn = np.where(v_w > norms.speed_limit, pn * q, pn)
    if norms.stop_signs:
        pn = np.where((d_long_w >= norms.intersection_entry) & ~h_w, pn * q, pn)
    ahead = d_long_w > np.maximum(norms.intersection_entry,
                                  d_long_ego - norms.trail_margin)
    if norms.priority_rule:
        pn = np.where(ahead & p_ego, pn * q, pn)
    if norms.communication:
        coop = 1.0 - norms.coop_slope * np.maximum(sig_yield_w - norms.coop_offset, 0.0)
        coop = np.clip(coop, norms.coop_floor, 1.0)
        pn = np.where(ahead, pn * coop, pn)
    return pn


def normative_prob(cloud: StateCloud, ego: int, scenario: Scenario,
                   norms: NormConfig, vehicle: VehicleConfig):
    """p_n: product of per-other-agent norm terms, in (0, 1]."""
    d_long = scenario.d_long(cloud.kin)
    d_lat = scenario.d_lat(cloud.kin)
    herr = scenario.heading_error(cloud.kin)
    pn = np.ones(cloud.batch_shape, float)
    for w in range(cloud.n_agents):
        if w == ego:
            continue
        pn = pn * _norm_terms(
            d_long[..., w], d_lat[..., w], herr[..., w], cloud.kin[..., w, IV],
            cloud.sig[..., w, ISIG_YIELD], cloud.h[..., w], cloud.p[..., ego],
            d_long[..., ego], norms, vehicle)
    return pn


def _ego_schedule(ego_ctrl, tail_ctrl, n_steps):
    """Per-step (..., T, 2) ego control schedule: action, tail, then hold.

    ``tail_ctrl`` may carry leading batch dimensions (per-candidate policy
    remainders); it broadcasts against the leading shape of ``ego_ctrl``.
    """
    first = np.asarray(ego_ctrl, float)[..., None, :]
    if tail_ctrl is None:
        tail = np.empty(first.shape[:-2] + (0, 2))
    else:
        tail = np.asarray(tail_ctrl, float)
    take = min(n_steps - 1, tail.shape[-2])
    lead = np.broadcast_shapes(first.shape[:-2], tail.shape[:-2])
    parts = [np.broadcast_to(first, lead + (1, 2))]
    if take:
        parts.append(np.broadcast_to(tail[..., :take, :], lead + (take, 2)))
    pad = n_steps - 1 - take
    if pad > 0:
        parts.append(np.repeat(parts[-1][..., -1:, :], pad, axis=-2))
    return parts[0] if len(parts) == 1 else np.concatenate(parts, axis=-2)


def _rollout_series(cloud, accel, omega, scenario, vehicle, T, dt):
    """Lane-frame trajectory series (d_long, d_lat, heading error, v) of all
    agents over T noise-free Euler steps, each shaped (..., A, T+1).

    Works directly in the lane frame via cumulative sums, matching a loop of
    ``step_kinematics`` exactly (monotone steering paths; the steering bound
    cannot be exited and re-entered under the constant rollout steering
    rates).
    """
    kin = cloud.kin
    lead = np.broadcast_shapes(accel.shape[:-1], kin.shape[:-1])  # (..., A)

    S = np.cumsum(accel, axis=-1) * dt
    v0 = kin[..., IV:IV + 1]
    v = np.maximum(v0 + S, S - np.minimum.accumulate(S, axis=-1))
    v_path = np.empty(lead + (T + 1,))
    v_path[..., 0] = kin[..., IV]
    v_path[..., 1:] = v
    vprev = v_path[..., :-1]

    de_prev = np.empty(lead + (T,))
    de_prev[..., 0] = kin[..., IDELTA]
    if T > 1:
        de_prev[..., 1:] = np.clip(
            kin[..., IDELTA, None] + np.cumsum(omega[..., :-1], axis=-1) * dt,
            -vehicle.max_steer, vehicle.max_steer)

    herr_prev = np.empty(lead + (T,))
    herr0 = kin[..., ITH] - scenario.theta_road
    herr_prev[..., 0] = herr0
    dth = vprev * np.tan(de_prev) * (dt / vehicle.wheelbase)
    if T > 1:
        herr_prev[..., 1:] = herr0[..., None] + np.cumsum(dth[..., :-1], axis=-1)

    d_long = np.empty(lead + (T + 1,))
    d_lat = np.empty(lead + (T + 1,))
    d_long[..., 0] = scenario.d_long(kin)
    d_lat[..., 0] = scenario.d_lat(kin)
    steps = vprev * dt
    d_long[..., 1:] = d_long[..., 0, None] + np.cumsum(
        steps * np.cos(herr_prev), axis=-1)
    d_lat[..., 1:] = d_lat[..., 0, None] + np.cumsum(
        steps * np.sin(herr_prev), axis=-1)
    herr = np.empty(lead + (T + 1,))
    herr[..., :-1] = herr_prev
    herr[..., -1] = herr_prev[..., -1] + dth[..., -1]
    return d_long, d_lat, herr, v_path


def projected_normative(cloud_next, cloud, ego, ego_ctrl, tail_ctrl,
                        scenario, norms, vehicle, n_steps, dt):
    """Projected normative probability of the sampled next state.

    Rolls the pre-transition state forward noise-free (the ego follows its
    action and remaining policy, other agents hold their believed controls),
    evaluates p_n at the start/middle/end checkpoint steps, and returns
    ``min(p_n(next), harmonic_mean(checkpoint values))``.
    """
    T = int(n_steps)
    lead = cloud.batch_shape
    nA = cloud.n_agents
    # per-agent control schedules over the horizon
    accel = np.empty(np.broadcast_shapes(
        lead, np.shape(ego_ctrl)[:-1]) + (nA, T), float)
    omega = np.empty_like(accel)
    ego_sched = _ego_schedule(ego_ctrl, tail_ctrl, T)          # (..., T, 2)
    for w in range(nA):
        if w == ego:
            accel[..., w, :] = ego_sched[..., :, IA]
            omega[..., w, :] = ego_sched[..., :, IOMEGA]
        else:
            accel[..., w, :] = cloud.ctrl[..., w, IA:IA + 1]
            omega[..., w, :] = cloud.ctrl[..., w, IOMEGA:IOMEGA + 1]

    d_long, d_lat, herr, v = _rollout_series(cloud, accel, omega, scenario,
                                             vehicle, T, dt)

    lo, hi = norms.stop_region
    trig = (d_long[..., 1:] >= lo) & (d_long[..., 1:] <= hi) & \
           (v[..., 1:] < norms.stop_speed)
    h_path = np.concatenate(
        [np.broadcast_to(cloud.h[..., None], trig.shape[:-1] + (1,)),
         cloud.h[..., None] | (np.maximum.accumulate(trig, axis=-1))], axis=-1)

    # ego priority flag along the rollout
    w_oth = 1 - ego if nA == 2 else None
    if norms.priority_rule and w_oth is not None:
        if norms.stop_signs:
            newly = h_path[..., ego, 1:] & ~h_path[..., ego, :-1]
            ptrig = newly & (d_long[..., ego, 1:] > d_long[..., w_oth, 1:])
        else:
            crossed = ((d_long[..., ego, :-1] < norms.handover_distance)
                       & (d_long[..., ego, 1:] >= norms.handover_distance))
            r_e = _arrival_ratio(d_long[..., ego, 1:], v[..., ego, :-1])
            r_o = _arrival_ratio(d_long[..., w_oth, 1:], v[..., w_oth, :-1])
            ptrig = crossed & (r_e > r_o)
        p_path = cloud.p[..., ego, None] | np.maximum.accumulate(ptrig, axis=-1)
        p_path = np.concatenate(
            [np.broadcast_to(cloud.p[..., ego, None], ptrig.shape[:-1] + (1,)),
             p_path], axis=-1)
    else:
        p_path = np.broadcast_to(cloud.p[..., ego, None],
                                 d_long.shape[:-2] + (T + 1,))

    ck = np.array(sorted({1, (1 + T) // 2, T}))
    pn_ck = np.ones(d_long.shape[:-2] + (len(ck),), float)
    for w in range(nA):
        if w == ego:
            continue
        pn_ck = pn_ck * _norm_terms(
            d_long[..., w, ck], d_lat[..., w, ck], herr[..., w, ck],
            v[..., w, ck], cloud_next.sig[..., w, ISIG_YIELD, None],
            h_path[..., w, ck], p_path[..., ck], d_long[..., ego, ck],
            norms, vehicle)
    harm = len(ck) / np.sum(1.0 / pn_ck, axis=-1)
    pn_next = normative_prob(cloud_next, ego, scenario, norms, vehicle)
    return np.minimum(pn_next, harm)


# ---------------------------------------------------------------------------
# model state transition (sampled)
# ---------------------------------------------------------------------------

class TransitionModel:
    """Precomputed noise layout for fast repeated transition sampling."""

    def __init__(self, noise: NoiseConfig, norms: NormConfig,
                 vehicle: VehicleConfig, scenario: Scenario, dt: float,
                 norm_steps: int, n_agents: int = 2):
        self.noise = noise
        self.norms = norms
        self.vehicle = vehicle
        self.scenario = scenario
        self.dt = dt
        self.norm_steps = norm_steps
        self.n_agents = n_agents
        self._kin_std = {}
        self._ctrl_std = np.zeros((n_agents, 2))
        for ego in range(n_agents):
            std = np.empty((n_agents, 5))
            for w in range(n_agents):
                std[w] = noise.sigma_x_ego if w == ego else noise.sigma_x_ov
            self._kin_std[ego] = std
        self._sigma_u_ov = np.asarray(noise.sigma_u_ov, float)

    def sample(self, cloud: StateCloud, ego: int, ego_ctrl, ego_sig, tail_ctrl,
               rng, with_norm_weight: bool = True):
        """One transition draw; returns (next_cloud, norm_weight array).

        ``ego_ctrl`` broadcasts against the cloud's batch shape; ``ego_sig``
        is one binary pair applied everywhere.
        """
        dt, nA = self.dt, self.n_agents
        ctrl_eff = cloud.ctrl.copy()
        ctrl_eff[..., ego, :] = ego_ctrl
        kin = step_kinematics(cloud.kin, ctrl_eff, dt, self.vehicle.wheelbase,
                              self.vehicle.max_steer)
        kstd = self._kin_std[ego]
        if np.any(kstd):
            kin = kin + rng.standard_normal(kin.shape) * kstd
            kin[..., IDELTA] = np.clip(kin[..., IDELTA], -self.vehicle.max_steer,
                                       self.vehicle.max_steer)
            kin[..., IV] = np.maximum(kin[..., IV], 0.0)

        ctrl = cloud.ctrl.copy()
        if np.any(self._sigma_u_ov):
            drift = rng.standard_normal(ctrl.shape) * self._sigma_u_ov
            ctrl = ctrl + drift
        ctrl[..., ego, :] = ego_ctrl
        ctrl[..., IA] = np.clip(ctrl[..., IA], -self.vehicle.max_accel,
                                self.vehicle.max_accel)
        ctrl[..., IOMEGA] = np.clip(ctrl[..., IOMEGA], -self.vehicle.max_steer_rate,
                                    self.vehicle.max_steer_rate)

        sig = cloud.sig.copy()
        prompting = bool(np.asarray(ego_sig)[ISIG_PROMPT] > 0.5)
        for w in range(nA):
            if w == ego:
                sig[..., w, :] = np.asarray(ego_sig, float)
            else:
                sig[..., w, :] = signal_transition(
                    cloud.sig[..., w, :], prompting, self.noise.sigma_signal, rng)

        nxt = StateCloud(kin=kin, ctrl=ctrl, sig=sig, h=cloud.h.copy(),
                         p=cloud.p.copy())
        advance_flags(nxt, cloud.kin, cloud.h, cloud.p, self.scenario, self.norms)

        if with_norm_weight:
            w = projected_normative(nxt, cloud, ego, ego_ctrl, tail_ctrl,
                                    self.scenario, self.norms, self.vehicle,
                                    self.norm_steps, dt)
        else:
            w = np.ones(nxt.batch_shape, float)
        return nxt, w


# ---------------------------------------------------------------------------
# observation likelihood of the agent's model
# ---------------------------------------------------------------------------

def observation_loglik(obs: StateCloud, cloud: StateCloud, ego: int,
                       noise: NoiseConfig):
    """log p(o | s) summed over all agents and dimensions.

    Kinematics and controls contribute Gaussian log densities; signals
    contribute Bernoulli log masses with parameter gamma for the ego agent and
    gamma**10 for other agents (a lasting positive-signal memory).  Impossible
    signal observations yield -inf.
    """
    sx = np.asarray(noise.sigma_x_obs, float)
    su = np.asarray(noise.sigma_u_obs, float)
    out = np.zeros(np.broadcast_shapes(cloud.batch_shape, obs.batch_shape), float)
    out = out + np.sum(_gauss_logpdf(obs.kin, cloud.kin, sx), axis=(-2, -1))
    out = out + np.sum(_gauss_logpdf(obs.ctrl, cloud.ctrl, su), axis=(-2, -1))
    for w in range(cloud.n_agents):
        par = cloud.sig[..., w, :]
        if w != ego:
            par = par ** 10
        mass = np.where(obs.sig[..., w, :] > 0.5, par, 1.0 - par)
        with np.errstate(divide="ignore"):
            out = out + np.sum(np.log(mass), axis=-1)
    return out


def _gauss_logpdf(x, mean, std):
    std = np.asarray(std, float)
    z = (x - mean) / std
    return -0.5 * z * z - np.log(std * np.sqrt(2.0 * np.pi))
