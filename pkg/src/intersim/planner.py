"""Policy machinery: expected-free-energy scoring, cross-entropy search,
evidence-gated re-planning and per-step signal selection.

A policy is a horizon of kinematic controls.  Its score sums, over predicted
observation clouds, a pragmatic term (expected log preference) and an
epistemic term (posterior predictive entropy minus expected ambiguity,
Gaussian moment-matched for kinematic dimensions and exact for the Bernoulli
signal dimensions).  Kinematic policies are only re-optimized when the
accumulated shortfall of pragmatic value crosses a threshold; signal actions
are cheap and re-selected every step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .belief import ParticleBelief, systematic_resample_indices
from .config import PlannerConfig, PreferenceConfig
from .kernels import (HAVE_NUMBA, norm_params_vector, pref_params_vector,
                      rollout_efe_kernel, vehicle_params_vector)
from .model import TransitionModel
from .preference import ALL_KEYS, PreferenceModel
from .states import ISIG_PROMPT, ISIG_YIELD, StateCloud
from .vehicle import IA, IOMEGA


@dataclass
class Policy:
    """Horizon-long sequence of kinematic controls with per-step signals."""

    controls: np.ndarray                 # (H, 2)
    signals: np.ndarray = None           # (H, 2) binary

    def __post_init__(self):
        self.controls = np.asarray(self.controls, float)
        if self.signals is None:
            self.signals = np.zeros_like(self.controls)

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]


@dataclass
class EfeBreakdown:
    g_prag: float
    g_epist: float
    components: dict = field(default_factory=dict)
    step_log_pref: np.ndarray = None     # per-step expected log preference

    @property
    def total(self) -> float:
        return -self.g_prag - self.g_epist


@dataclass
class SurpriseState:
    evidence: float = 0.0
    drift_rate: float = 10.0 ** -5.9
    threshold: float = 1.0


def bernoulli_entropy(p):
    """Shannon entropy of Bernoulli(p) in nats; zero at the boundary."""
    p = np.asarray(p, float)
    return -xlogy(p, p) - xlogy(1.0 - p, 1.0 - p)


def g_prompt(yield_belief_mean: float, g_signal: float) -> float:
    """Net one-step value of prompting: entropy gain minus signaling cost."""
    return float(bernoulli_entropy(yield_belief_mean)) - abs(g_signal)


def sample_observation(cloud: StateCloud, ego: int, noise, rng) -> StateCloud:
    """Draw one predicted observation per particle from the model's likelihood."""
    kin = cloud.kin + rng.standard_normal(cloud.kin.shape) * np.asarray(
        noise.sigma_x_obs, float)
    ctrl = cloud.ctrl + rng.standard_normal(cloud.ctrl.shape) * np.asarray(
        noise.sigma_u_obs, float)
    sig = np.empty_like(cloud.sig)
    for w in range(cloud.n_agents):
        par = cloud.sig[..., w, :]
        if w != ego:
            par = par ** 10
        sig[..., w, :] = (rng.uniform(size=par.shape) < par).astype(float)
    return StateCloud(kin=kin, ctrl=ctrl, sig=sig, h=cloud.h.copy(),
                      p=cloud.p.copy())


def _epistemic_value(cloud: StateCloud, wts, ego: int, noise):
    """Information-gain estimate of one predicted state cloud.

    wts has shape (..., N); reductions run over the particle axis.  Gaussian
    dimensions use moment matching, signal dimensions the exact Bernoulli
    mixture entropy.
    """
    out = 0.0
    for arr, sig_obs in ((cloud.kin, np.asarray(noise.sigma_x_obs, float)),
                         (cloud.ctrl, np.asarray(noise.sigma_u_obs, float))):
        mean = np.einsum("...n,...nad->...ad", wts, arr)
        var = np.einsum("...n,...nad->...ad", wts,
                        (arr - mean[..., None, :, :]) ** 2)
        out = out + 0.5 * np.sum(np.log1p(var / np.maximum(sig_obs ** 2, 1e-24)),
                                 axis=(-2, -1))
    for w in range(cloud.n_agents):
        if w == ego:
            continue
        q = cloud.sig[..., w, :] ** 10                       # (..., N, 2)
        mix = np.einsum("...n,...nd->...d", wts, q)
        ppe = np.sum(bernoulli_entropy(mix), axis=-1)
        amb = np.einsum("...n,...nd->...", wts, bernoulli_entropy(q))
        out = out + ppe - amb
    return out


def _softmax_rows(log_w):
    m = np.max(log_w, axis=-1, keepdims=True)
    w = np.exp(log_w - m)
    return w / np.sum(w, axis=-1, keepdims=True)


def _planning_cloud(belief: ParticleBelief, pcfg: PlannerConfig, rng):
    """Belief particles (optionally subsampled) with uniform-ized weights."""
    n_plan = pcfg.planning_particles
    if n_plan and n_plan < belief.n:
        w = belief.weights()
        positions = (np.arange(n_plan) + rng.uniform()) / n_plan
        cdf = np.cumsum(w)
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, positions)
        return belief.cloud.take(idx), np.zeros(n_plan)
    return belief.cloud, belief.log_w.copy()


def rollout_policies(cloud0: StateCloud, log_w0, controls, signal_plan, ego: int,
                     tm: TransitionModel, pm: PreferenceModel, rng,
                     want_final: bool = False, use_kernel: bool = True):
    """Score M candidate policies on a shared particle cloud.

    cloud0: (N, ...) particles; controls: (M, H, 2); signal_plan: (H, 2) or
    None (silence).  Returns per-candidate pragmatic/epistemic sums, per-step
    expected log preference, per-component sums, and optionally the final
    weighted cloud for chaining.  Dispatches to the compiled kernel when
    available; the numpy path is the reference implementation.
    """
    if use_kernel and HAVE_NUMBA:
        return _rollout_policies_kernel(cloud0, log_w0, controls, signal_plan,
                                        ego, tm, pm, rng, want_final)
    M, H = controls.shape[0], controls.shape[1]
    cloud = cloud0.tile((M,))
    log_w = np.broadcast_to(log_w0, (M,) + log_w0.shape).copy()
    g_prag = np.zeros(M)
    g_epist = np.zeros(M)
    step_lnp = np.zeros((M, H))
    comps = {k: np.zeros(M) for k in ALL_KEYS}
    for tau in range(H):
        sig = (signal_plan[tau] if signal_plan is not None
               else np.zeros(2))
        ego_ctrl = controls[:, tau][:, None, :]              # (M, 1, 2)
        tail = controls[:, tau + 1:][:, None, :, :]          # (M, 1, R, 2)
        cloud, nw = tm.sample(cloud, ego, ego_ctrl, sig, tail, rng)
        with np.errstate(divide="ignore"):
            log_w = log_w + np.log(nw)
        wts = _softmax_rows(log_w)
        obs = sample_observation(cloud, ego, tm.noise, rng)
        parts = pm.components(obs, ego, rng)
        lnp = sum(parts.values())
        e_lnp = np.sum(wts * lnp, axis=-1)
        g_prag += e_lnp
        step_lnp[:, tau] = e_lnp
        for k in ALL_KEYS:
            comps[k] += np.sum(wts * parts[k], axis=-1)
        g_epist += _epistemic_value(cloud, wts, ego, tm.noise)
    result = {"g_prag": g_prag, "g_epist": g_epist, "step_lnp": step_lnp,
              "components": comps}
    if want_final:
        result["final_cloud"] = cloud
        result["final_log_w"] = log_w
    return result


def _rollout_policies_kernel(cloud0, log_w0, controls, signal_plan, ego, tm,
                             pm, rng, want_final, common_noise=True):
    M, H = controls.shape[0], controls.shape[1]
    N = cloud0.batch_shape[0]
    A = cloud0.n_agents
    cloud = cloud0.tile((M,))
    log_w = np.ascontiguousarray(
        np.broadcast_to(log_w0, (M,) + log_w0.shape)).copy()
    plan = (np.ascontiguousarray(signal_plan, dtype=float)
            if signal_plan is not None else np.zeros((H, 2)))

    # common random numbers across candidates pair the comparisons,
    # making the CEM ranking insensitive to Monte Carlo draw luck
    MR = 1 if common_noise else M
    zn_kin = rng.standard_normal((H, MR, N, A, 5))
    zn_ctrl = rng.standard_normal((H, MR, N, A, 2))
    u_sig = rng.uniform(size=(H, MR, N, A, 2))
    zn_okin = rng.standard_normal((H, MR, N, A, 5))
    zn_octrl = rng.standard_normal((H, MR, N, A, 2))
    u_osig = rng.uniform(size=(H, MR, N, A, 2))
    u_coop = rng.uniform(size=(H, MR, N))

    g_prag = np.zeros(M)
    g_epist = np.zeros(M)
    step_lnp = np.zeros((M, H))
    comps_arr = np.zeros((M, len(ALL_KEYS)))
    scen = tm.scenario
    rollout_efe_kernel(
        cloud.kin, cloud.ctrl, cloud.sig, cloud.h, cloud.p, log_w,
        np.ascontiguousarray(controls, dtype=float), plan, ego,
        zn_kin, zn_ctrl, u_sig, zn_okin, zn_octrl, u_osig, u_coop,
        scen.cos_road, scen.sin_road, scen.theta_road,
        np.asarray(tm.noise.sigma_x_ego, float),
        np.asarray(tm.noise.sigma_x_ov, float),
        np.asarray(tm.noise.sigma_u_ov, float),
        np.asarray(tm.noise.sigma_x_obs, float),
        np.asarray(tm.noise.sigma_u_obs, float),
        tm.noise.sigma_signal,
        norm_params_vector(tm.norms, tm.vehicle),
        pref_params_vector(pm.pref),
        vehicle_params_vector(tm.vehicle),
        tm.norm_steps, tm.dt,
        g_prag, g_epist, step_lnp, comps_arr)

    comps = {k: comps_arr[:, i] for i, k in enumerate(ALL_KEYS)}
    result = {"g_prag": g_prag, "g_epist": g_epist, "step_lnp": step_lnp,
              "components": comps}
    if want_final:
        result["final_cloud"] = cloud
        result["final_log_w"] = log_w
    return result


def evaluate_efe(belief: ParticleBelief, policy: Policy, signal_plan, ego: int,
                 tm: TransitionModel, pm: PreferenceModel,
                 pcfg: PlannerConfig, rng) -> EfeBreakdown:
    """EFE of a single policy under the current belief."""
    cloud0, log_w0 = _planning_cloud(belief, pcfg, rng)
    res = rollout_policies(cloud0, log_w0, policy.controls[None], signal_plan,
                           ego, tm, pm, rng, use_kernel=pcfg.use_kernels)
    return EfeBreakdown(g_prag=float(res["g_prag"][0]),
                        g_epist=float(res["g_epist"][0]),
                        components={k: float(v[0])
                                    for k, v in res["components"].items()},
                        step_log_pref=res["step_lnp"][0])


def cem_optimize(belief: ParticleBelief, horizon: int, ego: int,
                 tm: TransitionModel, pm: PreferenceModel,
                 pcfg: PlannerConfig, vehicle, rng) -> Policy:
    """Cross-entropy search over control sequences.

    The first iteration samples one shared acceleration per candidate
    (constant profiles); later iterations sample per-step around the elite
    refit.  The best policy ever evaluated is returned.
    """
    M = pcfg.cem_samples
    n_elite = max(1, int(round(M * pcfg.cem_elite_frac)))
    cloud0, log_w0 = _planning_cloud(belief, pcfg, rng)
    mean_a = np.zeros(horizon)
    std_a = np.full(horizon, pcfg.accel_sample_std)
    best_ctrl, best_g = None, np.inf
    for it in range(pcfg.cem_iters):
        if it == 0:
            acc = np.repeat(rng.standard_normal((M, 1)) * pcfg.accel_sample_std,
                            horizon, axis=1)
        else:
            acc = mean_a + rng.standard_normal((M, horizon)) * std_a
        om = rng.standard_normal((M, horizon)) * pcfg.steer_sample_std
        acc = np.clip(acc, -vehicle.max_accel, vehicle.max_accel)
        om = np.clip(om, -vehicle.max_steer_rate, vehicle.max_steer_rate)
        controls = np.stack([acc, om], axis=-1)
        res = rollout_policies(cloud0, log_w0, controls, None, ego, tm, pm, rng,
                               use_kernel=pcfg.use_kernels)
        g = -res["g_prag"] - res["g_epist"]
        order = np.argsort(g, kind="stable")
        if g[order[0]] < best_g:
            best_g = float(g[order[0]])
            best_ctrl = controls[order[0]].copy()
        elite = controls[order[:n_elite]]
        mean_a = elite[..., IA].mean(axis=0)
        std_a = np.maximum(elite[..., IA].std(axis=0), pcfg.cem_min_std)
    return Policy(controls=best_ctrl)


def _extension_candidates(prev_last, pcfg: PlannerConfig, vehicle, rng):
    n = pcfg.extension_samples
    acc = rng.standard_normal(n) * pcfg.accel_sample_std
    om = rng.standard_normal(n) * pcfg.steer_sample_std
    cand = np.stack([np.clip(acc, -vehicle.max_accel, vehicle.max_accel),
                     np.clip(om, -vehicle.max_steer_rate, vehicle.max_steer_rate)],
                    axis=-1)
    return np.concatenate([np.asarray(prev_last, float)[None], cand], axis=0)


def accumulate_and_select(sur: SurpriseState, belief: ParticleBelief,
                          remaining_controls, ego: int, tm: TransitionModel,
                          pm: PreferenceModel, pcfg: PlannerConfig, vehicle,
                          horizon: int, rng, forced: bool = False):
    """Extend or re-plan the kinematic policy and update accumulated surprise.

    ``remaining_controls`` holds the not-yet-executed steps of the reference
    policy (horizon-1 rows after a tick, horizon rows right after a plan).
    Returns (policy, surprise', replanned, diagnostics).  The surprise and
    extension evaluations use the full belief (the subsample knob only thins
    the candidate search inside cem_optimize); the evidence stream drives
    re-planning and benefits from the lower-variance estimate.
    """
    cloud0, log_w0 = belief.cloud, belief.log_w.copy()
    remaining = np.asarray(remaining_controls, float)
    res = rollout_policies(cloud0, log_w0, remaining[None], None, ego, tm, pm,
                           rng, want_final=True, use_kernel=pcfg.use_kernels)
    step_lnp = list(res["step_lnp"][0])
    comps = {k: float(v[0]) for k, v in res["components"].items()}

    if remaining.shape[0] < horizon:
        cand = _extension_candidates(remaining[-1] if len(remaining) else (0.0, 0.0),
                                     pcfg, vehicle, rng)
        fin_cloud, fin_log_w = res["final_cloud"], res["final_log_w"]
        ext = rollout_policies(fin_cloud.take(0), fin_log_w[0],
                               cand[:, None, :], None, ego, tm, pm, rng,
                               use_kernel=pcfg.use_kernels)
        g_last = -ext["g_prag"] - ext["g_epist"]
        k_best = int(np.argmin(g_last))
        controls = np.concatenate([remaining, cand[k_best][None]], axis=0)
        step_lnp.append(float(ext["step_lnp"][k_best, 0]))
        for key in ALL_KEYS:
            comps[key] += float(ext["components"][key][k_best])
    else:
        controls = remaining[:horizon]

    max_lnp = pm.max_log()
    epsilon = float(len(step_lnp) * max_lnp - sum(step_lnp))
    evidence = sur.evidence + sur.drift_rate * epsilon
    replanned = forced or evidence >= sur.threshold
    if replanned:
        policy = cem_optimize(belief, horizon, ego, tm, pm, pcfg, vehicle, rng)
        evidence = 0.0
    else:
        policy = Policy(controls=controls)
    diag = {"epsilon": epsilon, "components": comps,
            "step_log_pref": step_lnp}
    return policy, SurpriseState(evidence, sur.drift_rate, sur.threshold), \
        replanned, diag


SIGNAL_CHOICES = ((0, 0), (0, 1), (1, 0), (1, 1))


def select_signals(belief: ParticleBelief, ego: int, pref: PreferenceConfig,
                   norms, ego_arrives_second: bool) -> tuple[int, int]:
    """Pick this step's binary signal pair by one-step EFE comparison.

    Prompting earns the Bernoulli-entropy information gain over the other
    agent's yielding intent; every active signal costs effort (tenfold before
    the stop when stop signs apply); failing to answer a perceived prompt
    while expecting to arrive second, or signaling yield while holding
    priority, incurs the uncooperative penalty.  Ties go to silence.
    """
    if not norms.communication:
        return (0, 0)
    other = 1 - ego
    yield_mean = belief.signal_mean(other, ISIG_YIELD)
    other_prompting = belief.signal_mean(other, ISIG_PROMPT) > 0.5
    stopped = belief.own_flag_prob("h") > 0.5
    if norms.priority_rule:
        has_priority = belief.own_flag_prob("p") > 0.5
    else:
        has_priority = not ego_arrives_second
    mult = 10.0 if (norms.stop_signs and not stopped) else 1.0

    best, best_g = (0, 0), np.inf
    for gA, gY in SIGNAL_CHOICES:
        prag = pref.g_signal * (gA + gY) * mult
        if gY == 0 and other_prompting and ego_arrives_second:
            prag += pref.g_uncoop
        if gY == 1 and has_priority:
            prag += pref.g_uncoop
        epist = bernoulli_entropy(yield_mean) if gA == 1 else 0.0
        g = -prag - epist
        if g < best_g - 1e-12:
            best, best_g = (gA, gY), g
    return best
