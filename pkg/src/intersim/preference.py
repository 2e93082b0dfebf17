"""Log observation preference: the pragmatic-value kernel.

The preferred-observation density factorizes into comfort terms (speed,
acceleration, steering-rate and lateral Gaussians), interaction terms
(collision and near-miss safety margin), norm-keeping terms (speed limit,
stop sign, priority) and communication terms (signal effort, cooperation).
All terms are finite by construction, so log p(o) is never -inf.
"""

from __future__ import annotations

import numpy as np

from .config import NormConfig, PreferenceConfig, VehicleConfig
from .states import ISIG_PROMPT, ISIG_YIELD, Scenario, StateCloud
from .vehicle import IA, IOMEGA, IV, VehicleGeometry, rect_separation

_LOG_2PI = float(np.log(2.0 * np.pi))

BASE_KEYS = ("speed", "accel", "steer", "lateral", "collision", "safety")
NORM_KEYS = ("speed_limit", "stop", "priority")
COMM_KEYS = ("comm", "coop")
ALL_KEYS = BASE_KEYS + NORM_KEYS + COMM_KEYS


def _ln_gauss(x, mu, sigma):
    z = (x - mu) / sigma
    return -0.5 * z * z - np.log(sigma) - 0.5 * _LOG_2PI


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class PreferenceModel:
    """Evaluates log-preference components on observation clouds."""

    def __init__(self, pref: PreferenceConfig, norms: NormConfig,
                 vehicle: VehicleConfig, scenario: Scenario):
        self.pref = pref
        self.norms = norms
        self.vehicle = vehicle
        self.scenario = scenario
        self.geom = VehicleGeometry(vehicle.length, vehicle.width,
                                    vehicle.wheelbase)

    # -- component groups --------------------------------------------------
    def base_components(self, obs: StateCloud, ego: int) -> dict:
        pref, nm = self.pref, self.norms
        kin_e = obs.kin[..., ego, :]
        ctrl_e = obs.ctrl[..., ego, :]
        d_lat = self.scenario.d_lat(obs.kin)[..., ego]
        out = {
            "speed": _ln_gauss(kin_e[..., IV], pref.mu_v, pref.sigma_v),
            "accel": _ln_gauss(ctrl_e[..., IA], 0.0, pref.sigma_a),
            "steer": _ln_gauss(ctrl_e[..., IOMEGA], 0.0, pref.sigma_omega),
            "lateral": np.maximum(_ln_gauss(d_lat, 0.0, pref.sigma_lat),
                                  pref.lat_floor),
        }
        other = 1 - ego
        sep = rect_separation(obs.kin[..., ego, :], obs.kin[..., other, :],
                              self.geom, self.geom)
        out["collision"] = np.where(sep <= 0.0, pref.g_collision, 0.0)
        gap = np.maximum(sep, 0.0)
        out["safety"] = pref.g_collision * np.maximum(
            0.0, 1.0 - gap / pref.safety_clearance)
        return out

    def norm_components(self, obs: StateCloud, ego: int) -> dict:
        pref, nm = self.pref, self.norms
        v = obs.kin[..., ego, IV]
        d_long = self.scenario.d_long(obs.kin)
        zeros = np.zeros(np.broadcast_shapes(v.shape), float)
        over = v > pref.speed_soft_threshold
        out = {"speed_limit": np.where(
            over, pref.g_norm * (v - pref.mu_v) / pref.speed_soft_scale, 0.0)}
        if nm.stop_signs:
            out["stop"] = np.where(
                (d_long[..., ego] >= nm.intersection_entry) & ~obs.h[..., ego],
                pref.g_norm, 0.0)
        else:
            out["stop"] = zeros
        if nm.priority_rule:
            other = 1 - ego
            ahead = d_long[..., ego] > np.maximum(
                nm.intersection_entry, d_long[..., other] - nm.trail_margin)
            viol = ahead & ~obs.p[..., ego]
            if nm.communication:
                viol = viol & ~(obs.sig[..., other, ISIG_YIELD] > 0.5)
            out["priority"] = np.where(viol, 0.5 * pref.g_norm, 0.0)
        else:
            out["priority"] = zeros
        return out

    def comm_components(self, obs: StateCloud, ego: int, rng=None) -> dict:
        pref, nm = self.pref, self.norms
        shape = np.broadcast_shapes(obs.batch_shape)
        zeros = np.zeros(shape, float)
        if not nm.communication:
            return {"comm": zeros, "coop": zeros.copy()}
        sig_e = obs.sig[..., ego, :]
        active = sig_e[..., ISIG_PROMPT] + sig_e[..., ISIG_YIELD]
        mult = 1.0
        if nm.stop_signs:
            mult = np.where(obs.h[..., ego], 1.0, 10.0)
        comm = pref.g_signal * active * mult

        other = 1 - ego
        if nm.priority_rule:
            p_ego = obs.p[..., ego]
        else:
            d_long = self.scenario.d_long(obs.kin)
            r_e = _safe_ratio(d_long[..., ego], obs.kin[..., ego, IV])
            r_o = _safe_ratio(d_long[..., other], obs.kin[..., other, IV])
            prob = _sigmoid(3.0 * (r_e - r_o))
            if rng is None:
                p_ego = prob > 0.5
            else:
                p_ego = rng.uniform(size=shape) < prob
        yielding = sig_e[..., ISIG_YIELD] > 0.5
        prompting_other = obs.sig[..., other, ISIG_PROMPT] > 0.5
        uncoop = (yielding & p_ego) | (prompting_other & ~p_ego & ~yielding)
        coop = np.where(uncoop, pref.g_uncoop, 0.0)
        return {"comm": comm + zeros, "coop": coop}

    def components(self, obs: StateCloud, ego: int, rng=None) -> dict:
        out = self.base_components(obs, ego)
        out.update(self.norm_components(obs, ego))
        out.update(self.comm_components(obs, ego, rng))
        return out

    def log_pref(self, obs: StateCloud, ego: int, rng=None):
        comps = self.components(obs, ego, rng)
        return sum(comps.values())

    def max_log(self) -> float:
        """Analytic maximum of log p(o): the ideal observation's value."""
        p = self.pref
        return float(-np.log(p.sigma_v) - np.log(p.sigma_a)
                     - np.log(p.sigma_omega) - np.log(p.sigma_lat)
                     - 2.0 * _LOG_2PI)


def _safe_ratio(d, v):
    v = np.maximum(v, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(v > 0.0, d / np.maximum(v, 1e-300),
                     np.where(d < 0, -1e9, 1e9))
    return np.clip(r, -1e9, 1e9)


# -- module-level operation wrappers ---------------------------------------

def log_preference(obs: StateCloud, ego: int, pref: PreferenceConfig,
                   norms: NormConfig, vehicle: VehicleConfig,
                   scenario: Scenario, rng=None):
    return PreferenceModel(pref, norms, vehicle, scenario).log_pref(obs, ego, rng)


def log_norm_components(obs: StateCloud, ego: int, pref: PreferenceConfig,
                        norms: NormConfig, vehicle: VehicleConfig,
                        scenario: Scenario):
    comps = PreferenceModel(pref, norms, vehicle, scenario).norm_components(obs, ego)
    return sum(comps.values())


def log_comm_components(obs: StateCloud, ego: int, pref: PreferenceConfig,
                        norms: NormConfig, vehicle: VehicleConfig,
                        scenario: Scenario, rng=None):
    comps = PreferenceModel(pref, norms, vehicle, scenario).comm_components(
        obs, ego, rng)
    return sum(comps.values())


def log_base_components(obs: StateCloud, ego: int, pref: PreferenceConfig,
                        norms: NormConfig, vehicle: VehicleConfig,
                        scenario: Scenario):
    comps = PreferenceModel(pref, norms, vehicle, scenario).base_components(obs, ego)
    return sum(comps.values())
