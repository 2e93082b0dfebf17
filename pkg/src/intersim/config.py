"""Configuration: every tunable constant of the simulator, with YAML I/O.

Constants fall in two groups, marked in the template comments emitted by
``default_yaml``: model constants (part of the published parameter set of the
interaction model) and artifact defaults (implementation choices exposed so
they can be audited and overridden).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, fields

import yaml

REGIMES = ("baseline", "norms", "communication", "norms_communication", "adversarial")


class ConfigError(ValueError):
    """Raised when a config file or override set fails validation."""


@dataclass
class VehicleConfig:
    length: float = 4.85
    width: float = 1.9
    wheelbase: float = 2.7
    lane_width: float = 3.0
    max_steer: float = 0.6          # [rad]
    max_accel: float = 6.0          # [m/s^2]
    max_steer_rate: float = 0.5     # [rad/s]


@dataclass
class NoiseConfig:
    """Transition and observation noise (per-dimension standard deviations)."""

    sigma_x_ego: tuple = (0.05, 0.05, 0.005, 0.005, 0.05)   # x, y, theta, delta, v
    sigma_x_ov: tuple = (0.05, 0.05, 0.005, 0.005, 0.05)
    sigma_u_ov: tuple = (0.5, 0.01)                          # a, omega drift
    sigma_x_obs: tuple = (0.5, 0.5, 0.02, 0.02, 0.1)
    sigma_u_obs: tuple = (0.2, 0.01)
    sigma_signal: float = 0.001         # signal drift during behavior prediction
    sigma_signal_update: float = 0.005  # signal spread applied during belief update


@dataclass
class NormConfig:
    """Normative-expectation terms and the thresholds they test against."""

    stop_signs: bool = False
    priority_rule: bool = False
    communication: bool = False
    no_stop_handover: bool = True       # -20 m priority handover when no stop signs
    speed_limit: float = 11.5           # [m/s] hard expectation on other agents
    stop_region: tuple = (-19.425, -3.925)
    stop_speed: float = 0.278           # [m/s]
    intersection_entry: float = -3.925  # [m]
    trail_margin: float = 4.425         # [m]
    handover_distance: float = -20.0    # [m]
    violation_prob: float = 0.02
    coop_slope: float = 1.4
    coop_offset: float = 0.3
    coop_floor: float = 0.001
    rollout_horizon: float = 4.0        # [s] projection horizon for norm compliance
    lane_heading_tol: float = 0.35      # [rad] lane-following heading band
    lane_lateral_slack: float = 0.0     # [m] added to half lane + half width


@dataclass
class PreferenceConfig:
    """Parameters of the log observation-preference used as pragmatic value."""

    mu_v: float = 10.0
    sigma_v: float = 0.2
    sigma_a: float = 0.2
    sigma_omega: float = 0.02
    sigma_lat: float = 0.3
    g_norm: float = -10000.0        # log value of a norm violation
    g_signal: float = -0.125        # log cost of one active signal
    g_uncoop: float = -10000.0      # log value of uncooperative signaling
    g_collision: float = -60000.0
    safety_clearance: float = 10.0  # [m] gap below which the safety term engages
    speed_soft_threshold: float = 10.278  # [m/s]
    speed_soft_scale: float = 4.2         # [m/s]
    lat_floor: float = -50.0        # log floor of the lateral term


@dataclass
class BeliefConfig:
    particles: int = 100
    resample_frac: float = 0.5      # resample when ESS < frac * N
    pos_pseudo: float = 8.0         # pseudo-count added on a positive signal
    neg_pseudo: float = 0.15        # pseudo-count added on a negative signal
    bandwidth_floor_scale: float = 1.0


@dataclass
class PlannerConfig:
    horizon: float = 4.0            # [s]
    cem_samples: int = 64
    cem_iters: int = 4
    cem_elite_frac: float = 0.125
    accel_sample_std: float = 1.5   # [m/s^2] first-iteration acceleration spread
    steer_sample_std: float = 1e-5  # [rad/s] steering-rate sampling std
    cem_min_std: float = 0.05
    extension_samples: int = 15
    drift_rate_exp: float = -5.9    # evidence drift rate = 10**exp
    replan_threshold: float = 1.0
    standstill_speed: float = 0.1   # [m/s]
    standstill_replan_time: float = 2.0  # [s]
    yield_replan_level: float = 0.5
    planning_particles: int = 32    # policy-evaluation subsample; 0 -> all
    use_kernels: bool = True        # compiled rollout kernel when available

    @property
    def drift_rate(self) -> float:
        return 10.0 ** self.drift_rate_exp


@dataclass
class ScenarioConfig:
    d_a0: float = -65.0
    d_b0: float = -65.0
    v0: float = 10.0
    dt: float = 0.2
    max_time: float = 40.0
    adversarial_b: bool = False
    seed: int = 0
    agent_seed_a: int = -1          # -1: derive from seed
    agent_seed_b: int = -1
    deadlock_speed: float = 0.1     # [m/s]
    deadlock_time: float = 5.0      # [s]
    crossing_margin: float = 1.5    # [m] half extent of the conflict zone


@dataclass
class BatchConfig:
    reps: int = 20
    full_reps: int = 50
    delta_d_grid: tuple = (-25.0, -15.0, -5.0, -3.0, -1.5, 0.0)
    adversarial_grid: tuple = (-10.0, -8.0, -6.5, -5.5, -4.5, -3.5, -2.5, -1.0)


@dataclass
class SimConfig:
    """Root configuration object."""

    vehicle: VehicleConfig = field(default_factory=VehicleConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    norms: NormConfig = field(default_factory=NormConfig)
    preference: PreferenceConfig = field(default_factory=PreferenceConfig)
    belief: BeliefConfig = field(default_factory=BeliefConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    batch: BatchConfig = field(default_factory=BatchConfig)

    # ---- derived quantities ----
    @property
    def horizon_steps(self) -> int:
        return max(1, round(self.planner.horizon / self.scenario.dt))

    @property
    def norm_horizon_steps(self) -> int:
        return max(1, round(self.norms.rollout_horizon / self.scenario.dt))

    def apply_regime(self, regime: str) -> "SimConfig":
        """Return a copy with the norm/communication flags of a named regime."""
        if regime not in REGIMES:
            raise ConfigError(f"unknown regime {regime!r}; choose from {REGIMES}")
        out = copy_config(self)
        out.norms.stop_signs = regime in ("norms", "norms_communication")
        out.norms.priority_rule = regime in ("norms", "norms_communication")
        out.norms.communication = regime in (
            "communication", "norms_communication", "adversarial")
        out.scenario.adversarial_b = regime == "adversarial"
        return out


def copy_config(cfg: SimConfig) -> SimConfig:
    return from_dict(to_dict(cfg))


def to_dict(cfg) -> dict:
    out = {}
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


_SECTION_TYPES = {f.name: f.default_factory for f in fields(SimConfig)}


def from_dict(d: dict) -> SimConfig:
    cfg = SimConfig()
    for section, values in (d or {}).items():
        if section not in _SECTION_TYPES:
            raise ConfigError(
                f"unknown config section {section!r}; valid sections: "
                f"{sorted(_SECTION_TYPES)}")
        sub = getattr(cfg, section)
        valid = {f.name: f.type for f in fields(sub)}
        for key, val in (values or {}).items():
            if key not in valid:
                raise ConfigError(
                    f"unknown key {section}.{key}; valid keys: {sorted(valid)}")
            current = getattr(sub, key)
            setattr(sub, key, _coerce(val, current, f"{section}.{key}"))
    return cfg


def _coerce(val, current, path):
    if isinstance(current, bool):
        if isinstance(val, bool):
            return val
        if isinstance(val, str) and val.lower() in ("true", "false", "1", "0"):
            return val.lower() in ("true", "1")
        raise ConfigError(f"{path}: expected a boolean, got {val!r}")
    if isinstance(current, int) and not isinstance(current, bool):
        try:
            fv = float(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected an integer, got {val!r}")
        if fv != int(fv):
            raise ConfigError(f"{path}: expected an integer, got {val!r}")
        return int(fv)
    if isinstance(current, float):
        try:
            return float(val)
        except (TypeError, ValueError):
            raise ConfigError(f"{path}: expected a number, got {val!r}")
    if isinstance(current, tuple):
        if isinstance(val, str):
            val = [p for p in val.replace(",", " ").split() if p]
        if not isinstance(val, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {val!r}")
        return tuple(float(x) for x in val)
    return val


def load_config(path: str | None = None, overrides: list[str] | None = None) -> SimConfig:
    """Build a config from an optional YAML file plus ``key.path=value`` overrides."""
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
    cfg = from_dict(data)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        key, _, val = item.partition("=")
        parts = key.strip().split(".")
        if len(parts) != 2:
            raise ConfigError(f"override key {key!r} must be section.key")
        section, name = parts
        if section not in _SECTION_TYPES:
            raise ConfigError(
                f"unknown config section {section!r}; valid sections: "
                f"{sorted(_SECTION_TYPES)}")
        sub = getattr(cfg, section)
        if not hasattr(sub, name):
            raise ConfigError(
                f"unknown key {key}; valid keys: "
                f"{sorted(f.name for f in fields(sub))}")
        setattr(sub, name, _coerce(val.strip(), getattr(sub, name), key))
    validate(cfg)
    return cfg


def validate(cfg: SimConfig) -> None:
    sc, nm, pf, pl, bl, vh = (cfg.scenario, cfg.norms, cfg.preference,
                              cfg.planner, cfg.belief, cfg.vehicle)
    problems = []
    if sc.dt <= 0:
        problems.append("scenario.dt must be > 0")
    if sc.max_time <= 0:
        problems.append("scenario.max_time must be > 0")
    if sc.d_a0 >= 0 or sc.d_b0 >= 0:
        problems.append("scenario.d_a0 and d_b0 must be negative (before the crossing)")
    if bl.particles < 1:
        problems.append("belief.particles must be >= 1")
    if not nm.stop_region[0] < nm.stop_region[1]:
        problems.append("norms.stop_region bounds must be ordered")
    if not 0 < nm.violation_prob <= 1:
        problems.append("norms.violation_prob must lie in (0, 1]")
    if nm.priority_rule and not (nm.stop_signs or nm.no_stop_handover):
        problems.append(
            "norms.priority_rule needs stop_signs or no_stop_handover enabled")
    for name, val in (("sigma_v", pf.sigma_v), ("sigma_a", pf.sigma_a),
                      ("sigma_omega", pf.sigma_omega), ("sigma_lat", pf.sigma_lat)):
        if val <= 0:
            problems.append(f"preference.{name} must be > 0")
    for name, val in (("g_norm", pf.g_norm), ("g_signal", pf.g_signal),
                      ("g_uncoop", pf.g_uncoop), ("g_collision", pf.g_collision)):
        if val > 0:
            problems.append(f"preference.{name} must be <= 0")
    if pl.cem_samples < 2 or pl.cem_iters < 1:
        problems.append("planner.cem_samples >= 2 and cem_iters >= 1 required")
    if not 0 < pl.cem_elite_frac <= 1:
        problems.append("planner.cem_elite_frac must lie in (0, 1]")
    if pl.horizon < sc.dt:
        problems.append("planner.horizon must cover at least one step")
    for name, val in (("length", vh.length), ("width", vh.width),
                      ("wheelbase", vh.wheelbase), ("lane_width", vh.lane_width)):
        if val <= 0:
            problems.append(f"vehicle.{name} must be > 0")
    if problems:
        raise ConfigError("; ".join(problems))


# Labels used by the resolved-parameter printout: model constants are the
# published parameter set; everything else is an artifact default.
_MODEL_CONSTANTS = {
    "noise.sigma_signal": "sigma_gamma",
    "noise.sigma_signal_update": "sigma_gamma_0",
    "preference.sigma_v": "sigma_v",
    "preference.sigma_a": "sigma_a",
    "preference.g_norm": "g_S",
    "preference.g_signal": "g_gamma",
    "preference.g_uncoop": "g_W",
    "planner.steer_sample_std": "steer_sampling_std",
    "planner.drift_rate_exp": "lambda_exponent",
}


def resolved_lines(cfg: SimConfig) -> list[str]:
    """Flat, sorted key=value lines with provenance tags, one per parameter."""
    lines = []
    d = to_dict(cfg)
    for section in sorted(d):
        for key in sorted(d[section]):
            path = f"{section}.{key}"
            val = d[section][key]
            if isinstance(val, list):
                sval = "[" + ", ".join(repr(x) for x in val) + "]"
            else:
                sval = repr(val)
            if path in _MODEL_CONSTANTS:
                tag = f"model constant ({_MODEL_CONSTANTS[path]})"
            else:
                tag = "artifact default"
            lines.append(f"{path} = {sval}    # {tag}")
    lam = cfg.planner.drift_rate
    lines.append(
        f"planner.drift_rate = 10^{cfg.planner.drift_rate_exp} = {lam:.6e}"
        "    # model constant (lambda)")
    return lines


def default_yaml() -> str:
    """A commented template of the full default configuration."""
    cfg = SimConfig()
    d = to_dict(cfg)
    out = ["# intersim configuration (all values shown are the defaults)"]
    for section in d:
        out.append(f"{section}:")
        for key, val in d[section].items():
            path = f"{section}.{key}"
            if isinstance(val, list):
                sval = "[" + ", ".join(str(x) for x in val) + "]"
            else:
                sval = str(val).lower() if isinstance(val, bool) else str(val)
            tag = "model constant" if path in _MODEL_CONSTANTS else "artifact default"
            out.append(f"  {key}: {sval}  # {tag}")
    return "\n".join(out) + "\n"


def drift_rate_of(exp: float) -> float:
    return math.pow(10.0, exp)
