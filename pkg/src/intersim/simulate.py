"""The dyadic interaction loop: observe, believe, signal, plan, act.

Each tick both agents independently observe the true world, update their
particle beliefs, pick signal actions, and extend or re-plan their kinematic
policies; the first actions are then executed simultaneously.  Runs terminate
on collision, on both vehicles clearing the conflict zone, on a sustained
joint standstill (deadlock), or at the time limit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .belief import ParticleBelief, initial_belief
from .config import SimConfig
from .model import TransitionModel, process_observe, process_step
from .planner import (Policy, SurpriseState, accumulate_and_select, cem_optimize,
                      g_prompt, select_signals)
from .preference import PreferenceModel
from .states import (ISIG_PROMPT, ISIG_YIELD, AGENT_NAMES, AgentAction, Scenario,
                     StateCloud)
from .vehicle import IA, IOMEGA, ITH, IV, IX, IY, VehicleGeometry, rect_gap

OUTCOME_KINDS = ("a_first", "b_first", "deadlock", "collision")


@dataclass
class Outcome:
    kind: str
    t_cross_a: float | None = None
    t_cross_b: float | None = None
    min_gap: float = float("inf")
    impact_speed: float | None = None
    t_first_replan_a: float | None = None
    t_first_replan_b: float | None = None
    first_prompt_a: float | None = None
    first_prompt_b: float | None = None
    first_yield_a: float | None = None
    first_yield_b: float | None = None

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class WorldTrace:
    """True per-tick state kept for outcome classification."""

    times: list = field(default_factory=list)
    kin: list = field(default_factory=list)        # (A, 5) per tick
    gaps: list = field(default_factory=list)
    overlaps: list = field(default_factory=list)

    def append(self, t, world: StateCloud, geom: VehicleGeometry):
        self.times.append(t)
        self.kin.append(world.kin.copy())
        gap = float(rect_gap(world.kin[0], world.kin[1], geom, geom))
        self.gaps.append(gap)
        self.overlaps.append(gap <= 0.0)


def adversarial_action() -> AgentAction:
    """Scripted deceiver: constant speed, permanently signaling yield."""
    return AgentAction(a=0.0, omega=0.0, prompt=0, yielding=1)


@dataclass
class AgentRuntime:
    belief: ParticleBelief
    rng: np.random.Generator
    surprise: SurpriseState
    remaining: np.ndarray = None         # (R, 2) unexecuted policy controls
    last_action: AgentAction = None
    signals_out: tuple = (0, 0)
    standstill_time: float = 0.0
    prev_yield_mean: float = 0.5
    t_first_replan: float | None = None
    first_prompt: float | None = None
    first_yield: float | None = None


class Simulation:
    """One seeded run of the two-agent crossing."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.scenario = Scenario()
        self.geom = VehicleGeometry(cfg.vehicle.length, cfg.vehicle.width,
                                    cfg.vehicle.wheelbase)
        self.tm = TransitionModel(cfg.noise, cfg.norms, cfg.vehicle,
                                  self.scenario, cfg.scenario.dt,
                                  cfg.norm_horizon_steps)
        self.pm = PreferenceModel(cfg.preference, cfg.norms, cfg.vehicle,
                                  self.scenario)
        self.horizon = cfg.horizon_steps
        self.clear_line = (cfg.scenario.crossing_margin + cfg.vehicle.length / 2.0
                           + cfg.vehicle.width / 2.0)

    # -- helpers -------------------------------------------------------------
    def _agent_rng(self, idx: int) -> np.random.Generator:
        sc = self.cfg.scenario
        override = (sc.agent_seed_a, sc.agent_seed_b)[idx]
        if override >= 0:
            return np.random.default_rng(np.random.SeedSequence(override))
        return np.random.default_rng(
            np.random.SeedSequence((sc.seed, 1000 + idx)))

    def _predicts_second(self, rt: AgentRuntime, ego: int) -> bool:
        """Does the ego's current policy make it reach the crossing later?"""
        from .vehicle import rollout_constant_like
        cfg = self.cfg
        T = max(self.horizon, 50)
        kin = rt.belief.mean_kin()
        ctrl = rt.belief.mean_ctrl()
        accel = np.empty((2, T))
        omega = np.zeros((2, T))
        other = 1 - ego
        rem = rt.remaining if rt.remaining is not None and len(rt.remaining) \
            else np.zeros((1, 2))
        take = min(T, len(rem))
        accel[ego, :take] = rem[:take, IA]
        accel[ego, take:] = rem[take - 1, IA] if take else 0.0
        omega[ego, :take] = rem[:take, IOMEGA]
        accel[other] = ctrl[other, IA]
        path = rollout_constant_like(kin, accel, omega, T, cfg.scenario.dt,
                                     cfg.vehicle.wheelbase, cfg.vehicle.max_steer)
        d = path[..., IX] * self.scenario.cos_road[:, None] + \
            path[..., IY] * self.scenario.sin_road[:, None]
        entry = cfg.norms.intersection_entry
        reached = d >= entry
        t_hit = np.where(reached.any(axis=1), reached.argmax(axis=1), T + 1)
        if t_hit[ego] != t_hit[other]:
            return bool(t_hit[ego] > t_hit[other])
        d_now = d[:, 0]
        v_now = np.maximum(kin[:, IV], 1e-3)
        return bool((entry - d_now[ego]) / v_now[ego]
                    > (entry - d_now[other]) / v_now[other])

    # -- main loop -----------------------------------------------------------
    def run(self) -> tuple[Outcome, list[dict]]:
        cfg = self.cfg
        sc = cfg.scenario
        world = self.scenario.initial_world(sc.d_a0, sc.d_b0, sc.v0)
        dt = sc.dt
        n_ticks = int(round(sc.max_time / dt))
        trace = WorldTrace()
        trace.append(0.0, world, self.geom)
        log: list[dict] = []

        runtimes: dict[int, AgentRuntime | None] = {}
        for i in range(2):
            if i == 1 and sc.adversarial_b:
                runtimes[i] = None
                continue
            rng = self._agent_rng(i)
            bel = initial_belief(world, i, cfg.noise, cfg.belief.particles, rng)
            runtimes[i] = AgentRuntime(belief=bel, rng=rng,
                                       surprise=SurpriseState(
                                           drift_rate=cfg.planner.drift_rate))

        joint_still = 0.0
        cleared = {0: None, 1: None}
        for k in range(n_ticks):
            t = k * dt
            obs = process_observe(world)
            actions: dict[int, AgentAction] = {}
            for i in range(2):
                rt = runtimes[i]
                if rt is None:
                    actions[i] = adversarial_action()
                    continue
                actions[i] = self._agent_tick(rt, i, obs, t, k, log)

            world = process_step(world, actions, dt, cfg.vehicle, self.scenario,
                                 cfg.norms)
            t_next = (k + 1) * dt
            trace.append(t_next, world, self.geom)
            if trace.overlaps[-1]:
                break
            d_now = self.scenario.d_long(world.kin)
            for i in range(2):
                if cleared[i] is None and d_now[i] > self.clear_line:
                    cleared[i] = t_next
            if cleared[0] is not None and cleared[1] is not None:
                break
            if np.all(world.kin[:, IV] < sc.deadlock_speed):
                joint_still += dt
                if joint_still >= sc.deadlock_time:
                    break
            else:
                joint_still = 0.0

        outcome = classify_outcome(trace, cfg)
        for i, key in ((0, "a"), (1, "b")):
            rt = runtimes[i]
            if rt is None:
                continue
            setattr(outcome, f"t_first_replan_{key}", rt.t_first_replan)
            setattr(outcome, f"first_prompt_{key}", rt.first_prompt)
            setattr(outcome, f"first_yield_{key}", rt.first_yield)
        if sc.adversarial_b:
            outcome.first_yield_b = 0.0
        return outcome, log

    def _agent_tick(self, rt: AgentRuntime, ego: int, obs: StateCloud,
                    t: float, k: int, log: list[dict]) -> AgentAction:
        cfg = self.cfg
        other = 1 - ego
        if k > 0:
            rt.belief.predict(rt.last_action.control_array(),
                              rt.last_action.signal_array(),
                              rt.remaining, self.tm, rt.rng)
        rt.belief.update(obs, self.tm, cfg.belief, rt.rng)

        yield_mean = rt.belief.signal_mean(other, ISIG_YIELD)
        yield_trigger = (cfg.norms.communication
                         and rt.prev_yield_mean <= cfg.planner.yield_replan_level
                         < yield_mean)
        rt.prev_yield_mean = yield_mean

        own_v = float(obs.kin[ego, IV])
        if own_v < cfg.planner.standstill_speed:
            rt.standstill_time += cfg.scenario.dt
        else:
            rt.standstill_time = 0.0
        standstill_trigger = rt.standstill_time >= cfg.planner.standstill_replan_time

        ego_second = self._predicts_second(rt, ego) if cfg.norms.communication \
            else False
        signals = select_signals(rt.belief, ego, cfg.preference, cfg.norms,
                                 ego_second)
        rt.signals_out = signals
        if signals[0] and rt.first_prompt is None:
            rt.first_prompt = t
        if signals[1] and rt.first_yield is None:
            rt.first_yield = t

        if rt.remaining is None:
            plan = cem_optimize(rt.belief, self.horizon, ego, self.tm, self.pm,
                                cfg.planner, cfg.vehicle, rt.rng)
            rt.remaining = plan.controls

        forced = yield_trigger or standstill_trigger
        policy, rt.surprise, replanned, diag = accumulate_and_select(
            rt.surprise, rt.belief, rt.remaining, ego, self.tm, self.pm,
            cfg.planner, cfg.vehicle, self.horizon, rt.rng, forced=forced)
        trigger = ""
        if replanned:
            trigger = ("yield" if yield_trigger else
                       "standstill" if standstill_trigger else "evidence")
            rt.standstill_time = 0.0
            if trigger == "evidence" and rt.t_first_replan is None:
                rt.t_first_replan = t

        action = AgentAction(a=float(policy.controls[0, IA]),
                             omega=float(policy.controls[0, IOMEGA]),
                             prompt=signals[0], yielding=signals[1])
        rt.remaining = policy.controls[1:]
        rt.last_action = action

        log.append(self._record(rt, ego, other, obs, t, action, diag, replanned,
                                trigger, yield_mean))
        return action

    def _record(self, rt: AgentRuntime, ego: int, other: int, obs, t, action,
                diag, replanned, trigger, yield_mean) -> dict:
        cfg = self.cfg
        mean_kin = rt.belief.mean_kin()
        rec = {
            "record": "tick",
            "t": round(t, 9),
            "agent": AGENT_NAMES[ego],
            "x": float(obs.kin[ego, IX]),
            "y": float(obs.kin[ego, IY]),
            "v": float(obs.kin[ego, IV]),
            "a": action.a,
            "omega": action.omega,
            "gamma_a": action.prompt,
            "gamma_y": action.yielding,
            "d_long": float(self.scenario.d_long(obs.kin)[ego]),
            "evidence": rt.surprise.evidence,
            "epsilon": diag["epsilon"],
            "replanned": bool(replanned),
            "trigger": trigger,
            "bel_other_x": float(mean_kin[other, IX]),
            "bel_other_y": float(mean_kin[other, IY]),
            "bel_other_v": float(mean_kin[other, IV]),
            "bel_yield_mean": yield_mean,
            "bel_prompt_mean": rt.belief.signal_mean(other, ISIG_PROMPT),
            "own_h_prob": rt.belief.own_flag_prob("h"),
            "own_p_prob": rt.belief.own_flag_prob("p"),
            "g_prompt": g_prompt(yield_mean, cfg.preference.g_signal),
            "sig_counts": [[round(float(x), 6) for x in row]
                           for row in rt.belief.counts[other]],
        }
        for key, val in diag["components"].items():
            rec[f"prag_{key}"] = float(val)
        return rec


def classify_outcome(trace: WorldTrace, cfg: SimConfig) -> Outcome:
    """Collision dominates; else ordering by rear-bumper clearance; else deadlock."""
    sc = cfg.scenario
    kin = np.asarray(trace.kin)                      # (T, A, 5)
    times = np.asarray(trace.times)
    min_gap = float(np.min(trace.gaps)) if trace.gaps else float("inf")
    scen = Scenario()
    if any(trace.overlaps):
        idx = trace.overlaps.index(True)
        vel = kin[idx, :, IV]
        th = kin[idx, :, ITH]
        vvec = np.stack([vel * np.cos(th), vel * np.sin(th)], axis=-1)
        impact = float(np.linalg.norm(vvec[0] - vvec[1]))
        return Outcome(kind="collision", min_gap=min_gap, impact_speed=impact)

    d_long = scen.d_long(kin)                        # (T, A)
    clear_line = (sc.crossing_margin + cfg.vehicle.length / 2.0
                  + cfg.vehicle.width / 2.0)
    t_cross = []
    for i in range(2):
        past = d_long[:, i] > clear_line
        t_cross.append(float(times[past.argmax()]) if past.any() else None)

    if t_cross[0] is not None or t_cross[1] is not None:
        if t_cross[1] is None or (t_cross[0] is not None
                                  and t_cross[0] <= t_cross[1]):
            kind = "a_first"
        else:
            kind = "b_first"
        return Outcome(kind=kind, t_cross_a=t_cross[0], t_cross_b=t_cross[1],
                       min_gap=min_gap)
    return Outcome(kind="deadlock", min_gap=min_gap)


def run_simulation(cfg: SimConfig) -> tuple[Outcome, list[dict]]:
    """Run one seeded simulation; returns the outcome and the per-tick log."""
    from .config import validate
    validate(cfg)
    sim = Simulation(cfg)
    outcome, log = sim.run()
    log.append({"record": "outcome", **outcome.to_dict()})
    return outcome, log


def write_jsonl(records: list[dict], path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
