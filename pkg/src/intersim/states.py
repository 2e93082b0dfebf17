"""Stacked world-state containers used by the process, beliefs and rollouts.

A :class:`StateCloud` stores the joint state of all agents for an arbitrary
leading batch shape: the true world is a cloud of shape ``()``, a particle
belief a cloud of shape ``(N,)``, and policy evaluation uses ``(M, N)``.
Signal values are binary {0,1} floats in the true process and continuous in
beliefs; the container does not care.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .vehicle import IA, IOMEGA, IV, IX, IY  # noqa: F401  (re-exported indices)

# signal dimension indices: prompting, yielding
ISIG_PROMPT, ISIG_YIELD = 0, 1

AGENT_NAMES = ("A", "B")


@dataclass
class SignalPair:
    """One agent's pair of communicative signals (binary in actions/process)."""

    prompt: float = 0.0
    yielding: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.prompt, self.yielding], float)

    def binary(self) -> bool:
        return self.prompt in (0.0, 1.0) and self.yielding in (0.0, 1.0)


@dataclass
class AgentAction:
    """Kinematic control plus binary signal choice for one step."""

    a: float = 0.0
    omega: float = 0.0
    prompt: int = 0
    yielding: int = 0

    def control_array(self) -> np.ndarray:
        return np.array([self.a, self.omega], float)

    def signal_array(self) -> np.ndarray:
        return np.array([float(self.prompt), float(self.yielding)])


@dataclass
class StateCloud:
    """Joint state of all agents over an arbitrary leading batch shape.

    kin  (..., A, 5)   [x, y, theta, delta, v]
    ctrl (..., A, 2)   [a, omega]
    sig  (..., A, 2)   [prompt, yield]
    h    (..., A)      has-stopped flags
    p    (..., A)      assumes-priority flags
    """

    kin: np.ndarray
    ctrl: np.ndarray
    sig: np.ndarray
    h: np.ndarray
    p: np.ndarray

    @property
    def n_agents(self) -> int:
        return self.kin.shape[-2]

    @property
    def batch_shape(self) -> tuple:
        return self.kin.shape[:-2]

    def copy(self) -> "StateCloud":
        return StateCloud(self.kin.copy(), self.ctrl.copy(), self.sig.copy(),
                          self.h.copy(), self.p.copy())

    def tile(self, shape) -> "StateCloud":
        """Broadcast to a larger leading shape (materialized, writable)."""
        if isinstance(shape, int):
            shape = (shape,)
        full = tuple(shape) + self.batch_shape

        def bc(arr, trail):
            return np.ascontiguousarray(
                np.broadcast_to(arr, full + trail).copy())

        return StateCloud(bc(self.kin, (self.n_agents, 5)),
                          bc(self.ctrl, (self.n_agents, 2)),
                          bc(self.sig, (self.n_agents, 2)),
                          bc(self.h, (self.n_agents,)),
                          bc(self.p, (self.n_agents,)))

    def take(self, idx, axis=0) -> "StateCloud":
        return StateCloud(np.take(self.kin, idx, axis=axis),
                          np.take(self.ctrl, idx, axis=axis),
                          np.take(self.sig, idx, axis=axis),
                          np.take(self.h, idx, axis=axis),
                          np.take(self.p, idx, axis=axis))

    def finite(self) -> bool:
        return bool(np.all(np.isfinite(self.kin)) and np.all(np.isfinite(self.ctrl))
                    and np.all(np.isfinite(self.sig)))


def make_world(kin_rows, n_agents=2) -> StateCloud:
    """Fresh zero-signal world from per-agent kinematic rows."""
    kin = np.asarray(kin_rows, float).reshape(n_agents, 5)
    return StateCloud(kin=kin,
                      ctrl=np.zeros((n_agents, 2)),
                      sig=np.zeros((n_agents, 2)),
                      h=np.zeros(n_agents, bool),
                      p=np.zeros(n_agents, bool))


@dataclass
class Scenario:
    """Geometry of the crossing: agent 0 drives along +x, agent 1 along +y."""

    cos_road: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    sin_road: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    theta_road: np.ndarray = field(
        default_factory=lambda: np.array([0.0, np.pi / 2]))

    def initial_world(self, d_a0: float, d_b0: float, v0: float) -> StateCloud:
        rows = [
            [d_a0, 0.0, self.theta_road[0], 0.0, v0],
            [0.0, d_b0, self.theta_road[1], 0.0, v0],
        ]
        return make_world(rows)

    def d_long(self, kin):
        """Longitudinal lane coordinate for stacked kinematics (..., A, 5)."""
        return kin[..., IX] * self.cos_road + kin[..., IY] * self.sin_road

    def d_lat(self, kin):
        return kin[..., IY] * self.cos_road - kin[..., IX] * self.sin_road

    def heading_error(self, kin):
        from .vehicle import ITH
        return kin[..., ITH] - self.theta_road
