"""Kinematic bicycle dynamics, road-frame transforms and rectangle geometry.

All functions accept either scalars or numpy arrays and broadcast; the
simulation core calls them on whole particle clouds at once.  Kinematic state
vectors are ordered ``[x, y, theta, delta, v]`` and controls ``[a, omega]``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# kinematic dimension indices
IX, IY, ITH, IDELTA, IV = 0, 1, 2, 3, 4
# control dimension indices
IA, IOMEGA = 0, 1


@dataclass
class VehicleState:
    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0
    delta: float = 0.0
    v: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta, self.delta, self.v], float)

    @staticmethod
    def from_array(arr) -> "VehicleState":
        x, y, th, de, v = (float(a) for a in arr)
        return VehicleState(x, y, th, de, v)


@dataclass
class ControlInput:
    a: float = 0.0
    omega: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.omega], float)


@dataclass
class RoadFrame:
    """Lane axis of one agent; cos/sin are cached so axis-aligned frames are exact."""

    theta_road: float
    cos: float = None
    sin: float = None

    def __post_init__(self):
        if self.cos is None:
            self.cos = float(np.cos(self.theta_road))
        if self.sin is None:
            self.sin = float(np.sin(self.theta_road))

    @staticmethod
    def along_x() -> "RoadFrame":
        return RoadFrame(0.0, cos=1.0, sin=0.0)

    @staticmethod
    def along_y() -> "RoadFrame":
        return RoadFrame(float(np.pi / 2), cos=0.0, sin=1.0)


@dataclass
class VehicleGeometry:
    length: float = 4.85
    width: float = 1.9
    wheelbase: float = 2.7

    def __post_init__(self):
        if min(self.length, self.width, self.wheelbase) <= 0:
            raise ValueError("vehicle geometry values must be strictly positive")


def step_kinematics(kin, ctrl, dt, wheelbase, max_steer=0.6):
    """Forward-Euler bicycle step on stacked arrays (..., 5) with controls (..., 2).

    Old-state values are used on every right-hand side; speed is clamped at
    zero and steering angle at +-max_steer.
    """
    x, y, th = kin[..., IX], kin[..., IY], kin[..., ITH]
    de, v = kin[..., IDELTA], kin[..., IV]
    a, om = ctrl[..., IA], ctrl[..., IOMEGA]
    out = np.empty(np.broadcast_shapes(kin.shape, ctrl.shape[:-1] + (5,)), float)
    out[..., IX] = x + v * np.cos(th) * dt
    out[..., IY] = y + v * np.sin(th) * dt
    out[..., ITH] = th + v / wheelbase * np.tan(de) * dt
    out[..., IDELTA] = np.clip(de + om * dt, -max_steer, max_steer)
    out[..., IV] = np.maximum(v + a * dt, 0.0)
    return out


def step_bicycle(state: VehicleState, inp: ControlInput, dt: float,
                 geom: VehicleGeometry, max_steer: float = 0.6) -> VehicleState:
    """Advance a single vehicle state by one forward-Euler step."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    vals = np.concatenate([state.as_array(), inp.as_array()])
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite state or control input")
    nxt = step_kinematics(state.as_array(), inp.as_array(), dt,
                          geom.wheelbase, max_steer)
    return VehicleState.from_array(nxt)


def to_road_frame(state: VehicleState, frame: RoadFrame) -> tuple[float, float]:
    """Longitudinal/lateral coordinates of a state in a lane frame."""
    d_long = state.x * frame.cos + state.y * frame.sin
    d_lat = state.y * frame.cos - state.x * frame.sin
    return float(d_long), float(d_lat)


def road_longitudinal(kin, cos_r, sin_r):
    """d_long for stacked kinematics (..., A, 5) with per-agent frame (A,) arrays."""
    return kin[..., IX] * cos_r + kin[..., IY] * sin_r


def road_lateral(kin, cos_r, sin_r):
    return kin[..., IY] * cos_r - kin[..., IX] * sin_r


def rollout_constant_like(kin0, accel, omega, n_steps, dt, wheelbase,
                          max_steer=0.6):
    """Forward-Euler rollout without per-step noise, vectorized over time.

    ``accel``/``omega`` have shape (..., n_steps) (broadcastable); ``kin0`` has
    shape (..., 5).  Returns the kinematic trajectory with shape
    (..., n_steps + 1, 5) including the initial state at index 0.  The result
    matches a loop of ``step_kinematics`` exactly provided the steering bound
    is not crossed and re-crossed within the window (true for the near-zero
    steering rates this model samples).
    """
    lead = np.broadcast_shapes(kin0.shape[:-1], accel.shape[:-1], omega.shape[:-1])
    T = n_steps
    a = np.broadcast_to(accel, lead + (T,))
    om = np.broadcast_to(omega, lead + (T,))
    k0 = np.broadcast_to(kin0, lead + (5,))

    # speed under the max(v + a dt, 0) recursion: Lindley form with cumulative sums
    S = np.cumsum(a, axis=-1) * dt                       # (..., T)
    v0 = k0[..., IV:IV + 1]
    v = np.maximum(v0 + S, S - np.minimum.accumulate(S, axis=-1))
    v_path = np.concatenate([np.broadcast_to(v0, lead + (1,)), v], axis=-1)

    de0 = k0[..., IDELTA:IDELTA + 1]
    de = np.clip(de0 + np.cumsum(om, axis=-1) * dt, -max_steer, max_steer)
    de_path = np.concatenate([np.broadcast_to(de0, lead + (1,)), de], axis=-1)

    th0 = k0[..., ITH:ITH + 1]
    dth = v_path[..., :-1] * np.tan(de_path[..., :-1]) * (dt / wheelbase)
    th = th0 + np.cumsum(dth, axis=-1)
    th_path = np.concatenate([np.broadcast_to(th0, lead + (1,)), th], axis=-1)

    dx = v_path[..., :-1] * np.cos(th_path[..., :-1]) * dt
    dy = v_path[..., :-1] * np.sin(th_path[..., :-1]) * dt
    x = k0[..., IX:IX + 1] + np.cumsum(dx, axis=-1)
    y = k0[..., IY:IY + 1] + np.cumsum(dy, axis=-1)
    x_path = np.concatenate([np.broadcast_to(k0[..., IX:IX + 1], lead + (1,)), x],
                            axis=-1)
    y_path = np.concatenate([np.broadcast_to(k0[..., IY:IY + 1], lead + (1,)), y],
                            axis=-1)

    return np.stack([x_path, y_path, th_path, de_path, v_path], axis=-1)


def _axis_separations(kinA, kinB, geomA: VehicleGeometry, geomB: VehicleGeometry):
    """Signed separations along the four face axes of two oriented rectangles.

    Positive separation on any axis means the rectangles are disjoint (SAT);
    the maximum positive separation is a lower bound on their clearance.
    Shapes: kinA/kinB (..., 5) -> (..., 4).
    """
    cA, sA = np.cos(kinA[..., ITH]), np.sin(kinA[..., ITH])
    cB, sB = np.cos(kinB[..., ITH]), np.sin(kinB[..., ITH])
    dx = kinB[..., IX] - kinA[..., IX]
    dy = kinB[..., IY] - kinA[..., IY]
    hlA, hwA = geomA.length / 2.0, geomA.width / 2.0
    hlB, hwB = geomB.length / 2.0, geomB.width / 2.0

    seps = []
    for (ux, uy), (hl_own, hw_own), (c_o, s_o), (hl_oth, hw_oth) in (
            ((cA, sA), (hlA, hwA), (cB, sB), (hlB, hwB)),
            ((-sA, cA), (hwA, hlA), (cB, sB), (hlB, hwB)),
            ((cB, sB), (hlB, hwB), (cA, sA), (hlA, hwA)),
            ((-sB, cB), (hwB, hlB), (cA, sA), (hlA, hwA)),
    ):
        center = np.abs(dx * ux + dy * uy)
        # own rectangle projects to its half extent along its own face axis
        proj_own = hl_own
        dot_l = np.abs(c_o * ux + s_o * uy)
        dot_w = np.abs(-s_o * ux + c_o * uy)
        proj_oth = hl_oth * dot_l + hw_oth * dot_w
        seps.append(center - proj_own - proj_oth)
    return np.stack(seps, axis=-1)


def rect_separation(kinA, kinB, geomA, geomB):
    """Max face-axis separation; <= 0 iff the rectangles overlap (exact SAT)."""
    return np.max(_axis_separations(kinA, kinB, geomA, geomB), axis=-1)


def rect_overlap_arrays(kinA, kinB, geomA, geomB):
    return rect_separation(kinA, kinB, geomA, geomB) <= 0.0


def rect_gap(kinA, kinB, geomA, geomB):
    """Lower bound on the clearance between two vehicles (0 when overlapping)."""
    return np.maximum(rect_separation(kinA, kinB, geomA, geomB), 0.0)


def rect_overlap(stateA: VehicleState, stateB: VehicleState,
                 geomA: VehicleGeometry, geomB: VehicleGeometry) -> bool:
    """True iff the two heading-oriented footprint rectangles intersect."""
    return bool(rect_overlap_arrays(stateA.as_array(), stateB.as_array(),
                                    geomA, geomB))


def rect_corners(kin, geom: VehicleGeometry):
    """Corner coordinates (..., 4, 2) of the footprint rectangle."""
    kin = np.asarray(kin, float)
    c, s = np.cos(kin[..., ITH]), np.sin(kin[..., ITH])
    hl, hw = geom.length / 2.0, geom.width / 2.0
    offs = np.array([(hl, hw), (hl, -hw), (-hl, -hw), (-hl, hw)])
    x = kin[..., IX, None] + offs[:, 0] * c[..., None] - offs[:, 1] * s[..., None]
    y = kin[..., IY, None] + offs[:, 0] * s[..., None] + offs[:, 1] * c[..., None]
    return np.stack([x, y], axis=-1)
