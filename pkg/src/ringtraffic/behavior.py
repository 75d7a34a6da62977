"""Single-agent driving decisions: anticipation, utilities and the Boltzmann policy.

Everything here is a pure function of its arguments and is written for clarity,
one agent at a time.  The fleet-wide hot path lives in :mod:`ringtraffic._kernel`
and is checked against these functions in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class AgentParams:
    """Preference, noise and decision parameters of one driver.

    Defaults are the fleet-average calibrated values for the 314 m ring.
    """

    v_star: float = 10.49
    kappa1: float = 0.7
    w1: float = 1.0
    kappa2_v: float = 10.0
    kappa2_0: float = 0.25
    w2: float = -1.0
    kappa3_c: float = 0.6
    kappa3_v: float = 0.3
    kappa3_d: float = 1.0
    w3: float = -10.0
    length: float = 3.9
    sigma_x: float = 0.05
    sigma_v: float = 0.1
    sigma_a: float = 0.1
    gamma: float = 0.7
    lam: float = 200.0
    u_min: float = -6.0
    u_max: float = 4.0
    grid_points: int = 41
    H: int = 3
    dt: float = 1.0 / 3.0

    def __post_init__(self):
        problems = []
        if not self.v_star > 0:
            problems.append("v_star must be > 0")
        if not self.kappa1 > 0:
            problems.append("kappa1 must be > 0")
        if min(self.sigma_x, self.sigma_v, self.sigma_a) < 0:
            problems.append("noise std devs must be >= 0")
        if not 0 <= self.gamma < 1:
            problems.append("gamma must lie in [0, 1)")
        if not self.u_min < self.u_max:
            problems.append("u_min must be < u_max")
        if self.grid_points < 2:
            problems.append("grid_points must be >= 2")
        if self.H < 0:
            problems.append("H must be >= 0")
        if not self.dt > 0:
            problems.append("dt must be > 0")
        if not self.length > 0:
            problems.append("length must be > 0")
        if not (self.w1 > 0 and self.w2 < 0 and self.w3 < 0):
            problems.append("weights must satisfy w1 > 0, w2 < 0, w3 < 0")
        if problems:
            raise ValueError("invalid AgentParams: " + "; ".join(problems))

    def with_(self, **changes) -> "AgentParams":
        return replace(self, **changes)

    def action_grid(self) -> np.ndarray:
        return action_grid(self)


class KinematicState(NamedTuple):
    x: float
    v: float
    a: float


@dataclass(frozen=True)
class DecisionState:
    ego: KinematicState
    leader: KinematicState
    ego_length: float
    leader_length: float
    circumference: float

    def __post_init__(self):
        if not self.circumference > 0:
            raise ValueError("circumference must be > 0")
        if not (self.ego_length > 0 and self.leader_length > 0):
            raise ValueError("vehicle lengths must be > 0")


@dataclass(frozen=True)
class AnticipatedPath:
    """Mental rollout of ego and leader over h = 0..H.

    ``ego_states[0]`` and ``leader_states[0]`` are the current states.  Positions
    are wrapped onto the ring; ``leader_offset`` carries the same leader path
    unwrapped and measured from the ego's current position, which is what the
    collision term needs.
    """

    ego_states: tuple[KinematicState, ...]
    leader_states: tuple[KinematicState, ...]
    leader_offset: tuple[float, ...]
    ego_offset: tuple[float, ...]
    ego_length: float
    leader_length: float
    dt: float


def action_grid(params: AgentParams) -> np.ndarray:
    return np.linspace(params.u_min, params.u_max, params.grid_points)


def headway(x_follower: float, x_leader: float, C: float) -> float:
    """Centre-to-centre distance from follower forward to leader on the ring.

    A vehicle that is its own leader (single-vehicle ring) sees a full lap.
    """
    d = (x_leader - x_follower) % C
    return C if d == 0.0 and x_leader == x_follower else d


def anticipate(state: DecisionState, u: float, params: AgentParams) -> AnticipatedPath:
    dt = params.dt
    C = state.circumference
    e, l = state.ego, state.leader

    ego = [KinematicState(e.x % C, e.v, e.a)]
    lead = [KinematicState(l.x % C, l.v, l.a)]
    ego_off = [0.0]
    lead_off = [headway(e.x, l.x, C)]

    xe, ve, ae = 0.0, e.v, e.a
    xl, vl, al = lead_off[0], l.v, l.a
    for _ in range(params.H):
        xe, ve, ae = xe + ve * dt, ve + ae * dt, u
        xl, vl, al = xl + vl * dt, vl + al * dt, 0.0
        ego_off.append(xe)
        lead_off.append(xl)
        ego.append(KinematicState((e.x + xe) % C, ve, ae))
        lead.append(KinematicState((e.x + xl) % C, vl, al))

    return AnticipatedPath(
        ego_states=tuple(ego),
        leader_states=tuple(lead),
        leader_offset=tuple(lead_off),
        ego_offset=tuple(ego_off),
        ego_length=state.ego_length,
        leader_length=state.leader_length,
        dt=dt,
    )


def _next_velocity(s: KinematicState, dt: float) -> float:
    return s.v + s.a * dt


def forward_reward(path: AnticipatedPath, u: float, params: AgentParams) -> float:
    # only the h = 0 element enters
    speed = _next_velocity(path.ego_states[0], path.dt) + u * path.dt
    z = (speed - params.v_star) / (params.kappa1 * params.v_star)
    return math.exp(-z * z)


def backward_penalty(path: AnticipatedPath, u: float, params: AgentParams) -> float:
    speed = _next_velocity(path.ego_states[0], path.dt) + u * path.dt
    return math.exp(-params.kappa2_v * (speed + params.kappa2_0))


def risk_shape(r: float) -> float:
    """exp(-r^2 - 2r): 1 at r = 0, strictly decreasing for r >= 0."""
    return math.exp(-r * r - 2.0 * r)


def collision_terms(path: AnticipatedPath, u: float, params: AgentParams) -> list[float]:
    """Per-horizon collision values for h = 0..H (before taking the max)."""
    dt = path.dt
    out = []
    for h in range(len(path.ego_states)):
        e, l = path.ego_states[h], path.leader_states[h]
        ve_next = e.v + e.a * dt
        vl_next = l.v + l.a * dt
        xe_next = path.ego_offset[h] + e.v * dt
        xl_next = path.leader_offset[h] + l.v * dt
        gap = (xl_next + vl_next * dt - path.leader_length / 2) - (
            xe_next + ve_next * dt + path.ego_length / 2
        )
        if gap <= 0:
            out.append(1.0)
            continue
        speed = ve_next + u * dt
        scale = (
            params.kappa3_c
            + params.kappa3_v * abs(speed)
            + params.kappa3_d * max(speed - vl_next, 0.0)
        )
        out.append(risk_shape(gap / scale))
    return out


def collision_penalty(path: AnticipatedPath, u: float, params: AgentParams) -> float:
    return max(collision_terms(path, u, params))


def effective_utility(state: DecisionState, u: float, params: AgentParams) -> float:
    path = anticipate(state, u, params)
    return (
        params.w1 * forward_reward(path, u, params)
        + params.w2 * backward_penalty(path, u, params)
        + params.w3 * collision_penalty(path, u, params)
    )


def softmax_average(grid: np.ndarray, utilities: np.ndarray, lam: float) -> float:
    """Boltzmann-weighted mean of ``grid`` under weights exp(lam * utilities)."""
    z = lam * np.asarray(utilities, dtype=float)
    w = np.exp(z - z.max())
    return float(np.dot(grid, w) / w.sum())


def boltzmann_action(state: DecisionState, params: AgentParams) -> float:
    grid = action_grid(params)
    utilities = np.array([effective_utility(state, u, params) for u in grid])
    return softmax_average(grid, utilities, params.lam)
