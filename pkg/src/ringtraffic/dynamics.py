"""One-period traffic evolution on the ring.

All agents choose their actions from the same snapshot; only then is the state
committed.  Acceleration follows an AR(1) recursion driven by the applied
action, and every state channel receives independent Gaussian noise drawn from a
per-agent, per-channel random stream.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import _kernel
from .behavior import AgentParams, KinematicState

log = logging.getLogger(__name__)

CHANNELS = ("x", "v", "a")


def wrap_position(x, C):
    """Map ``x`` onto ``[0, C)``."""
    if not C > 0:
        raise ValueError("circumference must be positive")
    out = np.mod(x, C)
    # np.mod can round up to exactly C for tiny negative inputs
    out = np.where(out >= C, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def bumper_gap(follower, leader, L_f: float, L_l: float, C: float) -> float:
    """Front-bumper-to-rear-bumper distance; <= 0 means the vehicles overlap."""
    return (leader.x - follower.x) % C - (L_f + L_l) / 2


def ring_gaps(x: np.ndarray, lengths: np.ndarray, C: float) -> np.ndarray:
    """Bumper gap of every vehicle to its leader (index i+1, cyclic)."""
    if x.size == 1:
        return np.array([C - lengths[0]])
    lead = np.roll(x, -1)
    return (lead - x) % C - (lengths + np.roll(lengths, -1)) / 2


@dataclass(frozen=True)
class CollisionEvent:
    step: int
    follower: int
    leader: int
    gap: float


@dataclass
class TrafficState:
    """Snapshot of all vehicles at step ``t``.

    ``prev_actions`` holds the actions applied on the previous step; they feed
    the AR(1) acceleration update.
    """

    t: int
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    prev_actions: np.ndarray

    def __post_init__(self):
        n = len(self.x)
        for name in ("v", "a", "prev_actions"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def states(self) -> list[KinematicState]:
        return [KinematicState(float(x), float(v), float(a)) for x, v, a in zip(self.x, self.v, self.a)]

    def copy(self) -> "TrafficState":
        return TrafficState(self.t, self.x.copy(), self.v.copy(), self.a.copy(), self.prev_actions.copy())


class NoiseSource:
    """Standard-normal draws from one independent stream per (agent, channel).

    The master seed is split with :class:`numpy.random.SeedSequence`; stream
    ``3*i + c`` belongs to agent ``i`` and channel ``c`` (x, v, a).  Draws are
    buffered in blocks, which does not change the sequence each stream yields.
    """

    def __init__(self, seed: int, n_agents: int, block: int = 1024):
        self.seed = seed
        self.n_agents = n_agents
        children = np.random.SeedSequence(seed).spawn(3 * n_agents)
        self._gens = [np.random.Generator(np.random.PCG64(s)) for s in children]
        self._block = block
        self._buf = np.empty((3, n_agents, 0))
        self._pos = 0

    def _refill(self):
        buf = np.empty((3, self.n_agents, self._block))
        for k, g in enumerate(self._gens):
            i, c = divmod(k, 3)
            buf[c, i] = g.standard_normal(self._block)
        self._buf = buf
        self._pos = 0

    def draw(self) -> np.ndarray:
        """Next ``(3, N)`` block of standard normals: rows are x, v, a."""
        if self._pos >= self._buf.shape[2]:
            self._refill()
        out = self._buf[:, :, self._pos]
        self._pos += 1
        return out


@dataclass
class Fleet:
    """Packed, array-backed view of a list of :class:`AgentParams`.

    The period length, horizon and action grid must be shared by all agents.
    """

    params: list[AgentParams]
    prefs: np.ndarray = field(init=False)
    sigma: np.ndarray = field(init=False)
    lengths: np.ndarray = field(init=False)
    grid: np.ndarray = field(init=False)
    H: int = field(init=False)
    dt: float = field(init=False)

    def __post_init__(self):
        if not self.params:
            raise ValueError("empty fleet")
        p0 = self.params[0]
        shared = ("dt", "H", "u_min", "u_max", "grid_points")
        for p in self.params[1:]:
            for name in shared:
                if getattr(p, name) != getattr(p0, name):
                    raise ValueError(f"fleet members disagree on {name}")
        self.prefs = _kernel.pack(self.params)
        self.sigma = np.array([[p.sigma_x, p.sigma_v, p.sigma_a] for p in self.params]).T.copy()
        self.lengths = np.array([p.length for p in self.params])
        self.grid = p0.action_grid()
        self.H = p0.H
        self.dt = p0.dt

    def __len__(self):
        return len(self.params)


def _as_fleet(fleet) -> Fleet:
    return fleet if isinstance(fleet, Fleet) else Fleet(list(fleet))


def policy_actions(state: TrafficState, fleet, C: float) -> np.ndarray:
    """Boltzmann actions of all agents, computed from one snapshot."""
    f = _as_fleet(fleet)
    return _kernel.fleet_actions(state.x, state.v, state.a, f.prefs, f.grid, f.H, f.dt, C)


def detect_collisions(state: TrafficState, lengths: np.ndarray, C: float) -> list[CollisionEvent]:
    gaps = ring_gaps(state.x, lengths, C)
    n = state.n
    return [
        CollisionEvent(state.t, int(i), int((i + 1) % n), float(gaps[i]))
        for i in np.flatnonzero(gaps <= 0)
    ]


def step(
    state: TrafficState,
    fleet: Sequence[AgentParams] | Fleet,
    overrides: Mapping[int, float] | None,
    noise_source: NoiseSource | None,
    C: float,
    collisions: list | None = None,
) -> tuple[TrafficState, np.ndarray]:
    """Advance the traffic one period.

    ``overrides`` maps 0-based agent index to a forced action; it replaces the
    policy action but still flows through the AR(1) recursion.  Passing
    ``noise_source=None`` switches the noise off.  Returns the new state and
    the applied actions.  Overlaps in the new state are logged and appended to
    ``collisions`` when given.
    """
    f = _as_fleet(fleet)
    if len(f) != state.n:
        raise ValueError(f"fleet has {len(f)} agents, state has {state.n}")
    u = policy_actions(state, f, C)
    if overrides:
        for i, val in overrides.items():
            u[i] = val
    if noise_source is None:
        noise = np.zeros((3, state.n))
    else:
        noise = noise_source.draw() * f.sigma
    x1, v1, a1 = _kernel.advance(
        state.x, state.v, state.a, u, state.prev_actions, f.prefs, f.dt, C, noise[0], noise[1], noise[2]
    )
    new = TrafficState(state.t + 1, x1, v1, a1, u)
    events = detect_collisions(new, f.lengths, C)
    for ev in events:
        log.warning("collision at step %d: vehicle %d ran into %d (gap %.3f m)", ev.step, ev.follower, ev.leader, ev.gap)
    if collisions is not None:
        collisions.extend(events)
    return new, u
