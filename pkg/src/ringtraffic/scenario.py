"""Ring-road experiment protocol.

Vehicles start evenly spaced and at rest, one vehicle is briefly forced to
brake, optional CAVs get their ideal speed replaced by the control value, and
the full trajectory is recorded.

Vehicle labels in configs and output files are 1-based (vehicle 1 is the first
vehicle, vehicle N is directly behind it); arrays are 0-based internally.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .behavior import AgentParams
from .dynamics import CollisionEvent, Fleet, NoiseSource, TrafficState, step

HETEROGENEOUS_FIELDS = ("v_star", "kappa3_v", "sigma_a")

_EPS = 1e-9


class ConfigError(ValueError):
    pass


def step_at(seconds: float, dt: float) -> int:
    """First step index whose time is >= ``seconds``."""
    return math.ceil(seconds / dt - _EPS)


@dataclass(frozen=True)
class Kick:
    """Braking override applied to one vehicle early in the episode.

    While the window is open and the vehicle still moves forward it brakes at
    ``decel``.  Once its velocity is no longer positive, ``release`` decides
    what happens: ``"resume"`` hands control back to the driver's own policy,
    ``"coast"`` forces a zero action until the window closes.
    """

    vehicle: int = 1
    start: float = 10.0
    duration: float = 6.0
    decel: float = -1.0
    release: str = "resume"

    def __post_init__(self):
        if self.release not in ("resume", "coast"):
            raise ConfigError(f"unknown kick release mode {self.release!r}")
        if self.duration < 0:
            raise ConfigError("kick duration must be >= 0")


@dataclass(frozen=True)
class EpisodeConfig:
    N: int
    C: float = 314.0
    steps: int = 3000
    dt: float = 1.0 / 3.0
    kick: Kick | None = field(default_factory=Kick)
    cav_indices: tuple[int, ...] = ()
    cav_on_time: float = 50.0
    kappa: float | None = None
    heterogeneity_seed: int = 0
    noise_seed: int = 0
    heterogeneity: float = 0.05
    noise: bool = True
    measure_window: tuple[float, float] = (200.0, 1000.0)
    base: AgentParams = field(default_factory=AgentParams)

    def __post_init__(self):
        object.__setattr__(self, "cav_indices", tuple(sorted(int(i) for i in self.cav_indices)))
        object.__setattr__(self, "measure_window", tuple(float(t) for t in self.measure_window))
        self.validate()

    def validate(self):
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if not self.C > 0:
            raise ConfigError("circumference must be > 0")
        if self.N > 1 and self.C <= self.N * self.base.length:
            raise ConfigError("vehicles do not fit on the ring")
        if self.steps < 0:
            raise ConfigError("steps must be >= 0")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        for i in self.cav_indices:
            if not 1 <= i <= self.N:
                raise ConfigError(f"CAV index {i} outside 1..{self.N}")
        if self.cav_indices and self.kappa is None:
            raise ConfigError("CAVs configured without a control speed kappa")
        if self.kappa is not None and not self.kappa > 0:
            raise ConfigError("kappa must be > 0")
        if self.kick is not None and not 1 <= self.kick.vehicle <= self.N:
            raise ConfigError(f"kicked vehicle {self.kick.vehicle} outside 1..{self.N}")
        lo, hi = self.measure_window
        if not 0 <= lo <= hi <= self.steps * self.dt + _EPS:
            raise ConfigError(f"measurement window {self.measure_window} not inside the episode")

    def with_(self, **changes) -> "EpisodeConfig":
        return replace(self, **changes)

    @property
    def agent_base(self) -> AgentParams:
        return self.base if self.base.dt == self.dt else self.base.with_(dt=self.dt)


@dataclass
class TrajectoryRecord:
    """Snapshots at steps 0..steps; ``u[k]`` is the action that produced snapshot k (0 at k=0)."""

    config: EpisodeConfig
    x: np.ndarray
    v: np.ndarray
    a: np.ndarray
    u: np.ndarray
    collisions: list[CollisionEvent]

    @property
    def n_steps(self) -> int:
        return self.x.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.x.shape[0]) * self.config.dt

    def write_csv(self, path, header_lines: Sequence[str] = ()):
        path = Path(path)
        n = self.x.shape[1]
        with path.open("w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["step", "time_s", "vehicle", "x_m", "v_mps", "a_mps2", "u_applied"])
            x, v, a, u = (arr.tolist() for arr in (self.x, self.v, self.a, self.u))
            for k in range(len(x)):
                t = repr(k * self.config.dt)
                for i in range(n):
                    w.writerow([k, t, i + 1, repr(x[k][i]), repr(v[k][i]), repr(a[k][i]), repr(u[k][i])])


def build_fleet(base: AgentParams, N: int, heterogeneity_seed: int, level: float = 0.05,
                truncate: float = 3.0) -> list[AgentParams]:
    """Fleet of ``N`` drivers around ``base``.

    ``v_star``, ``kappa3_v`` and ``sigma_a`` are scaled by independent factors
    ``1 + eps`` with ``eps ~ N(0, level^2)``, redrawn until
    ``|eps| <= truncate * level``.  Draws happen agent by agent, so the fleet
    for N vehicles is a prefix of the fleet for any larger N with the same seed.
    """
    if N < 1:
        raise ConfigError("N must be >= 1")
    if level == 0:
        return [base] * N
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(heterogeneity_seed)))
    bound = truncate * level
    fleet = []
    for _ in range(N):
        changes = {}
        for name in HETEROGENEOUS_FIELDS:
            eps = rng.normal(0.0, level)
            while abs(eps) > bound:
                eps = rng.normal(0.0, level)
            changes[name] = getattr(base, name) * (1.0 + eps)
        fleet.append(base.with_(**changes))
    return fleet


def initialize(config: EpisodeConfig) -> TrafficState:
    """Evenly spaced vehicles at rest, vehicle 1 at x=0."""
    N = config.N
    x = np.arange(N) * (config.C / N)
    z = np.zeros(N)
    return TrafficState(0, x, z.copy(), z.copy(), z.copy())


def kick_override(config: EpisodeConfig, t: float, v_kicked: float) -> float | None:
    """Forced action for the kicked vehicle at time ``t``, or ``None``."""
    kick = config.kick
    if kick is None:
        return None
    k = round(t / config.dt)
    if not step_at(kick.start, config.dt) <= k < step_at(kick.start + kick.duration, config.dt):
        return None
    if v_kicked > 0:
        return kick.decel
    return 0.0 if kick.release == "coast" else None


def cav_on_step(config: EpisodeConfig) -> int:
    return step_at(config.cav_on_time, config.dt)


def activate_cav(fleet: Sequence[AgentParams], config: EpisodeConfig) -> list[AgentParams]:
    """Fleet after CAV activation: each CAV's ideal speed becomes ``config.kappa``."""
    if not config.cav_indices:
        return list(fleet)
    if config.kappa is None:
        raise ConfigError("kappa not set")
    out = list(fleet)
    for i in config.cav_indices:
        if not 1 <= i <= len(out):
            raise ConfigError(f"CAV index {i} outside 1..{len(out)}")
        out[i - 1] = out[i - 1].with_(v_star=config.kappa)
    return out


def episode_fleet(config: EpisodeConfig) -> list[AgentParams]:
    return build_fleet(config.agent_base, config.N, config.heterogeneity_seed, config.heterogeneity)


def run_episode(config: EpisodeConfig) -> TrajectoryRecord:
    config.validate()
    N, steps, dt = config.N, config.steps, config.dt
    human = Fleet(episode_fleet(config))
    controlled = Fleet(activate_cav(human.params, config)) if config.cav_indices else human
    on_step = cav_on_step(config)
    noise = NoiseSource(config.noise_seed, N) if config.noise else None
    kicked = config.kick.vehicle - 1 if config.kick is not None else None

    shape = (steps + 1, N)
    X, V, A, U = (np.empty(shape) for _ in range(4))
    state = initialize(config)
    X[0], V[0], A[0], U[0] = state.x, state.v, state.a, state.prev_actions
    collisions: list[CollisionEvent] = []
    for k in range(steps):
        fleet = controlled if k >= on_step else human
        overrides = None
        if kicked is not None:
            forced = kick_override(config, k * dt, state.v[kicked])
            if forced is not None:
                overrides = {kicked: forced}
        state, _ = step(state, fleet, overrides, noise, config.C, collisions)
        X[k + 1], V[k + 1], A[k + 1], U[k + 1] = state.x, state.v, state.a, state.prev_actions
    return TrajectoryRecord(config, X, V, A, U, collisions)


__all__ = [
    "ConfigError", "Kick", "EpisodeConfig", "TrajectoryRecord", "build_fleet", "initialize",
    "kick_override", "activate_cav", "cav_on_step", "episode_fleet", "run_episode", "step_at",
]
