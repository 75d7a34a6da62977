"""Experiment manifests: TOML files with one section per command.

Every default reproduces the reference ring-road setup, so an empty manifest
is a valid configuration.  ``dumps(loads(text))`` is lossless for any manifest
this module writes; unset optional values are simply omitted.
"""

from __future__ import annotations

import dataclasses
import hashlib
import sys
from dataclasses import dataclass, field, fields
from typing import Any, get_args, get_type_hints

import tomli_w

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .behavior import AgentParams
from .scenario import ConfigError, EpisodeConfig, Kick


@dataclass
class KickBlock:
    enabled: bool = True
    vehicle: int = 1
    start: float = 10.0
    duration: float = 6.0
    decel: float = -1.0
    release: str = "resume"


@dataclass
class EpisodeBlock:
    N: int = 30
    C: float = 314.0
    steps: int = 3000
    dt: float = 1.0 / 3.0
    cav_on_time: float = 50.0
    heterogeneity_seed: int = 0
    noise_seed: int = 0
    heterogeneity: float = 0.05
    noise: bool = True
    measure_window: list[float] = field(default_factory=lambda: [200.0, 1000.0])
    kick: KickBlock = field(default_factory=KickBlock)


@dataclass
class SimulateBlock:
    cavs: list[int] = field(default_factory=list)
    kappa: float | None = None
    write_trajectory: bool = True


@dataclass
class TadakiScanBlock:
    N_min: int = 10
    N_max: int = 40
    seeds: int = 10


@dataclass
class SweepBlock:
    N: int = 30
    cav_count: int = 1
    kappa_min: float = 1.0
    kappa_max: float = 8.0
    kappa_step: float = 0.1
    kappa_grid: list[float] | None = None
    seeds: int = 20
    bandwidth: float = 0.5
    omegas: list[float] = field(default_factory=lambda: [0.0, 0.5, 0.95, 1.0])
    opt_step: float = 0.01
    exclude_collisions: bool = True

    def grid(self) -> list[float]:
        if self.kappa_grid is not None:
            return [float(k) for k in self.kappa_grid]
        if self.kappa_step <= 0:
            raise ConfigError("kappa_step must be > 0")
        n = int(round((self.kappa_max - self.kappa_min) / self.kappa_step))
        if n < 0:
            return []
        return [round(self.kappa_min + i * self.kappa_step, 10) for i in range(n + 1)]


@dataclass
class FrontierBlock:
    omega_min: float = 0.0
    omega_max: float = 0.95
    omega_step: float = 0.05
    omegas: list[float] | None = None
    report_omega: float = 1.0
    baseline_seeds: int = 20
    sweep_file: str | None = None
    baseline_file: str | None = None

    def grid(self) -> list[float]:
        if self.omegas is not None:
            return [float(w) for w in self.omegas]
        n = int(round((self.omega_max - self.omega_min) / self.omega_step))
        return [round(self.omega_min + i * self.omega_step, 10) for i in range(n + 1)]


# where and how fast a manifest runs, as opposed to what it computes
EXECUTION_KEYS = ("out", "jobs")


@dataclass
class ExperimentManifest:
    out: str | None = None
    jobs: int | None = None
    episode: EpisodeBlock = field(default_factory=EpisodeBlock)
    agent: dict = field(default_factory=dict)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    tadaki_scan: TadakiScanBlock = field(default_factory=TadakiScanBlock)
    sweep: SweepBlock = field(default_factory=SweepBlock)
    frontier: FrontierBlock = field(default_factory=FrontierBlock)

    def agent_params(self) -> AgentParams:
        known = {f.name for f in fields(AgentParams)}
        unknown = set(self.agent) - known
        if unknown:
            raise ConfigError(f"unknown agent parameters: {sorted(unknown)}")
        return AgentParams(**self.agent)

    def episode_config(self, **changes) -> EpisodeConfig:
        e = self.episode
        k = e.kick
        kick = Kick(k.vehicle, k.start, k.duration, k.decel, k.release) if k.enabled else None
        kw = dict(N=e.N, C=e.C, steps=e.steps, dt=e.dt, kick=kick, cav_on_time=e.cav_on_time,
                  heterogeneity_seed=e.heterogeneity_seed, noise_seed=e.noise_seed,
                  heterogeneity=e.heterogeneity, noise=e.noise,
                  measure_window=tuple(e.measure_window), base=self.agent_params())
        kw.update(changes)
        return EpisodeConfig(**kw)

    def to_dict(self) -> dict:
        return _strip_none(dataclasses.asdict(self))

    def digest(self) -> str:
        """Hash of everything that can change results (not ``out`` or ``jobs``)."""
        content = {k: v for k, v in self.to_dict().items() if k not in EXECUTION_KEYS}
        return "sha256:" + hashlib.sha256(tomli_w.dumps(content).encode()).hexdigest()


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    return obj


def _build(cls, data: dict, where: str):
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for f in fields(cls):
        if f.name not in data:
            continue
        val = data[f.name]
        typ = hints[f.name]
        if dataclasses.is_dataclass(typ):
            if not isinstance(val, dict):
                raise ConfigError(f"[{where}.{f.name}] must be a table")
            val = _build(typ, val, f"{where}.{f.name}" if where else f.name)
        elif isinstance(val, int) and not isinstance(val, bool) and (typ is float or float in get_args(typ)):
            val = float(val)
        kwargs[f.name] = val
    return cls(**kwargs)


def from_dict(data: dict) -> ExperimentManifest:
    return _build(ExperimentManifest, data, "")


def loads(text: str) -> ExperimentManifest:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad manifest: {exc}") from exc
    return from_dict(data)


def dumps(manifest: ExperimentManifest) -> str:
    return tomli_w.dumps(manifest.to_dict())


def load(path) -> ExperimentManifest:
    with open(path, "rb") as fh:
        return loads(fh.read().decode())


def apply_override(manifest: ExperimentManifest, assignment: str) -> ExperimentManifest:
    """Apply ``section.key=value`` (value in TOML syntax) and revalidate."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    data = manifest.to_dict()
    node = data
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"{key} does not name a manifest table")
    node[parts[-1]] = value
    return from_dict(data)
