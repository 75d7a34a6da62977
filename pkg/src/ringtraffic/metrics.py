"""System-level observables: average speed, speed range, long-run means, phases."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

FREE, JAMMED, SUPPRESSED = "free", "jammed", "suppressed"


@dataclass(frozen=True)
class PhaseThresholds:
    R_threshold: float = 3.0
    kappa_L_ref: float = 2.5
    suppressed_fraction: float = 1.0


@dataclass(frozen=True)
class EpisodeStats:
    V_bar: float
    R_bar: float
    density: float
    flow: float
    phase: str
    collision_count: int = 0
    N: int = 0

    def as_dict(self) -> dict:
        return asdict(self)


def _speeds(state) -> np.ndarray:
    v = getattr(state, "v", state)
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise ValueError("need at least one vehicle")
    return v


def average_speed(state) -> float:
    """Fleet mean speed.  Accepts a TrafficState or a plain speed vector."""
    return float(np.mean(_speeds(state)))


def speed_range(state) -> float:
    v = _speeds(state)
    return float(v.max() - v.min())


def speed_series(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-step V(t) and R(t) for a ``(steps, N)`` velocity array."""
    return v.mean(axis=1), v.max(axis=1) - v.min(axis=1)


def window_steps(window, dt: float, n_snapshots: int) -> slice:
    lo, hi = window
    k0 = max(math.ceil(lo / dt - 1e-9), 0)
    k1 = min(math.floor(hi / dt + 1e-9), n_snapshots - 1)
    if k1 < k0:
        raise ValueError(f"measurement window {window} selects no steps")
    return slice(k0, k1 + 1)


def classify_phase(stats: EpisodeStats, kappa: float | None = None,
                   thresholds: PhaseThresholds = PhaseThresholds()) -> str:
    if stats.R_bar > thresholds.R_threshold:
        return JAMMED
    ref = thresholds.kappa_L_ref
    if kappa is not None and kappa < ref and stats.V_bar < thresholds.suppressed_fraction * ref:
        return SUPPRESSED
    return FREE


def stats_from_velocities(v: np.ndarray, N: int, C: float, dt: float, window,
                          kappa: float | None = None, collisions: int = 0,
                          thresholds: PhaseThresholds = PhaseThresholds()) -> EpisodeStats:
    sl = window_steps(window, dt, v.shape[0])
    V, R = speed_series(v[sl])
    V_bar, R_bar = float(V.mean()), float(R.mean())
    density = N / C
    provisional = EpisodeStats(V_bar, R_bar, density, density * V_bar, FREE, collisions, N)
    phase = classify_phase(provisional, kappa, thresholds)
    return EpisodeStats(V_bar, R_bar, density, density * V_bar, phase, collisions, N)


def long_run_stats(record, window=None, thresholds: PhaseThresholds = PhaseThresholds()) -> EpisodeStats:
    """Time-averaged V and R over ``window`` (seconds, inclusive) of a trajectory."""
    cfg = record.config
    window = cfg.measure_window if window is None else window
    kappa = cfg.kappa if cfg.cav_indices else None
    return stats_from_velocities(record.v, cfg.N, cfg.C, cfg.dt, window, kappa,
                                 len(record.collisions), thresholds)
