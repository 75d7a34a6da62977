"""Choosing the CAV ideal speed.

A sweep simulates the ring for a grid of control speeds ``kappa`` and several
noise seeds.  Per-kappa means are smoothed into response curves for the
long-run average speed and speed range, and the control speed maximizing
``V(kappa) - omega * R(kappa)`` is read off a dense grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .metrics import EpisodeStats
from .parallel import run_stats
from .scenario import ConfigError, EpisodeConfig
from .smoothing import FitError, local_linear


def place_cavs(N: int, M: int) -> tuple[int, ...]:
    """1-based labels of ``M`` CAVs spread evenly around a ring of ``N``."""
    if not 1 <= M <= N:
        raise ConfigError(f"cannot place {M} CAVs among {N} vehicles")
    return tuple(sorted({1 + (k * N) // M for k in range(M)}))


@dataclass
class SweepResult:
    """Per-(kappa, seed) long-run stats of one sweep.

    Arrays are indexed ``[kappa, seed]``.  Runs that hit a collision are kept
    in the arrays but left out of the aggregates when ``exclude_collisions``.
    """

    N: int
    cav_count: int
    kappa_grid: np.ndarray
    seeds: list[int]
    V: np.ndarray
    R: np.ndarray
    collisions: np.ndarray
    phases: list[list[str]]
    exclude_collisions: bool = True

    def __post_init__(self):
        self.kappa_grid = np.asarray(self.kappa_grid, dtype=float)
        if self.kappa_grid.size == 0:
            raise ConfigError("empty kappa grid")
        if np.any(np.diff(self.kappa_grid) <= 0):
            raise ConfigError("kappa grid must be strictly ascending")
        if not self.seeds:
            raise ConfigError("need at least one seed")

    @property
    def valid(self) -> np.ndarray:
        if self.exclude_collisions:
            return self.collisions == 0
        return np.ones_like(self.collisions, dtype=bool)

    def _agg(self, arr, fn):
        out = np.full(len(self.kappa_grid), np.nan)
        for k, row in enumerate(arr):
            vals = row[self.valid[k]]
            if vals.size:
                out[k] = fn(vals)
        return out

    @property
    def run_count(self) -> np.ndarray:
        return self.valid.sum(axis=1)

    @property
    def V_mean(self) -> np.ndarray:
        return self._agg(self.V, np.mean)

    @property
    def R_mean(self) -> np.ndarray:
        return self._agg(self.R, np.mean)

    @property
    def V_std(self) -> np.ndarray:
        return self._agg(self.V, np.std)

    @property
    def R_std(self) -> np.ndarray:
        return self._agg(self.R, np.std)

    @property
    def flagged(self) -> list[tuple[float, int]]:
        """(kappa, seed) cells whose run recorded a collision."""
        k, s = np.nonzero(self.collisions)
        return [(float(self.kappa_grid[i]), self.seeds[j]) for i, j in zip(k, s)]

    def write_csv(self, path, header_lines: Sequence[str] = ()):
        with Path(path).open("w", newline="") as fh:
            for line in header_lines:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(["kappa", "seed", "V_bar", "R_bar", "phase", "collisions"])
            for i, kappa in enumerate(self.kappa_grid):
                for j, seed in enumerate(self.seeds):
                    w.writerow([repr(float(kappa)), seed, repr(float(self.V[i, j])),
                                repr(float(self.R[i, j])), self.phases[i][j], int(self.collisions[i, j])])


def sweep_kappa(N: int, M: int, kappa_grid, seeds_per_kappa: int, base: EpisodeConfig,
                jobs: int | None = None, exclude_collisions: bool = True, progress=None) -> SweepResult:
    """Simulate every (kappa, seed) cell with ``M`` evenly placed CAVs.

    Noise seeds are ``base.noise_seed + s`` for ``s < seeds_per_kappa`` and are
    shared by every kappa.  The heterogeneity seed is taken from ``base`` so
    the whole sweep sees one frozen fleet.
    """
    grid = np.asarray(kappa_grid, dtype=float)
    if grid.size == 0:
        raise ConfigError("empty kappa grid")
    if seeds_per_kappa < 1:
        raise ConfigError("need at least one seed per kappa")
    cavs = place_cavs(N, M)
    seeds = [base.noise_seed + s for s in range(seeds_per_kappa)]
    configs = [base.with_(N=N, cav_indices=cavs, kappa=float(k), noise_seed=s) for k in grid for s in seeds]
    stats = run_stats(configs, jobs, progress)
    shape = (grid.size, len(seeds))
    V = np.array([s.V_bar for s in stats]).reshape(shape)
    R = np.array([s.R_bar for s in stats]).reshape(shape)
    C = np.array([s.collision_count for s in stats]).reshape(shape)
    phases = [[stats[i * len(seeds) + j].phase for j in range(len(seeds))] for i in range(grid.size)]
    return SweepResult(N, M, grid, seeds, V, R, C, phases, exclude_collisions)


def baseline_stats(N: int, seeds: int, base: EpisodeConfig, jobs: int | None = None) -> list[EpisodeStats]:
    """Uncontrolled (no CAV) runs at ``N`` with noise seeds ``base.noise_seed + s``."""
    configs = [base.with_(N=N, cav_indices=(), kappa=None, noise_seed=base.noise_seed + s) for s in range(seeds)]
    return run_stats(configs, jobs)


def mean_stats(stats: Sequence[EpisodeStats], exclude_collisions: bool = True) -> EpisodeStats:
    """Average of several runs' long-run stats (phase taken by majority)."""
    keep = [s for s in stats if not (exclude_collisions and s.collision_count)]
    if not keep:
        raise ValueError("no collision-free runs to average")
    V = float(np.mean([s.V_bar for s in keep]))
    R = float(np.mean([s.R_bar for s in keep]))
    phases = [s.phase for s in keep]
    phase = max(set(phases), key=phases.count)
    density = keep[0].density
    return EpisodeStats(V, R, density, density * V, phase, sum(s.collision_count for s in stats), keep[0].N)


@dataclass
class ResponseCurves:
    V_fit: Callable[[np.ndarray], np.ndarray]
    R_fit: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float]
    bandwidth: float
    residual_spread: tuple[float, float]
    N: int = 0
    cav_count: int = 0

    def check_domain(self, kappa):
        lo, hi = self.domain
        k = np.asarray(kappa, dtype=float)
        if np.any(k < lo - 1e-9) or np.any(k > hi + 1e-9):
            raise ValueError(f"kappa outside fitted domain [{lo}, {hi}]")


def fit_response_curves(sweep: SweepResult, bandwidth: float = 0.5) -> ResponseCurves:
    """Smooth the per-kappa means of V and R with local linear regression."""
    ok = ~np.isnan(sweep.V_mean)
    k = sweep.kappa_grid[ok]
    V, R = sweep.V_mean[ok], sweep.R_mean[ok]
    if k.size < 5:
        raise FitError(f"need at least 5 distinct kappa values, got {k.size}")
    # fails early if the bandwidth leaves some grid point unsupported
    V_hat = local_linear(k, V, k, bandwidth)
    R_hat = local_linear(k, R, k, bandwidth)
    spread = (float(np.std(V - V_hat)), float(np.std(R - R_hat)))

    def V_fit(kappa, _k=k, _y=V):
        return local_linear(_k, _y, kappa, bandwidth)

    def R_fit(kappa, _k=k, _y=R):
        return local_linear(_k, _y, kappa, bandwidth)

    return ResponseCurves(V_fit, R_fit, (float(k[0]), float(k[-1])), bandwidth, spread,
                          sweep.N, sweep.cav_count)


def curves_from_functions(V_fit, R_fit, domain, bandwidth: float = 0.0) -> ResponseCurves:
    """Wrap arbitrary callables of kappa as response curves."""

    def lift(fn):
        def f(kappa):
            k = np.atleast_1d(np.asarray(kappa, dtype=float))
            return np.broadcast_to(np.asarray(fn(k), dtype=float), k.shape).copy()
        return f

    return ResponseCurves(lift(V_fit), lift(R_fit), (float(domain[0]), float(domain[1])), bandwidth, (0.0, 0.0))


def objective(curves: ResponseCurves, kappa, omega: float):
    """Throughput-vs-smoothness objective ``V(kappa) - omega * R(kappa)``."""
    if omega < 0:
        raise ValueError("omega must be >= 0")
    curves.check_domain(kappa)
    out = curves.V_fit(kappa) - omega * curves.R_fit(kappa)
    return float(out[0]) if np.ndim(kappa) == 0 else out


@dataclass(frozen=True)
class ControlPolicy:
    omega: float
    kappa_star: float
    V_bar: float
    R_bar: float
    N: int = 0
    cav_count: int = 0


def dense_grid(domain, step: float = 0.01) -> np.ndarray:
    lo, hi = domain
    n = int(math.floor((hi - lo) / step + 1e-9))
    grid = lo + step * np.arange(n + 1)
    if hi - grid[-1] > 1e-9:
        grid = np.append(grid, hi)
    return grid


def optimize_kappa(curves: ResponseCurves, omega: float, step: float = 0.01) -> ControlPolicy:
    """Grid argmax of the objective; ties go to the larger kappa."""
    grid = dense_grid(curves.domain, step)
    V = curves.V_fit(grid)
    R = curves.R_fit(grid)
    if omega < 0:
        raise ValueError("omega must be >= 0")
    pi = V - omega * R
    i = len(grid) - 1 - int(np.argmax(pi[::-1]))
    return ControlPolicy(float(omega), float(grid[i]), float(V[i]), float(R[i]), curves.N, curves.cav_count)


def efficient_frontier(curves: ResponseCurves, omega_grid, step: float = 0.01) -> list[ControlPolicy]:
    omegas = [float(w) for w in omega_grid]
    if any(b < a for a, b in zip(omegas, omegas[1:])):
        raise ValueError("omega grid must be ascending")
    return [optimize_kappa(curves, w, step) for w in omegas]


def write_frontier_csv(policies: Sequence[ControlPolicy], path, header_lines: Sequence[str] = ()):
    with Path(path).open("w", newline="") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(["omega", "kappa_star", "V_bar", "R_bar"])
        for p in policies:
            w.writerow([repr(float(p.omega)), repr(float(p.kappa_star)), repr(float(p.V_bar)), repr(float(p.R_bar))])


def improvement_report(policy: ControlPolicy, baseline: EpisodeStats) -> tuple[float, float]:
    """Percent change of (V_bar, R_bar) relative to the uncontrolled baseline.

    Positive speed change and negative range change are improvements.
    """
    if baseline.V_bar == 0:
        raise ValueError("baseline average speed is zero")
    if baseline.R_bar == 0:
        raise ValueError("baseline speed range is zero")
    dV = 100.0 * (policy.V_bar - baseline.V_bar) / baseline.V_bar
    dR = 100.0 * (policy.R_bar - baseline.R_bar) / baseline.R_bar
    return dV, dR


@dataclass(frozen=True)
class PhaseBoundaries:
    kappa_L: float | None
    kappa_H: float | None
    kappa_valley: float


def phase_boundaries(curves: ResponseCurves, step: float = 0.01) -> PhaseBoundaries:
    """Locate the jammed/free and free/suppressed transitions on fitted curves.

    ``kappa_H`` is where the fitted speed range rises most steeply.
    ``kappa_L`` is the trip-up peak: the highest interior local maximum of the
    range below ``kappa_H``.  ``kappa_valley`` is the range minimum between the
    two.  A boundary is None when the curve shows no such feature.
    """
    grid = dense_grid(curves.domain, step)
    R = curves.R_fit(grid)
    slope = np.gradient(R, grid)
    ih = int(np.argmax(slope))
    kappa_H = float(grid[ih]) if slope[ih] > 0 else None
    upper = ih if kappa_H is not None else len(grid) - 1
    peaks = [i for i in range(1, upper) if R[i] >= R[i - 1] and R[i] >= R[i + 1]]
    kappa_L = None
    lo = 0
    if peaks:
        ip = max(peaks, key=lambda i: R[i])
        kappa_L = float(grid[ip])
        lo = ip
    iv = lo + int(np.argmin(R[lo: upper + 1]))
    return PhaseBoundaries(kappa_L, kappa_H, float(grid[iv]))
