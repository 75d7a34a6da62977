"""Ring-road traffic with utility-maximizing drivers and a speed-setting controller."""

from .behavior import AgentParams, boltzmann_action, effective_utility
from .dynamics import Fleet, NoiseSource, TrafficState, step
from .mechanism import (
    ControlPolicy,
    ResponseCurves,
    SweepResult,
    efficient_frontier,
    fit_response_curves,
    improvement_report,
    optimize_kappa,
    phase_boundaries,
    place_cavs,
    sweep_kappa,
)
from .metrics import EpisodeStats, long_run_stats
from .scenario import ConfigError, EpisodeConfig, Kick, TrajectoryRecord, run_episode

__all__ = [
    "AgentParams", "boltzmann_action", "effective_utility",
    "Fleet", "NoiseSource", "TrafficState", "step",
    "ControlPolicy", "ResponseCurves", "SweepResult", "efficient_frontier", "fit_response_curves",
    "improvement_report", "optimize_kappa", "phase_boundaries", "place_cavs", "sweep_kappa",
    "EpisodeStats", "long_run_stats",
    "ConfigError", "EpisodeConfig", "Kick", "TrajectoryRecord", "run_episode",
]
