"""Command-line front end: ``ringtraffic {simulate,tadaki-scan,sweep,frontier}``.

Data files are CSV with ``#`` comment lines on top naming the producing
manifest digest.  Timestamps go only to ``run.log`` so data files are
byte-identical across reruns of the same manifest.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import manifest as mf
from .mechanism import (
    SweepResult,
    baseline_stats,
    dense_grid,
    efficient_frontier,
    fit_response_curves,
    improvement_report,
    mean_stats,
    optimize_kappa,
    phase_boundaries,
    sweep_kappa,
    write_frontier_csv,
)
from .metrics import JAMMED, EpisodeStats, long_run_stats
from .parallel import run_stats
from .scenario import ConfigError, run_episode
from .smoothing import FitError

OUT_ENV = "RINGTRAFFIC_OUT"

log = logging.getLogger("ringtraffic")


def _header(manifest: mf.ExperimentManifest, command: str, extra=()) -> list[str]:
    return [f"ringtraffic {command}", f"manifest-digest: {manifest.digest()}", *extra]


def _write_rows(path: Path, header: list[str], columns: list[str], rows):
    with path.open("w", newline="") as fh:
        for line in header:
            fh.write(f"# {line}\n")
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _stats_row(s: EpisodeStats):
    return [s.N, s.density, s.V_bar, s.R_bar, s.flow, s.phase, s.collision_count]


STATS_COLUMNS = ["N", "density", "V_bar", "R_bar", "flow", "phase", "collisions"]


def cmd_simulate(manifest: mf.ExperimentManifest, out: Path) -> EpisodeStats:
    sim = manifest.simulate
    cfg = manifest.episode_config(cav_indices=tuple(sim.cavs), kappa=sim.kappa)
    record = run_episode(cfg)
    stats = long_run_stats(record)
    header = _header(manifest, "simulate")
    if sim.write_trajectory:
        record.write_csv(out / "trajectory.csv", header)
    _write_rows(out / "stats.csv", header, STATS_COLUMNS, [_stats_row(stats)])
    if record.collisions:
        _write_rows(out / "collisions.csv", header, ["step", "follower", "leader", "gap_m"],
                    [[e.step, e.follower + 1, e.leader + 1, e.gap] for e in record.collisions])
    log.info("N=%d V_bar=%.3f R_bar=%.3f phase=%s", cfg.N, stats.V_bar, stats.R_bar, stats.phase)
    return stats


def tadaki_transition(per_N: dict[int, list[EpisodeStats]]) -> int | None:
    """Smallest N whose runs are jammed in a strict majority."""
    for N in sorted(per_N):
        runs = per_N[N]
        if sum(s.phase == JAMMED for s in runs) * 2 > len(runs):
            return N
    return None


def cmd_tadaki_scan(manifest: mf.ExperimentManifest, out: Path, jobs=None):
    scan = manifest.tadaki_scan
    if scan.N_max < scan.N_min or scan.seeds < 1:
        raise ConfigError("empty tadaki scan")
    Ns = list(range(scan.N_min, scan.N_max + 1))
    base = manifest.episode_config(N=Ns[0])
    configs = [base.with_(N=N, noise_seed=base.noise_seed + s) for N in Ns for s in range(scan.seeds)]
    stats = run_stats(configs, jobs)
    per_N = {N: stats[i * scan.seeds:(i + 1) * scan.seeds] for i, N in enumerate(Ns)}
    transition = tadaki_transition(per_N)
    header = _header(manifest, "tadaki-scan", [f"transition_N: {transition}"])
    rows = []
    for N, runs in per_N.items():
        m = mean_stats(runs, exclude_collisions=False)
        jam = sum(s.phase == JAMMED for s in runs) / len(runs)
        rows.append([N, m.density, m.V_bar, m.R_bar, m.flow, jam, sum(s.collision_count for s in runs)])
    _write_rows(out / "tadaki_scan.csv", header,
                ["N", "density", "V_bar", "R_bar", "flow", "jammed_fraction", "collisions"], rows)
    _write_rows(out / "tadaki_runs.csv", header, ["seed"] + STATS_COLUMNS,
                [[c.noise_seed] + _stats_row(s) for c, s in zip(configs, stats)])
    log.info("transition to sustained jams at N=%s", transition)
    return per_N, transition


def read_sweep_csv(path) -> SweepResult:
    meta = {}
    rows = []
    with open(path, newline="") as fh:
        lines = []
        for line in fh:
            if line.startswith("#"):
                key, _, val = line[1:].strip().partition(":")
                meta[key.strip()] = val.strip()
            else:
                lines.append(line)
        rows = list(csv.DictReader(lines))
    if "N" not in meta or "cav_count" not in meta:
        raise ConfigError(f"{path} lacks N/cav_count header lines")
    kappas = sorted({float(r["kappa"]) for r in rows})
    seeds = sorted({int(r["seed"]) for r in rows})
    ki = {k: i for i, k in enumerate(kappas)}
    si = {s: j for j, s in enumerate(seeds)}
    shape = (len(kappas), len(seeds))
    V, R = np.full(shape, np.nan), np.full(shape, np.nan)
    C = np.zeros(shape, dtype=int)
    phases = [["" for _ in seeds] for _ in kappas]
    for r in rows:
        i, j = ki[float(r["kappa"])], si[int(r["seed"])]
        V[i, j], R[i, j], C[i, j] = float(r["V_bar"]), float(r["R_bar"]), int(r["collisions"])
        phases[i][j] = r["phase"]
    exclude = meta.get("exclude_collisions", "True") == "True"
    return SweepResult(int(meta["N"]), int(meta["cav_count"]), np.array(kappas), seeds, V, R, C, phases, exclude)


def _run_sweep(manifest: mf.ExperimentManifest, jobs) -> SweepResult:
    sw = manifest.sweep
    grid = sw.grid()
    if not grid:
        raise ConfigError("empty kappa grid")
    base = manifest.episode_config(N=sw.N)
    return sweep_kappa(sw.N, sw.cav_count, grid, sw.seeds, base, jobs, sw.exclude_collisions)


def cmd_sweep(manifest: mf.ExperimentManifest, out: Path, jobs=None):
    sw = manifest.sweep
    sweep = _run_sweep(manifest, jobs)
    meta = [f"N: {sw.N}", f"cav_count: {sw.cav_count}", f"exclude_collisions: {sw.exclude_collisions}"]
    sweep.write_csv(out / "sweep_summary.csv", _header(manifest, "sweep", meta))
    curves = fit_response_curves(sweep, sw.bandwidth)
    grid = dense_grid(curves.domain, sw.opt_step)
    _write_rows(out / "curves.csv", _header(manifest, "sweep", meta), ["kappa", "V_fit", "R_fit"],
                zip(map(float, grid), map(float, curves.V_fit(grid)), map(float, curves.R_fit(grid))))
    policies = [optimize_kappa(curves, w, sw.opt_step) for w in sw.omegas]
    bounds = phase_boundaries(curves, sw.opt_step)
    extra = meta + [f"kappa_L: {bounds.kappa_L}", f"kappa_H: {bounds.kappa_H}"]
    write_frontier_csv(policies, out / "kappa_star.csv", _header(manifest, "sweep", extra))
    if sweep.flagged:
        log.warning("%d sweep runs had collisions and were %s", len(sweep.flagged),
                    "excluded" if sw.exclude_collisions else "kept")
    log.info("kappa_L=%s kappa_H=%s", bounds.kappa_L, bounds.kappa_H)
    return sweep, curves, policies, bounds


def _baseline(manifest: mf.ExperimentManifest, jobs) -> EpisodeStats:
    fr = manifest.frontier
    if fr.baseline_file:
        with open(fr.baseline_file, newline="") as fh:
            rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
        stats = [EpisodeStats(float(r["V_bar"]), float(r["R_bar"]), float(r["density"]), float(r["flow"]),
                              r["phase"], int(r["collisions"]), int(r["N"])) for r in rows]
    elif fr.baseline_seeds > 0:
        stats = baseline_stats(manifest.sweep.N, fr.baseline_seeds, manifest.episode_config(N=manifest.sweep.N), jobs)
    else:
        raise ConfigError("frontier needs a baseline: set frontier.baseline_seeds > 0 or frontier.baseline_file")
    return mean_stats(stats)


def cmd_frontier(manifest: mf.ExperimentManifest, out: Path, jobs=None):
    fr = manifest.frontier
    baseline = _baseline(manifest, jobs)
    if fr.sweep_file:
        sweep = read_sweep_csv(fr.sweep_file)
    else:
        sweep = _run_sweep(manifest, jobs)
    curves = fit_response_curves(sweep, manifest.sweep.bandwidth)
    policies = efficient_frontier(curves, fr.grid(), manifest.sweep.opt_step)
    meta = [f"N: {sweep.N}", f"cav_count: {sweep.cav_count}"]
    write_frontier_csv(policies, out / "frontier.csv", _header(manifest, "frontier", meta))
    report_policies = policies + [optimize_kappa(curves, fr.report_omega, manifest.sweep.opt_step)]
    rows = []
    for p in report_policies:
        dV, dR = improvement_report(p, baseline)
        rows.append([p.omega, p.kappa_star, p.V_bar, p.R_bar, baseline.V_bar, baseline.R_bar, dV, dR])
    _write_rows(out / "improvement.csv", _header(manifest, "frontier", meta),
                ["omega", "kappa_star", "V_bar", "R_bar", "baseline_V_bar", "baseline_R_bar",
                 "dV_percent", "dR_percent"], rows)
    return policies, baseline, report_policies[-1]


COMMANDS = {
    "simulate": cmd_simulate,
    "tadaki-scan": cmd_tadaki_scan,
    "sweep": cmd_sweep,
    "frontier": cmd_frontier,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ringtraffic", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", type=Path, help="TOML manifest")
        s.add_argument("--out", type=Path, help=f"output directory (default ${OUT_ENV} or ./results)")
        s.add_argument("--jobs", type=int, help="worker processes (default: all cores)")
        s.add_argument("--seed", type=int, help="base noise seed")
        s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a manifest key, e.g. --set sweep.N=28")
        if name == "simulate":
            s.add_argument("--N", type=int)
            s.add_argument("--kappa", type=float)
            s.add_argument("--cavs", type=int, nargs="*", help="1-based CAV labels")
            s.add_argument("--cav-on", type=float, dest="cav_on_time")
            s.add_argument("--steps", type=int)
            s.add_argument("--no-kick", action="store_true")
        elif name == "tadaki-scan":
            s.add_argument("--N-min", type=int, dest="N_min")
            s.add_argument("--N-max", type=int, dest="N_max")
            s.add_argument("--seeds", type=int)
            s.add_argument("--no-kick", action="store_true")
        else:
            s.add_argument("--N", type=int)
            s.add_argument("--cav-count", type=int, dest="cav_count")
            s.add_argument("--seeds", type=int)
            s.add_argument("--omegas", type=float, nargs="*")
            if name == "frontier":
                s.add_argument("--sweep-file")
    return p


def resolve_manifest(args) -> mf.ExperimentManifest:
    m = mf.load(args.config) if args.config else mf.ExperimentManifest()
    sets = list(args.set)
    if args.seed is not None:
        sets.append(f"episode.noise_seed={args.seed}")
    if args.jobs is not None:
        sets.append(f"jobs={args.jobs}")
    g = vars(args)
    if getattr(args, "no_kick", False):
        sets.append("episode.kick.enabled=false")
    if args.command == "simulate":
        if g.get("N") is not None:
            sets.append(f"episode.N={args.N}")
        if g.get("steps") is not None:
            sets.append(f"episode.steps={args.steps}")
        if g.get("cav_on_time") is not None:
            sets.append(f"episode.cav_on_time={args.cav_on_time}")
        if g.get("kappa") is not None:
            sets.append(f"simulate.kappa={args.kappa}")
        if g.get("cavs") is not None:
            sets.append(f"simulate.cavs={json.dumps(args.cavs)}")
    elif args.command == "tadaki-scan":
        for key in ("N_min", "N_max", "seeds"):
            if g.get(key) is not None:
                sets.append(f"tadaki_scan.{key}={g[key]}")
    else:
        for key in ("N", "cav_count", "seeds"):
            if g.get(key) is not None:
                sets.append(f"sweep.{key}={g[key]}")
        if g.get("omegas") is not None:
            section = "frontier" if args.command == "frontier" else "sweep"
            sets.append(f"{section}.omegas={json.dumps(args.omegas)}")
        if g.get("sweep_file"):
            sets.append(f"frontier.sweep_file={json.dumps(args.sweep_file)}")
    for s in sets:
        m = mf.apply_override(m, s)
    return m


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        manifest = resolve_manifest(args)
        if args.command == "simulate":
            # short runs measure over the whole episode instead of failing validation
            horizon = manifest.episode.steps * manifest.episode.dt
            lo, hi = manifest.episode.measure_window
            if hi > horizon + 1e-9:
                manifest.episode.measure_window = [lo if lo < horizon else 0.0, horizon]
        out = Path(args.out or manifest.out or os.environ.get(OUT_ENV) or "results")
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.toml").write_text(mf.dumps(manifest))
        started = time.time()
        fn = COMMANDS[args.command]
        if args.command == "simulate":
            fn(manifest, out)
        else:
            fn(manifest, out, manifest.jobs)
        with (out / "run.log").open("a") as fh:
            fh.write(json.dumps({"command": args.command, "digest": manifest.digest(),
                                 "started": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(started)),
                                 "seconds": round(time.time() - started, 3)}) + "\n")
    except (ConfigError, FitError, OSError, ValueError) as exc:
        print(f"ringtraffic {args.command}: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
