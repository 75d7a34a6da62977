import csv

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ringtraffic import cli
from ringtraffic import manifest as mf
from ringtraffic.scenario import ConfigError, EpisodeConfig, Kick

# short, cheap episodes for exercising the commands end to end
FAST = ["--set", "episode.steps=90", "--set", "episode.measure_window=[10.0, 30.0]",
        "--set", "episode.cav_on_time=5.0"]
SWEEP = FAST + ["--N", "8", "--seeds", "2", "--set", "sweep.kappa_grid=[2.0, 3.0, 4.0, 5.0, 6.0, 7.0]",
                "--set", "sweep.bandwidth=2.5"]


def read(path):
    lines = path.read_text().splitlines()
    header = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader(ln for ln in lines if not ln.startswith("#")))
    return header, rows


# manifests


def test_defaults_reproduce_reference_setup():
    m = mf.ExperimentManifest()
    cfg = m.episode_config()
    assert cfg == EpisodeConfig(N=30)
    assert (cfg.C, cfg.steps, cfg.measure_window, cfg.cav_on_time) == (314.0, 3000, (200.0, 1000.0), 50.0)
    assert cfg.kick == Kick(1, 10.0, 6.0, -1.0)
    assert m.sweep.opt_step == 0.01 and m.agent_params().lam == 200.0
    assert (m.tadaki_scan.N_min, m.tadaki_scan.N_max) == (10, 40)
    assert m.frontier.grid()[0] == 0.0 and m.frontier.grid()[-1] == 0.95


def test_empty_manifest_is_valid():
    assert mf.loads("") == mf.ExperimentManifest()


manifests = st.builds(
    lambda N, seed, kick, cavs, kappa, grid, omegas, lam, out: mf.from_dict({
        "out": out,
        "episode": {"N": N, "noise_seed": seed, "kick": {"enabled": kick}},
        "agent": {"lam": lam},
        "simulate": {"cavs": cavs, **({"kappa": kappa} if kappa else {})},
        "sweep": {"N": N, **({"kappa_grid": grid} if grid else {})},
        "frontier": {"omegas": omegas},
    }),
    st.integers(2, 40), st.integers(0, 2**31), st.booleans(), st.lists(st.integers(1, 2), max_size=2),
    st.one_of(st.none(), st.floats(0.5, 12)), st.one_of(st.none(), st.lists(st.floats(0.5, 9), max_size=5)),
    st.lists(st.floats(0, 2), max_size=4), st.floats(1, 1e4), st.one_of(st.none(), st.text("abc/", max_size=8)),
)


@settings(max_examples=100, deadline=None)
@given(manifests)
def test_manifest_round_trip(m):
    text = mf.dumps(m)
    back = mf.loads(text)
    assert back == m
    assert mf.dumps(back) == text
    assert back.digest() == m.digest()


def test_digest_ignores_execution_settings():
    m = mf.ExperimentManifest()
    assert mf.apply_override(m, "jobs=4").digest() == m.digest()
    assert mf.apply_override(m, 'out="x"').digest() == m.digest()
    assert mf.apply_override(m, "episode.N=31").digest() != m.digest()


def test_overrides():
    m = mf.apply_override(mf.ExperimentManifest(), "sweep.omegas=[0, 1]")
    assert m.sweep.omegas == [0.0, 1.0]
    m = mf.apply_override(m, "episode.kick.release=coast")
    assert m.episode.kick.release == "coast"
    m = mf.apply_override(m, "agent.v_star=9")
    assert m.agent_params().v_star == 9.0
    with pytest.raises(ConfigError):
        mf.apply_override(m, "sweep.bogus=1")
    with pytest.raises(ConfigError):
        mf.apply_override(m, "no-equals-sign")
    with pytest.raises(ConfigError):
        mf.apply_override(m, "agent.nonsense=1").agent_params()


def test_bad_manifest_text():
    with pytest.raises(ConfigError):
        mf.loads("[episode\nN=")
    with pytest.raises(ConfigError):
        mf.loads("episode = 3")


def test_load_from_file(tmp_path):
    p = tmp_path / "m.toml"
    p.write_text("[episode]\nN = 12\n[sweep]\nkappa_min = 2\n")
    m = mf.load(p)
    assert m.episode.N == 12 and m.sweep.kappa_min == 2.0 and isinstance(m.sweep.kappa_min, float)


def test_sweep_grid():
    assert mf.SweepBlock().grid()[:3] == [1.0, 1.1, 1.2]
    assert len(mf.SweepBlock().grid()) == 71
    assert mf.SweepBlock(kappa_min=5, kappa_max=4).grid() == []


# commands


def test_simulate_smoke(tmp_path):
    out = tmp_path / "sim"
    assert cli.main(["simulate", "--out", str(out), "--N", "2", "--steps", "3"]) == 0
    header, rows = read(out / "trajectory.csv")
    assert len(rows) == (3 + 1) * 2
    assert list(rows[0]) == ["step", "time_s", "vehicle", "x_m", "v_mps", "a_mps2", "u_applied"]
    digest = mf.load(out / "manifest.toml").digest()
    assert f"# manifest-digest: {digest}" in header
    header, rows = read(out / "stats.csv")
    assert f"# manifest-digest: {digest}" in header and len(rows) == 1
    assert (out / "run.log").exists()


def test_simulate_with_cav_and_config_file(tmp_path):
    cfg = tmp_path / "m.toml"
    cfg.write_text("[episode]\nN = 6\nsteps = 60\nmeasure_window = [5.0, 20.0]\n[simulate]\nwrite_trajectory = false\n")
    out = tmp_path / "o"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--cavs", "1", "--kappa", "4.0"]) == 0
    assert not (out / "trajectory.csv").exists()
    m = mf.load(out / "manifest.toml")
    assert m.simulate.cavs == [1] and m.simulate.kappa == 4.0


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["simulate", "--N", "2", "--steps", "3"]) == 0
    assert (tmp_path / "env" / "stats.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert cli.main(["simulate", "--out", str(tmp_path / name), "--N", "3", "--steps", "30"]) == 0
    for f in ("trajectory.csv", "stats.csv", "manifest.toml"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_tadaki_scan_single_N(tmp_path):
    out = tmp_path / "scan"
    assert cli.main(["tadaki-scan", "--out", str(out), "--N-min", "6", "--N-max", "6", "--seeds", "2",
                     "--jobs", "1"] + FAST) == 0
    header, rows = read(out / "tadaki_scan.csv")
    assert len(rows) == 1 and rows[0]["N"] == "6"
    assert any(h.startswith("# transition_N:") for h in header)
    assert set(rows[0]) >= {"N", "density", "V_bar", "R_bar", "flow"}


def test_tadaki_transition():
    from ringtraffic.metrics import EpisodeStats

    def runs(jammed, total):
        return [EpisodeStats(5, 9 if i < jammed else 1, 0.1, 0.5, "jammed" if i < jammed else "free")
                for i in range(total)]

    assert cli.tadaki_transition({26: runs(2, 10), 27: runs(5, 10), 28: runs(6, 10)}) == 28
    assert cli.tadaki_transition({26: runs(0, 10)}) is None


def test_sweep_and_frontier(tmp_path):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--out", str(out), "--jobs", "1"] + SWEEP) == 0
    for f in ("sweep_summary.csv", "curves.csv", "kappa_star.csv"):
        header, rows = read(out / f)
        assert any(h.startswith("# manifest-digest: sha256:") for h in header)
    _, rows = read(out / "sweep_summary.csv")
    assert len(rows) == 12 and list(rows[0]) == ["kappa", "seed", "V_bar", "R_bar", "phase", "collisions"]
    _, rows = read(out / "kappa_star.csv")
    assert [float(r["omega"]) for r in rows] == [0.0, 0.5, 0.95, 1.0]

    sweep = cli.read_sweep_csv(out / "sweep_summary.csv")
    assert sweep.N == 8 and sweep.cav_count == 1 and sweep.V.shape == (6, 2)

    fr = tmp_path / "fr"
    assert cli.main(["frontier", "--out", str(fr), "--jobs", "1", "--sweep-file", str(out / "sweep_summary.csv"),
                     "--omegas", "0", "0.5", "0.95", "--set", "frontier.baseline_seeds=2"] + SWEEP) == 0
    _, rows = read(fr / "frontier.csv")
    assert len(rows) == 3
    R = [float(r["R_bar"]) for r in rows]
    assert R[0] >= R[1] >= R[2]
    _, rows = read(fr / "improvement.csv")
    assert len(rows) == 4 and float(rows[-1]["omega"]) == 1.0


def test_frontier_single_omega_is_max_throughput(tmp_path):
    out = tmp_path / "sw"
    assert cli.main(["sweep", "--out", str(out), "--jobs", "1"] + SWEEP) == 0
    _, ks = read(out / "kappa_star.csv")
    fr = tmp_path / "fr"
    assert cli.main(["frontier", "--out", str(fr), "--jobs", "1", "--sweep-file", str(out / "sweep_summary.csv"),
                     "--omegas", "0", "--set", "frontier.baseline_seeds=1"] + SWEEP) == 0
    _, rows = read(fr / "frontier.csv")
    assert len(rows) == 1 and rows[0]["kappa_star"] == ks[0]["kappa_star"]


@pytest.mark.parametrize("argv", [
    ["sweep", "--set", "sweep.kappa_grid=[]"],
    ["frontier", "--set", "frontier.baseline_seeds=0"],
    ["simulate", "--set", "episode.N=0"],
    ["simulate", "--config", "/nonexistent/manifest.toml"],
    ["simulate", "--set", "episode.bogus=1"],
    ["tadaki-scan", "--N-min", "12", "--N-max", "10"],
])
def test_config_errors_exit_nonzero(argv, tmp_path, capsys):
    assert cli.main(argv + ["--out", str(tmp_path / "x")]) != 0
    assert "error" in capsys.readouterr().err


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        cli.main(["dance"])
