import csv

import numpy as np
import pytest

from ringtraffic.behavior import AgentParams
from ringtraffic.dynamics import Fleet, NoiseSource, step
from ringtraffic.metrics import long_run_stats
from ringtraffic.scenario import (
    ConfigError,
    EpisodeConfig,
    Kick,
    activate_cav,
    build_fleet,
    cav_on_step,
    episode_fleet,
    initialize,
    kick_override,
    run_episode,
    step_at,
)

P = AgentParams()


def test_default_parameters():
    p = P
    assert (p.v_star, p.kappa1, p.w1, p.kappa2_v, p.kappa2_0, p.w2) == (10.49, 0.7, 1.0, 10.0, 0.25, -1.0)
    assert (p.kappa3_c, p.kappa3_v, p.kappa3_d, p.w3, p.length) == (0.6, 0.3, 1.0, -10.0, 3.9)
    assert (p.sigma_x, p.sigma_v, p.sigma_a, p.gamma, p.H) == (0.05, 0.1, 0.1, 0.7, 3)
    assert p.dt == pytest.approx(1 / 3) and p.lam == 200.0
    cfg = EpisodeConfig(N=30)
    assert (cfg.C, cfg.steps, cfg.cav_on_time, cfg.measure_window) == (314.0, 3000, 50.0, (200.0, 1000.0))
    assert cfg.kick == Kick(1, 10.0, 6.0, -1.0)


def test_zero_heterogeneity_gives_identical_agents():
    assert build_fleet(P, 7, heterogeneity_seed=3, level=0.0) == [P] * 7


def test_heterogeneity_statistics():
    fleet = build_fleet(P, 10_000, heterogeneity_seed=0)
    for name in ("v_star", "kappa3_v", "sigma_a"):
        vals = np.array([getattr(p, name) for p in fleet])
        ref = getattr(P, name)
        assert abs(vals.mean() - ref) <= 0.01 * ref
        assert abs(vals.std() - 0.05 * ref) <= 0.10 * 0.05 * ref
        assert np.all(np.abs(vals / ref - 1) <= 0.15 + 1e-12)


def test_heterogeneity_touches_only_three_fields():
    for p in build_fleet(P, 20, heterogeneity_seed=1):
        assert p.with_(v_star=P.v_star, kappa3_v=P.kappa3_v, sigma_a=P.sigma_a) == P


def test_fleet_is_reproducible_and_prefix_stable():
    a = build_fleet(P, 12, heterogeneity_seed=5)
    assert a == build_fleet(P, 12, heterogeneity_seed=5)
    assert build_fleet(P, 30, heterogeneity_seed=5)[:12] == a
    assert a != build_fleet(P, 12, heterogeneity_seed=6)


def test_initialize_even_spacing_at_rest():
    s = initialize(EpisodeConfig(N=30))
    assert np.allclose(np.diff(s.x), 314 / 30)
    assert s.x[0] == 0.0 and s.t == 0
    assert not s.v.any() and not s.a.any() and not s.prev_actions.any()
    one = initialize(EpisodeConfig(N=1, kick=None))
    assert one.x.tolist() == [0.0]


def test_step_at_rounds_up_to_grid():
    dt = 1 / 3
    assert step_at(10.0, dt) == 30
    assert step_at(16.0, dt) == 48
    assert step_at(50.0, dt) == 150
    assert step_at(10.1, dt) == 31


@pytest.mark.parametrize("release", ["resume", "coast"])
def test_kick_override(release):
    cfg = EpisodeConfig(N=30, kick=Kick(release=release))
    assert kick_override(cfg, 12.0, 3.0) == -1.0
    assert kick_override(cfg, 10.0, 3.0) == -1.0
    assert kick_override(cfg, 20.0, 3.0) is None
    assert kick_override(cfg, 16.0, 3.0) is None
    # times are read on the step grid: step 29 is the last one before the window
    assert kick_override(cfg, 29 * cfg.dt, 3.0) is None
    assert kick_override(cfg, 47 * cfg.dt, 3.0) == -1.0
    stopped = kick_override(cfg, 12.0, -0.01)
    assert stopped == (0.0 if release == "coast" else None)


def test_no_kick_means_no_override():
    assert kick_override(EpisodeConfig(N=30, kick=None), 12.0, 3.0) is None


def test_kick_is_an_action_override():
    cfg = EpisodeConfig(N=10, steps=60, measure_window=(0, 20), noise=False, heterogeneity=0.0)
    rec = run_episode(cfg)
    k0, k1 = step_at(10, cfg.dt), step_at(16, cfg.dt)
    braking = rec.v[k0:k1, 0] > 0
    # u[k+1] is the action taken at step k
    assert np.all(rec.u[k0 + 1:k1 + 1, 0][braking] == -1.0)
    assert rec.u[k1 + 1, 0] != -1.0
    # the AR(1) recursion consumes it
    k = k0 + 1
    assert rec.a[k, 0] == pytest.approx(P.gamma * rec.a[k - 1, 0] + (-1.0) - P.gamma * rec.u[k - 1, 0])


def test_activate_cav():
    cfg = EpisodeConfig(N=5, cav_indices=(1,), kappa=6.1)
    fleet = build_fleet(P, 5, 0)
    out = activate_cav(fleet, cfg)
    assert out[0].v_star == 6.1
    assert out[0].with_(v_star=fleet[0].v_star) == fleet[0]
    assert out[1:] == fleet[1:]
    assert cav_on_step(cfg) == 150
    with pytest.raises(ConfigError):
        activate_cav(fleet[:3], EpisodeConfig(N=5, cav_indices=(5,), kappa=6.1))


@pytest.mark.parametrize("bad", [
    dict(N=0), dict(N=5, cav_indices=(6,), kappa=5.0), dict(N=5, cav_indices=(1,)),
    dict(N=5, kappa=-1.0), dict(N=5, measure_window=(0, 2000)), dict(N=5, kick=Kick(vehicle=9)),
    dict(N=100), dict(N=5, steps=-1), dict(N=5, C=0.0),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        EpisodeConfig(**bad)


def test_bad_kick_mode():
    with pytest.raises(ConfigError):
        Kick(release="bounce")


def test_zero_steps_records_initial_state():
    rec = run_episode(EpisodeConfig(N=4, steps=0, measure_window=(0, 0)))
    assert rec.x.shape == (1, 4) and rec.n_steps == 0
    assert not rec.v.any()


def test_episode_is_deterministic():
    cfg = EpisodeConfig(N=12, steps=300, measure_window=(0, 100), cav_indices=(1,), kappa=5.0)
    a, b = run_episode(cfg), run_episode(cfg)
    for f in "xvau":
        assert np.array_equal(getattr(a, f), getattr(b, f))
    c = run_episode(cfg.with_(noise_seed=1))
    assert not np.array_equal(a.x, c.x)


def test_episode_equals_manual_step_loop():
    cfg = EpisodeConfig(N=8, steps=90, measure_window=(0, 30), kick=None)
    rec = run_episode(cfg)
    fleet = Fleet(episode_fleet(cfg))
    noise = NoiseSource(cfg.noise_seed, cfg.N)
    s = initialize(cfg)
    for k in range(cfg.steps):
        s, _ = step(s, fleet, None, noise, cfg.C)
        assert np.array_equal(s.x, rec.x[k + 1])
        assert np.array_equal(s.v, rec.v[k + 1])


def test_cav_switches_on_at_scheduled_step():
    base = EpisodeConfig(N=12, steps=240, cav_on_time=50.0, measure_window=(0, 80))
    plain = run_episode(base)
    ctrl = run_episode(base.with_(cav_indices=(1,), kappa=3.0))
    k = cav_on_step(base)
    assert np.array_equal(plain.x[:k + 1], ctrl.x[:k + 1])
    # the first changed action is the one taken at step k
    assert not np.array_equal(plain.u[k + 1], ctrl.u[k + 1])


def test_identity_control_changes_nothing():
    base = EpisodeConfig(N=12, steps=240, measure_window=(0, 80))
    v_star = episode_fleet(base)[0].v_star
    plain = run_episode(base)
    same = run_episode(base.with_(cav_indices=(1,), kappa=v_star))
    assert np.array_equal(plain.x, same.x)


def test_low_density_disturbance_dies_out():
    stats = long_run_stats(run_episode(EpisodeConfig(N=10)))
    assert stats.R_bar < 1.0 and stats.phase == "free"


def test_high_density_wave_persists():
    stats = long_run_stats(run_episode(EpisodeConfig(N=30)))
    assert stats.R_bar > 4.0 and stats.phase == "jammed"
    assert 5.0 <= stats.V_bar <= 6.0


def test_trajectory_csv(tmp_path):
    rec = run_episode(EpisodeConfig(N=2, steps=3, measure_window=(0, 1)))
    path = tmp_path / "t.csv"
    rec.write_csv(path, ["hello"])
    lines = path.read_text().splitlines()
    assert lines[0] == "# hello"
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["step", "time_s", "vehicle", "x_m", "v_mps", "a_mps2", "u_applied"]
    assert len(rows) - 1 == (3 + 1) * 2
    assert [r[2] for r in rows[1:3]] == ["1", "2"]
    assert float(rows[-1][3]) == rec.x[3, 1]
