"""Tests for the reflected-walk exit sampler and its exit-law statistics."""

import math
import warnings

import numpy as np
import pytest

from narrowescape import montecarlo as mc
from narrowescape.fem import EigenResult, solve_mixed
from narrowescape.geometry import (
    DomainConfig,
    HypothesisWarning,
    disk_config,
    make_window,
    validate_config,
    window_arc,
)


def quiet_config(angles, epsilons):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        return disk_config(angles, epsilons=epsilons)


@pytest.fixture(scope="module")
def one_window():
    return disk_config([0.7], epsilons=[0.1])


@pytest.fixture(scope="module")
def two_windows():
    return quiet_config([0.0, math.pi], [0.1, 0.1])


@pytest.fixture(scope="module")
def fem_ground(one_window):
    mesh, system, result = solve_mixed(one_window, h_max=0.08, grading_levels=6)
    return mesh, system, result


# ---------------------------------------------------------------- parameters


def test_simparams_rejects_bad_values():
    with pytest.raises(ValueError):
        mc.SimParams(dt=0.0, n_paths=10, seed=1)
    with pytest.raises(ValueError):
        mc.SimParams(dt=-1e-5, n_paths=10, seed=1)
    with pytest.raises(ValueError):
        mc.SimParams(dt=1e-4, n_paths=0, seed=1)
    with pytest.raises(ValueError):
        mc.SimParams(dt=1e-4, n_paths=10, seed=2**64)
    with pytest.raises(ValueError):
        mc.SimParams(dt=1e-4, n_paths=10, seed=1, start="stationary")
    with pytest.raises(ValueError):
        mc.SimParams(dt=1e-4, n_paths=10, seed=1, start="fixed")
    with pytest.raises(ValueError):
        mc.SimParams(dt=1e-4, n_paths=10, seed=1, max_time=0.0)


def test_default_max_time_tracks_kbar(one_window):
    p = mc.SimParams(dt=1e-4, n_paths=10, seed=1)
    assert p.resolve_max_time(one_window) == pytest.approx(100.0 / one_window.kbar)
    q = mc.SimParams(dt=1e-4, n_paths=10, seed=1, max_time=7.0)
    assert q.resolve_max_time(one_window) == 7.0


def test_richardson_requires_decreasing_steps(one_window):
    p = mc.SimParams(dt=1e-4, n_paths=200, seed=1)
    with pytest.raises(ValueError):
        mc.richardson_lambda(one_window, p, dts=(1e-5, 2e-5))
    with pytest.raises(ValueError):
        mc.richardson_lambda(one_window, p, dts=(1e-5,))


# -------------------------------------------------------------- determinism


def test_same_seed_is_bit_identical(two_windows):
    p = mc.SimParams(dt=2e-4, n_paths=500, seed=123)
    a = mc.sample_paths(two_windows, p)
    b = mc.sample_paths(two_windows, p)
    assert np.array_equal(a.exit_times, b.exit_times)
    assert np.array_equal(a.windows, b.windows)
    assert np.array_equal(a.exit_angles, b.exit_angles, equal_nan=True)
    assert np.array_equal(a.censored, b.censored)


def test_seed_changes_the_sample(two_windows):
    pa = mc.SimParams(dt=2e-4, n_paths=500, seed=123)
    pb = mc.SimParams(dt=2e-4, n_paths=500, seed=124)
    a = mc.sample_paths(two_windows, pa)
    b = mc.sample_paths(two_windows, pb)
    assert not np.array_equal(a.exit_times, b.exit_times)


def test_single_path_matches_ensemble_stream(one_window):
    x0 = (0.2, 0.1)
    p = mc.SimParams(dt=2e-4, n_paths=8, seed=77, start="fixed", x0=x0)
    batch = mc.sample_paths(one_window, p)
    for i in range(8):
        s = mc.simulate_exit(one_window, p, x0, rng_stream=i)
        assert s.exit_time == batch.exit_times[i]
        assert s.window == batch.windows[i]
        assert s.exit_angle == batch.exit_angles[i]


def test_simulate_exit_rejects_outside_start(one_window):
    p = mc.SimParams(dt=1e-4, n_paths=1, seed=1)
    with pytest.raises(ValueError):
        mc.simulate_exit(one_window, p, (1.0, 0.0), rng_stream=0)
    with pytest.raises(ValueError):
        mc.simulate_exit(one_window, p, (0.1, 0.2, 0.3), rng_stream=0)


# -------------------------------------------------- calibration against 1/4


def test_all_absorbing_disk_mean():
    m = mc.all_absorbing_mean(4000, 1e-4, seed=11)
    assert abs(m - 0.25) < 0.012


def test_all_absorbing_ball_mean():
    m = mc.all_absorbing_mean(3000, 2e-4, seed=7, dimension=3)
    assert abs(m - 1.0 / 6.0) < 0.010


def test_fixed_step_agrees_with_adaptive():
    ma = mc.all_absorbing_mean(2500, 1e-4, seed=3, adaptive=True)
    mf = mc.all_absorbing_mean(2500, 1e-4, seed=3, adaptive=False)
    assert abs(ma - mf) < 0.02


# ---------------------------------------------------------------- censoring


def test_zero_windows_always_censored():
    cfg = DomainConfig(dimension=2, windows=(), rho0=2.0, kbar=0.0)
    p = mc.SimParams(dt=1e-3, n_paths=50, seed=5, max_time=0.5)
    batch = mc.sample_paths(cfg, p)
    assert batch.censored.all()
    assert np.all(batch.exit_times == 0.5)
    assert np.all(batch.windows == -1)
    assert np.isnan(batch.exit_angles).all()


def test_censored_paths_record_the_cutoff(one_window):
    p = mc.SimParams(dt=2e-4, n_paths=80, seed=9, max_time=0.05)
    batch = mc.sample_paths(one_window, p)
    assert batch.censored.any()
    assert np.all(batch.exit_times[batch.censored] == 0.05)
    assert np.all(batch.windows[batch.censored] == -1)
    assert np.isnan(batch.exit_angles[batch.censored]).all()
    assert len(batch.uncensored_times()) == (~batch.censored).sum()


def test_default_cutoff_censors_nothing(two_windows):
    p = mc.SimParams(dt=2e-4, n_paths=300, seed=15)
    batch = mc.sample_paths(two_windows, p)
    assert not batch.censored.any()


# ------------------------------------------------------------ exit location


def test_exit_angles_live_on_the_window(one_window):
    lo, hi = window_arc(one_window, 0)
    assert lo < hi
    p = mc.SimParams(dt=1e-4, n_paths=600, seed=31)
    batch = mc.sample_paths(one_window, p)
    hit = ~batch.censored
    assert hit.all()
    assert np.all(batch.windows[hit] == 0)
    assert np.all(batch.exit_angles[hit] >= lo)
    assert np.all(batch.exit_angles[hit] <= hi)
    assert np.all(batch.exit_times[hit] > 0.0)


def test_window_straddling_zero_is_classified():
    cfg = disk_config([0.0], epsilons=[0.1])
    lo, hi = window_arc(cfg, 0)
    assert lo > hi  # arc wraps through angle zero
    p = mc.SimParams(dt=1e-4, n_paths=400, seed=13)
    batch = mc.sample_paths(cfg, p)
    a = batch.exit_angles[~batch.censored]
    assert np.all((a >= lo) | (a <= hi))


# -------------------------------------------------------------- start modes


def test_uniform_start_centers_on_origin():
    p = mc.SimParams(dt=1e-4, n_paths=1, seed=4)
    pts = mc.qsd_initialize(p, size=3000)
    assert pts.shape == (3000, 2)
    assert np.all(np.linalg.norm(pts, axis=1) < 1.0)
    sigma = 0.5 / math.sqrt(3000)
    assert abs(pts[:, 0].mean()) < 3.0 * sigma
    assert abs(pts[:, 1].mean()) < 3.0 * sigma


def test_fixed_start_returns_the_point():
    p = mc.SimParams(dt=1e-4, n_paths=1, seed=4, start="fixed", x0=(0.3, -0.2))
    one = mc.qsd_initialize(p)
    assert one.shape == (2,)
    assert tuple(one) == (0.3, -0.2)
    five = mc.qsd_initialize(p, size=5)
    assert five.shape == (5, 2)
    assert np.all(five == np.array([0.3, -0.2]))


def test_qsd_start_needs_the_ground_mode(one_window):
    p = mc.SimParams(dt=1e-4, n_paths=10, seed=4, start="qsd_fem")
    with pytest.raises(ValueError):
        mc.sample_paths(one_window, p)


def test_qsd_fem_acceptance_rate(fem_ground):
    mesh, system, result = fem_ground
    dens = np.abs(result.u0)
    total = float(np.ones(len(dens)) @ (system.mass @ dens))
    acceptance = total / (math.pi * dens.max())
    assert acceptance >= 0.8


def test_qsd_fem_samples_follow_the_density(fem_ground):
    mesh, system, result = fem_ground
    p = mc.SimParams(dt=1e-4, n_paths=1, seed=4, start="qsd_fem")
    rng = np.random.default_rng(99)
    pts = mc.qsd_initialize(p, result, mesh, rng=rng, size=2500)
    r = np.linalg.norm(pts, axis=1)
    assert np.all(r < 1.0)

    # quadrature mean radius under |u0|, edge-midpoint rule per triangle
    tri = mesh.vertices[mesh.triangles]
    mids = 0.5 * (tri + np.roll(tri, -1, axis=1))
    umid = np.abs(
        0.5 * (result.u0[mesh.triangles] + np.roll(result.u0[mesh.triangles], -1, axis=1))
    )
    rmid = np.linalg.norm(mids, axis=2)
    w = mesh.triangle_areas()[:, None] / 3.0
    r_expected = float((w * umid * rmid).sum() / (w * umid).sum())
    se = r.std(ddof=1) / math.sqrt(len(r))
    assert abs(r.mean() - r_expected) < 3.0 * se


def test_envelope_error_on_spike_density(fem_ground):
    mesh, system, result = fem_ground
    spike = np.zeros(len(mesh.vertices))
    spike[int(np.argmin(np.linalg.norm(mesh.vertices, axis=1)))] = 1.0
    fake = EigenResult(
        eigenvalues=np.array([1.0, 2.0]),
        eigenvectors=np.column_stack([spike, spike]),
        residuals=np.zeros(2),
    )
    p = mc.SimParams(dt=1e-4, n_paths=1, seed=4, start="qsd_fem")
    with pytest.raises(mc.EnvelopeError):
        mc.qsd_initialize(p, fake, mesh, size=200)


# ---------------------------------------------------------- statistics layer


def test_exponential_calibration():
    rng = np.random.default_rng(101)
    stat, p = mc.test_exponential(rng.exponential(1.0, size=10_000))
    assert 0.0 <= stat <= 1.0
    assert p > 0.01
    _, p_bad = mc.test_exponential(rng.uniform(0.0, 2.0, size=10_000))
    assert p_bad < 0.001
    with pytest.raises(mc.InsufficientDataError):
        mc.test_exponential(rng.exponential(1.0, size=50))


def test_independence_calibration():
    rng = np.random.default_rng(7)
    times = rng.exponential(1.0, size=4000)
    wins = rng.integers(0, 2, size=4000)
    chi2, dof, p = mc.test_independence(times, wins, 2)
    assert dof == 3
    assert p > 0.01

    early = (times <= np.quantile(times, 0.25)).astype(np.int64)
    _, _, p_dep = mc.test_independence(times, early, 2)
    assert p_dep < 0.001

    with pytest.raises(ValueError):
        mc.test_independence(times, wins, 1)
    with pytest.raises(mc.DegenerateTableError):
        mc.test_independence(times, np.zeros(4000, dtype=np.int64), 2)
    with pytest.raises(mc.InsufficientDataError):
        mc.test_independence(times[:80], wins[:80], 2)


def test_stats_invariants(two_windows):
    p = mc.SimParams(dt=2e-4, n_paths=800, seed=19)
    stats = mc.run_ensemble(two_windows, p)
    assert stats.n_paths == 800
    assert sum(stats.window_counts) == stats.n_paths - stats.n_censored
    assert sum(stats.window_probs) == pytest.approx(1.0)
    assert stats.lambda_hat == pytest.approx(1.0 / stats.mean_exit_time)
    assert stats.se_mean > 0.0
    assert stats.chi_dof == 3
    assert "estimated" in stats.ks_note
    for k in range(2):
        assert stats.wilson_low[k] <= stats.window_probs[k] <= stats.wilson_high[k]


def test_stats_need_enough_exits(one_window):
    p = mc.SimParams(dt=2e-4, n_paths=50, seed=3)
    with pytest.raises(mc.InsufficientDataError):
        mc.run_ensemble(one_window, p)


# ------------------------------------------------------- physical agreement


def test_symmetric_split_inside_wilson(two_windows):
    p = mc.SimParams(dt=1e-4, n_paths=4000, seed=21)
    stats = mc.run_ensemble(two_windows, p)
    assert stats.n_censored == 0
    assert stats.wilson_low[0] <= 0.5 <= stats.wilson_high[0]
    assert stats.wilson_low[1] <= 0.5 <= stats.wilson_high[1]


def test_escape_rate_tracks_fem(two_windows):
    mesh, system, result = solve_mixed(two_windows, h_max=0.08, grading_levels=6)
    p = mc.SimParams(dt=5e-5, n_paths=4000, seed=29)
    stats = mc.run_ensemble(two_windows, p)
    assert abs(stats.lambda_hat / result.lambda0 - 1.0) < 0.10


def test_power_window_split_tracks_fem_flux():
    # unequal windows eps and eps^2: the small arc is narrower than one
    # step displacement at practical dt, so the walk under-samples it and
    # the split converges to the FEM flux ratio only as dt -> 0
    cfg = quiet_config([0.0, math.pi], [0.05, 0.05**2])
    mesh, system, result = solve_mixed(cfg, h_max=0.08, grading_levels=6)
    flux_ratio = float(result.window_fluxes[0] / result.window_fluxes.sum())
    assert 0.55 < flux_ratio < 2.0 / 3.0

    splits = {}
    for dt in (4e-5, 1e-5, 4e-6):
        p = mc.SimParams(dt=dt, n_paths=3000, seed=37)
        splits[dt] = mc.run_ensemble(cfg, p).window_probs[0]

    # finite dt under-samples the small window, inflating the big share
    assert splits[4e-5] > splits[1e-5] > splits[4e-6] > flux_ratio
    r = math.sqrt(1e-5 / 4e-6)
    extrapolated = (r * splits[4e-6] - splits[1e-5]) / (r - 1.0)
    assert abs(extrapolated - flux_ratio) < 0.05


# ----------------------------------------------------------------- 3D walks


@pytest.fixture(scope="module")
def two_caps():
    wins = [
        make_window(center=(0.0, 0.0, 1.0), k_eps=0.05, dimension=3),
        make_window(center=(0.0, 0.0, -1.0), k_eps=0.05, dimension=3),
    ]
    return validate_config(wins, dimension=3)


def test_ball_exits_land_on_their_caps(two_caps):
    p = mc.SimParams(dt=2e-4, n_paths=800, seed=41)
    batch = mc.sample_paths(two_caps, p)
    assert batch.dimension == 3
    assert not batch.censored.any()
    assert batch.exit_angles.shape == (800, 3)
    norms = np.linalg.norm(batch.exit_angles, axis=1)
    assert np.max(np.abs(norms - 1.0)) < 1e-9
    cos_cap = 1.0 - 0.5 * two_caps.windows[0].chord_radius ** 2
    z = batch.exit_angles[:, 2]
    up = batch.windows == 0
    assert np.all(z[up] >= cos_cap - 1e-12)
    assert np.all(-z[~up] >= cos_cap - 1e-12)


def test_ball_split_is_roughly_even(two_caps):
    p = mc.SimParams(dt=2e-4, n_paths=800, seed=43)
    stats = mc.run_ensemble(two_caps, p)
    assert abs(stats.window_probs[0] - 0.5) < 0.06


def test_ball_same_seed_is_bit_identical(two_caps):
    p = mc.SimParams(dt=5e-4, n_paths=200, seed=47)
    a = mc.sample_paths(two_caps, p)
    b = mc.sample_paths(two_caps, p)
    assert np.array_equal(a.exit_times, b.exit_times)
    assert np.array_equal(a.exit_angles, b.exit_angles, equal_nan=True)
