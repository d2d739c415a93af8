"""Window configuration, arc classification, and level-set geometry."""
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrowescape.geometry import (
    BracketError,
    DomainConfig,
    DuplicateCenterError,
    HypothesisError,
    HypothesisWarning,
    LevelSetBounds,
    OverlapError,
    StarShapeWarning,
    classify_boundary_point,
    disk_config,
    levelset_radius,
    make_window,
    modified_boundary_polyline,
    starshape_margin,
    validate_config,
    window_arc,
    wrap_angle,
)

TAU = 2.0 * math.pi


def two_window_01():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        return disk_config([0.0, math.pi], epsilons=[0.1, 0.1])


def test_k_eps_from_epsilon():
    w = make_window(angle=0.0, epsilon=0.1)
    assert w.k_eps == pytest.approx(1.0 / math.log(10.0), rel=1e-15)
    assert w.chord_radius == pytest.approx(0.1, rel=1e-14)


def test_epsilon_k_exclusivity():
    with pytest.raises(ValueError):
        make_window(angle=0.0, epsilon=0.1, k_eps=0.2)
    with pytest.raises(ValueError):
        make_window(angle=0.0)


def test_single_window_rho0_convention():
    cfg = disk_config([1.0], epsilons=[1e-3])
    assert cfg.rho0 == 2.0
    assert cfg.kbar_bound() == 0.5


def test_antipodal_rho0():
    cfg = two_window_01()
    assert cfg.rho0 == pytest.approx(2.0, abs=1e-15)
    assert cfg.kbar == pytest.approx(2.0 / math.log(10.0), rel=1e-14)


def test_kbar_bound_depends_on_separation():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        cfg = disk_config([0.0, 0.2], epsilons=[1e-4, 1e-4])
    rho0 = 2.0 * math.sin(0.1)
    assert cfg.rho0 == pytest.approx(rho0, rel=1e-14)
    assert cfg.kbar_bound() == pytest.approx(0.5 / abs(math.log(rho0 / 2.0)), rel=1e-14)


def test_hypothesis_warning_and_strict():
    wins = [make_window(angle=a, epsilon=0.1) for a in (0.0, math.pi)]
    with pytest.warns(HypothesisWarning):
        validate_config(wins)
    with pytest.raises(HypothesisError):
        validate_config(wins, strict=True)


def test_duplicate_center():
    wins = [make_window(angle=0.0, epsilon=1e-3), make_window(angle=TAU, epsilon=1e-3)]
    with pytest.raises(DuplicateCenterError):
        validate_config(wins)


def test_overlapping_windows():
    wins = [make_window(angle=0.0, epsilon=1e-3), make_window(angle=1e-9, epsilon=1e-3)]
    with pytest.raises(OverlapError):
        validate_config(wins)


def test_radius_exceeding_half_separation():
    # centers 0.2 rad apart (chord ~0.1997), chords 0.15 each: sum exceeds it
    wins = [make_window(angle=0.0, epsilon=0.15), make_window(angle=0.2, epsilon=0.15)]
    with pytest.raises(OverlapError):
        validate_config(wins)


def test_window_arc_wraps():
    cfg = disk_config([0.0], epsilons=[0.1])
    lo, hi = window_arc(cfg, 0)
    half = 2.0 * math.asin(0.05)
    assert hi == pytest.approx(half, rel=1e-14)
    assert lo == pytest.approx(TAU - half, rel=1e-14)
    assert lo > hi  # straddles angle 0


def test_classification_closed_endpoints():
    cfg = disk_config([0.0], epsilons=[0.1])
    lo, hi = window_arc(cfg, 0)
    assert classify_boundary_point(cfg, hi) == 0
    assert classify_boundary_point(cfg, lo) == 0
    assert classify_boundary_point(cfg, hi + 1e-9) is None
    assert classify_boundary_point(cfg, 0.0) == 0
    assert classify_boundary_point(cfg, math.pi) is None


def test_classification_two_windows():
    cfg = two_window_01()
    assert classify_boundary_point(cfg, 0.01) == 0
    assert classify_boundary_point(cfg, math.pi - 0.01) == 1
    assert classify_boundary_point(cfg, math.pi / 2) is None


@settings(max_examples=60, deadline=None)
@given(
    c=st.floats(min_value=-10.0, max_value=10.0),
    eps=st.floats(min_value=1e-6, max_value=0.2),
    off=st.floats(min_value=-1.0, max_value=1.0),
)
def test_classification_consistent_with_arc(c, eps, off):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        cfg = disk_config([c], epsilons=[eps])
    half = 2.0 * math.asin(eps / 2.0)
    theta = c + off * half
    inside = abs(off) <= 1.0
    got = classify_boundary_point(cfg, theta)
    if abs(abs(off) - 1.0) > 1e-9:  # avoid the endpoint rounding knife-edge
        assert (got == 0) == inside


def test_levelset_bounds_validation():
    b = LevelSetBounds()
    assert b.c_minus == 1.5 and b.c_plus == 0.4
    with pytest.raises(ValueError):
        LevelSetBounds(c_minus=1.4)
    with pytest.raises(ValueError):
        LevelSetBounds(c_plus=0.6)
    k = 0.2
    assert b.r_minus(k) == pytest.approx(math.exp(-7.5), rel=1e-14)
    assert b.r_plus(k) == pytest.approx(math.exp(-2.0), rel=1e-14)


def test_levelset_radius_single_window():
    cfg = disk_config([0.0], epsilons=[1e-3])
    b = LevelSetBounds()
    k = cfg.windows[0].k_eps
    t = levelset_radius(cfg, 0, [-1.0, 0.0])
    assert b.r_minus(k) <= t <= b.r_plus(k)
    # the root sits at e^{-1/k} up to the O(k*t) bulk correction
    assert t == pytest.approx(1e-3, rel=1e-2)
    from narrowescape.quasimode import Quasimode

    phi = Quasimode(cfg).eval_phi
    x = np.array([1.0 - t, 0.0])
    assert abs(phi(x)) <= 1e-10


def test_levelset_radius_small_window_phi_tolerance():
    cfg = disk_config([0.5], epsilons=[1e-6])
    from narrowescape.quasimode import Quasimode

    phi = Quasimode(cfg).eval_phi
    xk = np.asarray(cfg.windows[0].center)
    d = -xk
    t = levelset_radius(cfg, 0, d)
    assert abs(phi(xk + t * d)) <= 1e-10


def test_levelset_direction_validation():
    cfg = disk_config([0.0], epsilons=[1e-3])
    with pytest.raises(BracketError):
        levelset_radius(cfg, 0, [0.0, 1.0])  # tangent
    with pytest.raises(BracketError):
        levelset_radius(cfg, 0, [1.0, 0.0])  # outward
    with pytest.raises(ValueError):
        levelset_radius(cfg, 0, [0.0, 0.0])


def test_starshape_margin_signs():
    fine = disk_config([0.0], epsilons=[1e-3])
    assert starshape_margin(fine, LevelSetBounds(), 0) > 0.0
    coarse = disk_config([0.0], epsilons=[0.1])
    assert starshape_margin(coarse, LevelSetBounds(), 0) < 0.0
    with pytest.warns(StarShapeWarning):
        levelset_radius(coarse, 0, [-1.0, 0.0])


def test_polyline_endpoints_near_boundary():
    cfg = disk_config([0.0], epsilons=[1e-3])
    pts = modified_boundary_polyline(cfg, 0, 2)
    xk = np.asarray(cfg.windows[0].center)
    rp = LevelSetBounds().r_plus(cfg.windows[0].k_eps)
    for p in pts:
        assert np.linalg.norm(p - xk) <= rp
    # near-tangent rays end close to the circle
    assert np.abs(np.linalg.norm(pts, axis=1) - 1.0).max() < rp


def test_polyline_continuity():
    cfg = disk_config([0.3], epsilons=[1e-3])
    n = 41
    pts = modified_boundary_polyline(cfg, 0, n)
    rp = LevelSetBounds().r_plus(cfg.windows[0].k_eps)
    steps = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    assert steps.max() < 10.0 * (math.pi / (n - 1)) * rp


def test_polyline_mirror_symmetry():
    c = 0.7
    cfg_p = disk_config([c], epsilons=[1e-3])
    cfg_m = disk_config([-c], epsilons=[1e-3])
    pts_p = modified_boundary_polyline(cfg_p, 0, 11)
    pts_m = modified_boundary_polyline(cfg_m, 0, 11)
    mirrored = pts_p.copy()[::-1]
    mirrored[:, 1] *= -1.0
    assert np.abs(pts_m - mirrored).max() < 1e-9


def test_wrap_angle():
    assert wrap_angle(-0.1) == pytest.approx(TAU - 0.1, rel=1e-14)
    assert wrap_angle(TAU + 0.3) == pytest.approx(0.3, abs=1e-12)
    assert wrap_angle(0.0) == 0.0


def test_3d_config_and_window():
    w1 = make_window(center=[0.0, 0.0, 1.0], k_eps=0.05, dimension=3)
    w2 = make_window(center=[0.0, 0.0, -2.0], k_eps=0.05, dimension=3)
    assert w1.chord_radius == pytest.approx(0.05 * math.pi / 3.0, rel=1e-14)
    assert np.linalg.norm(w2.center) == pytest.approx(1.0, rel=1e-15)
    cfg = validate_config([w1, w2], dimension=3)
    assert cfg.rho0 == pytest.approx(2.0, rel=1e-15)
    with pytest.raises(ValueError):
        levelset_radius(cfg, 0, [0.0, 0.0, -1.0])


def test_3d_epsilon_is_window_radius():
    w = make_window(center=[1.0, 0.0, 0.0], epsilon=0.02, dimension=3)
    assert w.k_eps == pytest.approx(0.06 / math.pi, rel=1e-15)
    assert w.chord_radius == pytest.approx(0.02, rel=1e-14)


def test_degenerate_empty_config_rejected():
    with pytest.raises(ValueError):
        validate_config([])
