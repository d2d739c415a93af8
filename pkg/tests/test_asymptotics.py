"""Leading-order predictions and shrinking-regime limits."""
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from narrowescape.asymptotics import (
    NonpositiveScaleError,
    predict,
    regime_limit,
    scaled_chords,
)
from narrowescape.geometry import (
    HypothesisWarning,
    disk_config,
    make_window,
    validate_config,
)


def test_single_window_prediction():
    cfg = disk_config([0.0], epsilons=[1e-3])
    p = predict(cfg)
    k = 1.0 / (3.0 * math.log(10.0))
    assert p.lambda0 == pytest.approx(k, rel=1e-14)
    assert p.mean_exit_time * p.lambda0 == pytest.approx(1.0, rel=1e-14)
    assert p.total_flux == pytest.approx(math.sqrt(math.pi) * k, rel=1e-14)
    assert p.exit_prob == (1.0,)
    assert p.lambda_band == pytest.approx(k * k, rel=1e-14)
    assert p.prob_band == pytest.approx(math.sqrt(k), rel=1e-14)


def test_equal_windows_split_half():
    cfg = disk_config([0.0, math.pi], epsilons=[1e-3, 1e-3])
    p = predict(cfg)
    assert p.exit_prob == (0.5, 0.5)
    assert math.fsum(p.exit_prob) == 1.0


def test_fluxes_sum_to_total():
    cfg = disk_config([0.0, 2.0, 4.0], epsilons=[1e-3, 1e-4, 1e-5])
    p = predict(cfg)
    assert math.fsum(p.window_fluxes) == p.total_flux
    assert abs(math.fsum(p.exit_prob) - 1.0) <= 1e-15


def test_3d_flux_normalization():
    wins = [make_window(center=[0.0, 0.0, 1.0], k_eps=0.05, dimension=3)]
    p = predict(validate_config(wins, dimension=3))
    assert p.total_flux == pytest.approx(math.sqrt(4.0 * math.pi / 3.0) * 0.05, rel=1e-14)


def test_regime_limits():
    np.testing.assert_allclose(regime_limit("common", [1.0, 5.0, 0.3]), [1 / 3] * 3)
    np.testing.assert_allclose(regime_limit("power", [1.0, 2.0]), [2 / 3, 1 / 3])
    with pytest.raises(NonpositiveScaleError):
        regime_limit("power", [1.0, 0.0])
    with pytest.raises(NonpositiveScaleError):
        regime_limit("common", [-1.0])
    with pytest.raises(ValueError):
        regime_limit("weird", [1.0])


def test_power_parameterization_matches_limit():
    # chords eps^{a_k} give k_eps = 1/(a_k log(1/eps)); probabilities reduce
    # to the regime limit independently of eps
    a = [1.0, 2.0]
    for eps in (1e-2, 1e-5):
        chords = scaled_chords("power", a, eps)
        cfg = disk_config([0.0, math.pi], epsilons=chords)
        p = predict(cfg)
        np.testing.assert_allclose(p.exit_prob, regime_limit("power", a), rtol=1e-13)


def test_common_scale_tends_uniform():
    a = [1.0, 3.0]
    gaps = []
    for eps in (1e-3, 1e-6, 1e-9):
        chords = scaled_chords("common", a, eps)
        cfg = disk_config([0.0, math.pi], epsilons=chords)
        p = predict(cfg)
        gaps.append(abs(p.exit_prob[0] - 0.5))
    assert gaps[0] > gaps[1] > gaps[2]


def test_scaled_chords_validation():
    with pytest.raises(NonpositiveScaleError):
        scaled_chords("power", [0.0], 1e-3)
    with pytest.raises(ValueError):
        scaled_chords("power", [1.0], 1.5)


@settings(max_examples=40, deadline=None)
@given(
    scale=st.floats(min_value=0.1, max_value=3.0),
    k1=st.floats(min_value=1e-4, max_value=0.05),
    k2=st.floats(min_value=1e-4, max_value=0.05),
)
def test_exit_prob_scale_invariance(scale, k1, k2):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", HypothesisWarning)
        base = disk_config([0.0, math.pi], k_eps=[k1, k2])
        scaled = disk_config([0.0, math.pi], k_eps=[scale * k1, scale * k2])
    np.testing.assert_allclose(
        predict(base).exit_prob, predict(scaled).exit_prob, rtol=1e-12
    )
