"""Leading-order predictions for exit statistics from small boundary windows.

To first order in kbar = sum_k k_eps^(k): the principal eigenvalue is kbar
(error O(kbar^2)), the mean exit time 1/kbar, the boundary flux of the
normalized eigenfunction sqrt(|domain|)*k_eps^(k) through window k (error
O(kbar^{3/2}) per window), and the exit-location law puts mass
k_eps^(k)/kbar on window k (error O(sqrt(kbar))).  Two shrinking regimes
have clean limits: windows at a common scale a_k*eps split exits uniformly
as eps -> 0, windows at power scales eps^{a_k} split proportionally to
1/a_k.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import DomainConfig


class NonpositiveScaleError(ValueError):
    """A shrinking-regime scale factor a_k must be positive."""


@dataclass(frozen=True)
class AsymptoticPrediction:
    """Leading-order exit statistics with their error-band scales."""

    kbar: float
    lambda0: float
    mean_exit_time: float
    total_flux: float
    window_fluxes: tuple[float, ...]
    exit_prob: tuple[float, ...]
    lambda_band: float  # O(kbar^2) scale for lambda0 and fluxes
    prob_band: float  # O(sqrt(kbar)) scale for exit probabilities


def predict(config: DomainConfig) -> AsymptoticPrediction:
    """Asymptotic exit statistics for a validated configuration."""
    kbar = config.kbar
    if kbar <= 0.0:
        raise ValueError("kbar must be positive")
    root_vol = math.sqrt(math.pi if config.dimension == 2 else 4.0 * math.pi / 3.0)
    fluxes = tuple(root_vol * w.k_eps for w in config.windows)
    probs = tuple(w.k_eps / kbar for w in config.windows)
    return AsymptoticPrediction(
        kbar=kbar,
        lambda0=kbar,
        mean_exit_time=1.0 / kbar,
        total_flux=math.fsum(fluxes),
        window_fluxes=fluxes,
        exit_prob=probs,
        lambda_band=kbar**2,
        prob_band=math.sqrt(kbar),
    )


def regime_limit(mode: str, a: Sequence[float]) -> np.ndarray:
    """Limiting exit-probability vector as eps -> 0 for a shrinking regime.

    mode 'common' (window sizes a_k * eps) gives the uniform law 1/N
    whatever the a_k; mode 'power' (sizes eps^{a_k}) gives weights
    proportional to 1/a_k.
    """
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("a must be a nonempty 1-D sequence")
    if np.any(arr <= 0.0) or not np.all(np.isfinite(arr)):
        raise NonpositiveScaleError(f"scale factors must be positive, got {list(arr)}")
    if mode == "common":
        return np.full(arr.size, 1.0 / arr.size)
    if mode == "power":
        inv = 1.0 / arr
        return inv / inv.sum()
    raise ValueError(f"unknown regime mode {mode!r}")


def scaled_chords(mode: str, a: Sequence[float], eps: float) -> list[float]:
    """Window chord radii at scale eps under a shrinking regime."""
    arr = np.asarray(a, dtype=float)
    if np.any(arr <= 0.0):
        raise NonpositiveScaleError(f"scale factors must be positive, got {list(arr)}")
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must be in (0, 1), got {eps}")
    if mode == "common":
        return [float(ai * eps) for ai in arr]
    if mode == "power":
        return [float(eps**ai) for ai in arr]
    raise ValueError(f"unknown regime mode {mode!r}")
