"""Domain configuration and window geometry for the unit disk and unit ball.

A configuration is a set of small absorbing windows on the boundary of the
unit disk (2D) or unit ball (3D).  Each window is the trace of a ball of
chord radius e^{-1/k} (2D) or pi*k/3 (3D) centered at a boundary point,
where k > 0 is the window's capacity parameter.  The module validates window
sets against the separation hypothesis kbar < min(1/|log(rho0/2)|, 1)/2,
exposes the closed boundary arcs, and computes the level-set curve of the
explicit quasimode by bisection along rays from a window center.

Angles are wrapped to [0, 2*pi); arcs are closed sets and may straddle 0.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

TAU = 2.0 * math.pi

# Lower admissibility bound for the outer level-set exponent: 1 + 1/8 + log(2)/2.
C_MINUS_FLOOR = 1.0 + 0.125 + 0.5 * math.log(2.0)


class DuplicateCenterError(ValueError):
    """Two window centers coincide."""


class OverlapError(ValueError):
    """Window closures are not pairwise disjoint, or a radius exceeds rho0/2."""


class HypothesisError(ValueError):
    """The capacity bound kbar < min(1/|log(rho0/2)|, 1)/2 is violated (strict mode)."""


class HypothesisWarning(UserWarning):
    """Non-strict notice that the capacity bound does not hold at this scale."""


class BracketError(ValueError):
    """The level-set bisection bracket is invalid for the given direction."""


def wrap_angle(theta: float) -> float:
    """Map an angle into [0, 2*pi)."""
    t = math.fmod(theta, TAU)
    return t + TAU if t < 0.0 else t


@dataclass(frozen=True)
class WindowSpec:
    """One absorbing window: a boundary center point and its capacity parameter.

    center is a unit vector; in 2D angle holds the same point as a wrapped
    polar angle (None in 3D).
    """

    center: tuple[float, ...]
    k_eps: float
    angle: float | None = None

    @property
    def chord_radius(self) -> float:
        """Radius of the ball whose boundary trace is the window.

        In 3D the radius is pi*k/3: a flat disk of radius a absorbs
        diffusive flux 4*a, so this choice gives each window the capacity
        (4/3)*pi*k = |domain|*k and the decay rate tracks kbar, exactly as
        the log-capacity map does in 2D.
        """
        if len(self.center) == 2:
            return math.exp(-1.0 / self.k_eps)
        return math.pi * self.k_eps / 3.0


def make_window(
    *,
    angle: float | None = None,
    center: Sequence[float] | None = None,
    epsilon: float | None = None,
    k_eps: float | None = None,
    dimension: int = 2,
) -> WindowSpec:
    """Build a WindowSpec from a center (angle in 2D, unit vector in 3D) and
    exactly one of epsilon (window size) or k_eps (capacity parameter).

    In 2D epsilon is the chord radius, k_eps = -1/log(epsilon); in 3D epsilon
    is the window radius, k_eps = 3*epsilon/pi.
    """
    if (epsilon is None) == (k_eps is None):
        raise ValueError("specify exactly one of epsilon or k_eps")
    if dimension == 2:
        if angle is None:
            raise ValueError("2D windows are centered by angle")
        if k_eps is None:
            if not 0.0 < epsilon < 1.0:
                raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
            k_eps = -1.0 / math.log(epsilon)
        if not (k_eps > 0.0 and math.isfinite(k_eps)):
            raise ValueError(f"k_eps must be positive and finite, got {k_eps}")
        a = wrap_angle(float(angle))
        return WindowSpec(center=(math.cos(a), math.sin(a)), k_eps=k_eps, angle=a)
    if dimension == 3:
        if center is None:
            raise ValueError("3D windows are centered by a unit vector")
        c = np.asarray(center, dtype=float)
        n = float(np.linalg.norm(c))
        if c.shape != (3,) or n == 0.0:
            raise ValueError("3D center must be a nonzero 3-vector")
        c = c / n
        if k_eps is None:
            if not 0.0 < epsilon < 1.0:
                raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
            k_eps = 3.0 * epsilon / math.pi
        if not (k_eps > 0.0 and math.isfinite(k_eps)):
            raise ValueError(f"k_eps must be positive and finite, got {k_eps}")
        return WindowSpec(center=tuple(c), k_eps=k_eps, angle=None)
    raise ValueError(f"dimension must be 2 or 3, got {dimension}")


@dataclass(frozen=True)
class DomainConfig:
    """Validated window configuration on the unit disk or ball.

    rho0 is the minimum pairwise Euclidean distance between window centers
    (2.0 by convention for a single window, the diameter); kbar is the sum of
    the capacity parameters.
    """

    dimension: int
    windows: tuple[WindowSpec, ...]
    rho0: float
    kbar: float

    @property
    def k_values(self) -> np.ndarray:
        return np.array([w.k_eps for w in self.windows])

    def kbar_bound(self) -> float:
        """Upper bound required of kbar: min(1/|log(rho0/2)|, 1)/2."""
        lg = abs(math.log(self.rho0 / 2.0))
        return 0.5 * min(1.0 / lg, 1.0) if lg > 0.0 else 0.5


def validate_config(
    windows: Sequence[WindowSpec],
    dimension: int = 2,
    strict: bool = False,
) -> DomainConfig:
    """Check separation and capacity hypotheses and freeze a DomainConfig.

    Raises DuplicateCenterError for coincident centers, OverlapError when
    window closures meet or a chord radius exceeds rho0/2, and
    HypothesisError (strict) or HypothesisWarning (default) when the kbar
    bound fails.
    """
    if dimension not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dimension}")
    if not windows:
        raise ValueError("at least one window is required")
    for w in windows:
        if len(w.center) != dimension:
            raise ValueError("window dimensionality does not match the domain")
        if not (w.k_eps > 0.0 and math.isfinite(w.k_eps)):
            raise ValueError(f"k_eps must be positive and finite, got {w.k_eps}")

    centers = np.array([w.center for w in windows], dtype=float)
    n = len(windows)
    rho0 = 2.0
    if n > 1:
        dists = []
        for i in range(n):
            for j in range(i + 1, n):
                d = float(np.linalg.norm(centers[i] - centers[j]))
                if d < 1e-12:
                    raise DuplicateCenterError(
                        f"windows {i} and {j} share a center (distance {d:.2e})"
                    )
                dists.append((d, i, j))
        rho0 = min(d for d, _, _ in dists)
        for d, i, j in dists:
            ri = windows[i].chord_radius
            rj = windows[j].chord_radius
            if ri + rj >= d:
                raise OverlapError(
                    f"windows {i} and {j} are not disjoint: "
                    f"radii {ri:.3g} + {rj:.3g} >= center distance {d:.3g}"
                )
    for i, w in enumerate(windows):
        if w.chord_radius > rho0 / 2.0:
            raise OverlapError(
                f"window {i} radius {w.chord_radius:.3g} exceeds rho0/2 = {rho0 / 2:.3g}"
            )

    kbar = math.fsum(w.k_eps for w in windows)
    cfg = DomainConfig(dimension=dimension, windows=tuple(windows), rho0=rho0, kbar=kbar)
    bound = cfg.kbar_bound()
    if kbar >= bound:
        msg = (
            f"kbar = {kbar:.4g} violates the bound {bound:.4g} "
            f"(window separation rho0 = {rho0:.4g}); asymptotic error terms "
            "are uncontrolled at this scale"
        )
        if strict:
            raise HypothesisError(msg)
        warnings.warn(msg, HypothesisWarning, stacklevel=2)
    return cfg


def disk_config(
    angles: Sequence[float],
    epsilons: Sequence[float] | None = None,
    k_eps: Sequence[float] | None = None,
    strict: bool = False,
) -> DomainConfig:
    """Convenience constructor for 2D configs from parallel parameter lists."""
    if (epsilons is None) == (k_eps is None):
        raise ValueError("specify exactly one of epsilons or k_eps")
    if epsilons is not None:
        wins = [make_window(angle=a, epsilon=e) for a, e in zip(angles, epsilons, strict=True)]
    else:
        wins = [make_window(angle=a, k_eps=k) for a, k in zip(angles, k_eps, strict=True)]
    return validate_config(wins, dimension=2, strict=strict)


def window_arc(config: DomainConfig, k: int) -> tuple[float, float]:
    """Closed boundary arc [lo, hi] of window k, wrapped to [0, 2*pi).

    The half-width is 2*arcsin(chord_radius/2); lo > hi when the arc
    straddles angle 0.
    """
    if config.dimension != 2:
        raise ValueError("window_arc is defined on the disk")
    w = config.windows[k]
    half = 2.0 * math.asin(0.5 * w.chord_radius)
    return wrap_angle(w.angle - half), wrap_angle(w.angle + half)


def _in_arc(theta: float, lo: float, hi: float) -> bool:
    if lo <= hi:
        return lo <= theta <= hi
    return theta >= lo or theta <= hi


def classify_boundary_point(config: DomainConfig, theta: float) -> int | None:
    """Index of the window whose closed arc contains the angle, else None."""
    t = wrap_angle(theta)
    for k in range(len(config.windows)):
        lo, hi = window_arc(config, k)
        if _in_arc(t, lo, hi):
            return k
    return None


@dataclass(frozen=True)
class LevelSetBounds:
    """Exponents of the bracketing annulus radii exp(-c/k_eps) around each
    window center; c_minus must exceed 1 + 1/8 + log(2)/2 and c_plus lie in
    (0, 1/2) for the sign guarantees to hold."""

    c_minus: float = 1.5
    c_plus: float = 0.4

    def __post_init__(self) -> None:
        if not self.c_minus > C_MINUS_FLOOR:
            raise ValueError(
                f"c_minus must exceed {C_MINUS_FLOOR:.6f}, got {self.c_minus}"
            )
        if not 0.0 < self.c_plus < 0.5:
            raise ValueError(f"c_plus must lie in (0, 1/2), got {self.c_plus}")

    def r_minus(self, k_eps: float) -> float:
        return math.exp(-self.c_minus / k_eps)

    def r_plus(self, k_eps: float) -> float:
        return math.exp(-self.c_plus / k_eps)


def starshape_margin(config: DomainConfig, bounds: LevelSetBounds, k: int) -> float:
    """Margin of the radial-uniqueness conditions for window k.

    Nonnegative when both r_plus <= rho0/2 and
    k_eps - r_plus*(2/rho0 + 1/2) >= 0 hold, so the level set is star shaped
    with respect to the window center and the radial root is unique.
    """
    ke = config.windows[k].k_eps
    rp = bounds.r_plus(ke)
    m1 = config.rho0 / 2.0 - rp
    m2 = ke - rp * (2.0 / config.rho0 + 0.5)
    return min(m1, m2)


class StarShapeWarning(UserWarning):
    """The radial-uniqueness conditions fail; the bracketed root is still returned."""


def levelset_radius(
    config: DomainConfig,
    k: int,
    direction: Sequence[float],
    bounds: LevelSetBounds = LevelSetBounds(),
    tol: float = 1e-12,
    phi_tol: float = 1e-10,
    phi: Callable[[np.ndarray], float] | None = None,
) -> float:
    """Distance along `direction` from window center k to the quasimode's
    zero level set, by bisection on [r_minus, r_plus].

    direction must point from the center into the open disk; the quasimode is
    positive at r_minus and negative at r_plus, and bisection continues past
    the interval tolerance until |phi| <= phi_tol at the returned point.
    """
    if config.dimension != 2:
        raise ValueError("level-set brackets exp(-c/k_eps) are disk-specific")
    if phi is None:
        from .quasimode import Quasimode

        phi = Quasimode(config).eval_phi
    xk = np.asarray(config.windows[k].center, dtype=float)
    d = np.asarray(direction, dtype=float)
    nrm = float(np.linalg.norm(d))
    if nrm == 0.0:
        raise ValueError("direction must be nonzero")
    d = d / nrm
    if float(d @ (-xk)) <= 0.0:
        raise BracketError("direction does not point from the window center into the disk")
    if starshape_margin(config, bounds, k) < 0.0:
        warnings.warn(
            f"star-shapedness conditions fail for window {k}; "
            "the level set may not be radially unique at this scale",
            StarShapeWarning,
            stacklevel=2,
        )

    ke = config.windows[k].k_eps
    lo = bounds.r_minus(ke)
    hi = bounds.r_plus(ke)
    f_lo = phi(xk + lo * d)
    f_hi = phi(xk + hi * d)
    if not (f_lo > 0.0 and f_hi < 0.0):
        raise BracketError(
            f"phi does not change sign on [{lo:.3e}, {hi:.3e}] "
            f"(phi = {f_lo:.3e}, {f_hi:.3e}); hypothesis violated or epsilon too large"
        )
    mid = 0.5 * (lo + hi)
    for _ in range(200):
        f_mid = phi(xk + mid * d)
        if (hi - lo) <= tol and abs(f_mid) <= phi_tol:
            break
        if f_mid > 0.0:
            lo = mid
        else:
            hi = mid
        new_mid = 0.5 * (lo + hi)
        if new_mid == mid or new_mid == lo or new_mid == hi:
            break  # float resolution reached
        mid = new_mid
    return mid


def modified_boundary_polyline(
    config: DomainConfig,
    k: int,
    n_points: int,
    bounds: LevelSetBounds = LevelSetBounds(),
) -> np.ndarray:
    """Sample the level-set curve replacing window k as an (n_points, 2) array.

    Directions fan over the inward half-plane at the window center (shrunk
    infinitesimally from the tangents so every ray enters the disk), ordered
    along the curve; endpoints approach the curve's junctions with the
    boundary circle.
    """
    if n_points < 1:
        raise ValueError("n_points must be >= 1")
    from .quasimode import Quasimode

    phi = Quasimode(config).eval_phi
    xk = np.asarray(config.windows[k].center, dtype=float)
    inward = -xk
    if n_points == 1:
        psis = np.array([0.0])
    else:
        psis = np.linspace(-0.5 * math.pi, 0.5 * math.pi, n_points) * (1.0 - 1e-9)
    pts = np.empty((n_points, 2))
    for i, psi in enumerate(psis):
        c, s = math.cos(psi), math.sin(psi)
        d = np.array([c * inward[0] - s * inward[1], s * inward[0] + c * inward[1]])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StarShapeWarning)
            t = levelset_radius(config, k, d, bounds=bounds, phi=phi)
        pts[i] = xk + t * d
    return pts
