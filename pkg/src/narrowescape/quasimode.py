"""Explicit quasimode for the principal narrow-escape eigenfunction.

On the unit disk the quasimode is

    phi(x) = -(1/sqrt(pi)) * (1 + sum_k k_eps^(k) * f_k(x)),
    f_k(x) = log|x - x^(k)| + (1 - |x|^2)/4,

with Delta f_k = -1 and vanishing normal derivative on the circle away from
the window center x^(k), so Delta phi = kbar/sqrt(pi) exactly.  On the unit
ball the same construction uses the Neumann-adapted kernel

    f_k(x) = -|B| * (1/(2*pi*rho) + |x|^2/(8*pi) - log(1 - x.x^(k) + rho)/(4*pi)),

rho = |x - x^(k)|, |B| = 4*pi/3, again with Delta f_k = -1.  The module also
provides a polar quadrature rule clipped around the window centers and the
L2 residual norms that quantify how close phi is to the constant
-1/sqrt(|domain|) and to an eigenfunction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import DomainConfig, LevelSetBounds

FOUR_PI = 4.0 * math.pi
BALL_VOLUME = 4.0 * math.pi / 3.0

# Points closer than this to a window center are treated as singular.
SINGULAR_TOL = 1e-13


class SingularPointError(ValueError):
    """Quasimode evaluation at (or too near) a window center."""


class QuadratureError(RuntimeError):
    """The sign-rejection step dropped too much quadrature weight."""


class Quasimode:
    """Evaluator for the quasimode of a validated window configuration."""

    def __init__(self, config: DomainConfig):
        self.config = config
        self.dim = config.dimension
        self.centers = np.array([w.center for w in config.windows], dtype=float)
        self.k_eps = np.array([w.k_eps for w in config.windows], dtype=float)
        self.kbar = config.kbar
        self.volume = math.pi if self.dim == 2 else BALL_VOLUME
        self.norm_const = math.sqrt(self.volume)

    # -- helpers -----------------------------------------------------------

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        pts = np.asarray(x, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        if pts.shape[1] != self.dim:
            raise ValueError(f"points must have {self.dim} components")
        return pts, single

    def _diffs(self, pts: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
        d = pts - self.centers[k]
        rho = np.sqrt(np.einsum("ij,ij->i", d, d))
        if rho.size and rho.min() < SINGULAR_TOL:
            raise SingularPointError(
                f"evaluation within {SINGULAR_TOL:g} of window center {k}"
            )
        return d, rho

    # -- kernels -----------------------------------------------------------

    def eval_f(self, k: int, x) -> float | np.ndarray:
        """Kernel f_k at x (scalar for a single point, array for a batch)."""
        pts, single = self._as_batch(x)
        d, rho = self._diffs(pts, k)
        r2 = np.einsum("ij,ij->i", pts, pts)
        if self.dim == 2:
            out = np.log(rho) + 0.25 * (1.0 - r2)
        else:
            u = 1.0 - pts @ self.centers[k] + rho
            out = -BALL_VOLUME * (
                1.0 / (2.0 * math.pi * rho) + r2 / (8.0 * math.pi) - np.log(u) / FOUR_PI
            )
        return float(out[0]) if single else out

    def grad_f(self, k: int, x) -> np.ndarray:
        """Gradient of f_k at x, shape (dim,) or (n, dim)."""
        pts, single = self._as_batch(x)
        d, rho = self._diffs(pts, k)
        if self.dim == 2:
            out = d / (rho**2)[:, None] - 0.5 * pts
        else:
            u = (1.0 - pts @ self.centers[k] + rho)[:, None]
            out = -BALL_VOLUME * (
                -d / (2.0 * math.pi * rho**3)[:, None]
                + pts / FOUR_PI
                - (-self.centers[k] + d / rho[:, None]) / (FOUR_PI * u)
            )
        return out[0] if single else out

    # -- quasimode ---------------------------------------------------------

    def eval_phi(self, x) -> float | np.ndarray:
        pts, single = self._as_batch(x)
        acc = np.ones(len(pts))
        for k in range(len(self.k_eps)):
            acc = acc + self.k_eps[k] * self.eval_f(k, pts)
        out = -acc / self.norm_const
        return float(out[0]) if single else out

    def grad_phi(self, x) -> np.ndarray:
        pts, single = self._as_batch(x)
        acc = np.zeros_like(pts)
        for k in range(len(self.k_eps)):
            acc = acc + self.k_eps[k] * self.grad_f(k, pts)
        out = -acc / self.norm_const
        return out[0] if single else out

    def laplacian_phi(self, x) -> float | np.ndarray:
        """Exact Laplacian kbar/sqrt(|domain|), constant away from the centers."""
        pts, single = self._as_batch(x)
        val = self.kbar / self.norm_const
        return val if single else np.full(len(pts), val)


# -- quadrature ------------------------------------------------------------


def _lens_area(r: float) -> float:
    """Area of B(c, r) intersected with the unit disk for |c| = 1, r < 1."""
    if r <= 0.0:
        return 0.0
    a1 = r * r * math.acos((r * r) / (2.0 * r))  # = r^2 * acos(r/2)
    a2 = math.acos(1.0 - 0.5 * r * r)
    a3 = 0.5 * math.sqrt((r + 2.0) * r * r * (2.0 - r))
    return a1 + a2 - a3


@dataclass(frozen=True)
class QuadratureRule:
    """Polar product rule on the disk minus the small disks B(x^(k), r_minus).

    Gauss-Legendre in radius along each ray (clipped where the ray enters an
    excluded core) and a periodic trapezoid in angle, refined geometrically
    near the window centers and near the tangency angles where the clipping
    radius is non-smooth.  Weights are positive and sum to the clipped area.
    """

    points: np.ndarray
    weights: np.ndarray
    area: float

    @classmethod
    def build(
        cls,
        config: DomainConfig,
        bounds: LevelSetBounds = LevelSetBounds(),
        n_r: int = 48,
        n_theta: int = 256,
        ladder_depth: int = 22,
    ) -> "QuadratureRule":
        if config.dimension != 2:
            raise ValueError("the polar quadrature rule is disk-specific")
        angles_c = [w.angle for w in config.windows]
        r_minus = [bounds.r_minus(w.k_eps) for w in config.windows]
        r_plus = [bounds.r_plus(w.k_eps) for w in config.windows]

        thetas = set(np.linspace(0.0, 2.0 * math.pi, n_theta, endpoint=False))
        for c, rm, rp in zip(angles_c, r_minus, r_plus):
            span = math.asin(min(rp, 1.0))
            tang = math.asin(min(rm, 1.0))
            for sgn in (-1.0, 1.0):
                thetas.add((c + sgn * tang) % (2.0 * math.pi))
                for j in range(ladder_depth):
                    off = span * 0.5**j
                    thetas.add((c + sgn * off) % (2.0 * math.pi))
                    # resolve the sqrt kink of the clip radius at the tangency
                    for side in (-1.0, 1.0):
                        thetas.add((c + sgn * (tang + side * tang * 0.5**j)) % (2.0 * math.pi))
            thetas.add(c % (2.0 * math.pi))
        th = np.array(sorted(thetas))
        # periodic trapezoid weights: half the span between each node's neighbors
        gaps = np.diff(np.concatenate([th, [th[0] + 2.0 * math.pi]]))
        w_th = 0.5 * (gaps + np.roll(gaps, 1))

        # clip radius along each ray: entry point into the nearest excluded core
        clip = np.ones_like(th)
        for c, rm in zip(angles_c, r_minus):
            dth = np.abs(((th - c) + math.pi) % (2.0 * math.pi) - math.pi)
            s = np.sin(dth)
            # rays only meet the core when aimed at it: both quadratic roots
            # share the sign of cos(dth), so dth >= pi/2 means no crossing
            hit = (s < rm) & (dth < 0.5 * math.pi)
            disc = np.sqrt(np.maximum(rm * rm - s[hit] ** 2, 0.0))
            clip[hit] = np.minimum(clip[hit], np.cos(dth[hit]) - disc)

        xi, om = np.polynomial.legendre.leggauss(n_r)
        xi = 0.5 * (xi + 1.0)  # map to (0, 1)
        om = 0.5 * om
        rr = clip[:, None] * xi[None, :]
        ww = (w_th * clip**2)[:, None] * (om * xi)[None, :]
        pts = np.stack(
            [rr * np.cos(th)[:, None], rr * np.sin(th)[:, None]], axis=-1
        ).reshape(-1, 2)
        weights = ww.reshape(-1)
        area = math.pi - math.fsum(_lens_area(rm) for rm in r_minus)
        return cls(points=pts, weights=weights, area=area)


def residual_norms(
    config: DomainConfig,
    rule: QuadratureRule,
    max_dropped: float = 0.05,
) -> dict[str, float]:
    """L2 residuals of the quasimode over its own domain {phi < 0}.

    Quadrature points where phi >= 0 (inside the level set around a window)
    are rejected; QuadratureError if their weight fraction exceeds
    max_dropped.  Returns the distance to the normalized constant
    ('diff_const'), the eigen-equation residual ||Delta phi + kbar*phi||
    ('eigen_residual'), the plain norm ('norm_phi'), and the dropped weight
    fraction.
    """
    qm = Quasimode(config)
    phi = np.asarray(qm.eval_phi(rule.points)) if len(config.windows) else np.full(
        len(rule.points), -1.0 / qm.norm_const
    )
    mask = phi < 0.0
    total = float(np.sum(rule.weights))
    dropped = float(np.sum(rule.weights[~mask]))
    frac = dropped / total if total > 0 else 0.0
    if frac > max_dropped:
        raise QuadratureError(
            f"rejected weight fraction {frac:.3g} exceeds {max_dropped:g}"
        )
    w = rule.weights[mask]
    ph = phi[mask]
    c0 = 1.0 / qm.norm_const
    lap = qm.kbar / qm.norm_const
    diff_const = math.sqrt(float(w @ (ph + c0) ** 2))
    eigen_res = math.sqrt(float(w @ (lap + qm.kbar * ph) ** 2))
    norm_phi = math.sqrt(float(w @ ph**2))
    return {
        "diff_const": diff_const,
        "eigen_residual": eigen_res,
        "norm_phi": norm_phi,
        "dropped_fraction": frac,
    }
