"""Path simulation of reflected Brownian motion with absorbing windows.

Simulates dX = sqrt(2) dB in the unit disk or ball by Euler-Maruyama with
exact Gaussian increments.  Whenever a step segment crosses the circle the
crossing point is computed exactly; a crossing inside a window absorbs the
path (exit time interpolated linearly along the segment), anywhere else the
remainder of the segment is reflected specularly, repeatedly if it crosses
again.  Away from the boundary the step size is enlarged adaptively: a
Brownian increment is exact at any dt, so the walk may take steps whose
standard deviation keeps it 4.5 sigma away from the circle, which leaves
every boundary interaction identical to the fixed-dt scheme while cutting
the step count by an order of magnitude.

Each path owns a private xoshiro256+ stream seeded by splitmix64 from
(seed, path index), so ensembles are reproducible regardless of batching
or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy import stats as sstats

from .geometry import DomainConfig, window_arc
from .mesh import Mesh, locate_points
from .fem import EigenResult


class InsufficientDataError(ValueError):
    """Too few uncensored samples for the requested statistical test."""


class DegenerateTableError(RuntimeError):
    """A window recorded no exits, so the contingency table is singular."""


class EnvelopeError(RuntimeError):
    """Rejection sampling against u0 accepted under 1% of proposals."""


# boundary-zone width in step standard deviations for the adaptive scheme
_SIGMAS = 4.5
_START_SALT = 0x5EEDB0A7D15C0000
_MAX_BOUNCE = 64


@dataclass(frozen=True)
class SimParams:
    """Ensemble parameters.

    start is one of "uniform", "fixed" (requires x0), "qsd_fem" (requires
    the FEM ground mode); max_time defaults to 100/kbar at run time, which
    keeps the censored mass around e^-100.
    """

    dt: float
    n_paths: int
    seed: int
    max_time: float | None = None
    start: str = "uniform"
    x0: tuple | None = None
    adaptive: bool = True

    def __post_init__(self):
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")
        if self.start not in ("uniform", "fixed", "qsd_fem"):
            raise ValueError(f"unknown start mode {self.start!r}")
        if self.start == "fixed" and self.x0 is None:
            raise ValueError("fixed start requires x0")
        if self.max_time is not None and self.max_time <= 0.0:
            raise ValueError("max_time must be positive")

    def resolve_max_time(self, config: DomainConfig) -> float:
        if self.max_time is not None:
            return float(self.max_time)
        return 100.0 / config.kbar


@dataclass(frozen=True)
class ExitSample:
    """Outcome of one path: (tau, X_tau) or censoring at max_time."""

    exit_time: float
    window: int
    exit_angle: float | np.ndarray  # radians in 2D, unit vector in 3D
    censored: bool


@dataclass(frozen=True)
class SampleBatch:
    """Columnar ensemble outcome; angles hold unit vectors in 3D."""

    exit_times: np.ndarray
    windows: np.ndarray
    exit_angles: np.ndarray
    censored: np.ndarray
    dimension: int

    def uncensored_times(self) -> np.ndarray:
        return self.exit_times[~self.censored]


@dataclass(frozen=True)
class ExitStats:
    """Aggregate exit-law statistics of an ensemble."""

    n_paths: int
    n_censored: int
    censored_fraction: float
    mean_exit_time: float
    se_mean: float
    lambda_hat: float
    window_counts: tuple
    window_probs: tuple
    wilson_low: tuple
    wilson_high: tuple
    ks_statistic: float
    ks_pvalue: float
    ks_note: str
    chi_square: float
    chi_dof: int
    chi_pvalue: float


U64 = np.uint64
_GOLD = U64(0x9E3779B97F4A7C15)
_MASK = U64(0xFFFFFFFFFFFFFFFF)


@njit(cache=True)
def _mix64(z):
    z = (z + U64(0x9E3779B97F4A7C15)) & _MASK
    z = ((z ^ (z >> U64(30))) * U64(0xBF58476D1CE4E5B9)) & _MASK
    z = ((z ^ (z >> U64(27))) * U64(0x94D049BB133111EB)) & _MASK
    return z ^ (z >> U64(31))


@njit(cache=True)
def _walk_disk(seed, stream_ids, x0s, dt, max_time, adaptive,
               arc_lo, arc_hi, arc_win,
               out_time, out_window, out_angle):
    inv8c2 = 1.0 / (8.0 * _SIGMAS * _SIGMAS)
    two_pi = 2.0 * np.pi
    for p in range(stream_ids.shape[0]):
        s0 = _mix64(U64(seed) ^ ((U64(stream_ids[p]) + U64(1)) * _GOLD))
        s1 = _mix64(s0)
        s2 = _mix64(s1)
        s3 = _mix64(s2)
        x = x0s[p, 0]
        y = x0s[p, 1]
        t = 0.0
        alive = True
        while alive and t < max_time:
            if adaptive:
                q = 1.0 - (x * x + y * y)
                dte = q * q * inv8c2
                if dte < dt:
                    dte = dt
            else:
                dte = dt
            # two standard normals by the polar method
            while True:
                r0 = (s0 + s3) & _MASK
                tt = (s1 << U64(17)) & _MASK
                s2 ^= s0
                s3 ^= s1
                s1 ^= s2
                s0 ^= s3
                s2 ^= tt
                s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                u1 = (r0 >> U64(11)) * 1.1102230246251565e-16
                r0 = (s0 + s3) & _MASK
                tt = (s1 << U64(17)) & _MASK
                s2 ^= s0
                s3 ^= s1
                s1 ^= s2
                s0 ^= s3
                s2 ^= tt
                s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                u2 = (r0 >> U64(11)) * 1.1102230246251565e-16
                v1 = 2.0 * u1 - 1.0
                v2 = 2.0 * u2 - 1.0
                ss = v1 * v1 + v2 * v2
                if 0.0 < ss < 1.0:
                    break
            fac = np.sqrt(-2.0 * np.log(ss) / ss)
            sig = np.sqrt(2.0 * dte)
            xn = x + sig * v1 * fac
            yn = y + sig * v2 * fac

            if xn * xn + yn * yn >= 1.0:
                # resolve crossings of the step segment against the circle
                frac = 0.0
                bounce = 0
                while True:
                    dx = xn - x
                    dy = yn - y
                    a = dx * dx + dy * dy
                    if a == 0.0:
                        break
                    b = 2.0 * (x * dx + y * dy)
                    c0 = x * x + y * y - 1.0
                    if c0 >= 0.0:
                        # start sits on the circle after a reflection
                        s = -b / a
                    else:
                        s = (-b + np.sqrt(b * b - 4.0 * a * c0)) / (2.0 * a)
                    if not (0.0 < s <= 1.0):
                        break
                    px = x + s * dx
                    py = y + s * dy
                    pn = np.sqrt(px * px + py * py)
                    px /= pn
                    py /= pn
                    th = np.arctan2(py, px)
                    if th < 0.0:
                        th += two_pi
                    hit = -1
                    for j in range(arc_lo.shape[0]):
                        lo = arc_lo[j]
                        hi = arc_hi[j]
                        if lo <= th <= hi:
                            hit = arc_win[j]
                            break
                    frac = frac + s * (1.0 - frac)
                    if hit >= 0:
                        out_time[p] = t + frac * dte
                        out_window[p] = hit
                        out_angle[p] = th
                        alive = False
                        break
                    # reflect the remaining segment about the tangent at p
                    rx = xn - px
                    ry = yn - py
                    dot = rx * px + ry * py
                    xn = px + rx - 2.0 * dot * px
                    yn = py + ry - 2.0 * dot * py
                    x = px
                    y = py
                    bounce += 1
                    if bounce > _MAX_BOUNCE:
                        # numerically tangent; retreat just inside
                        xn = px * (1.0 - 1e-12)
                        yn = py * (1.0 - 1e-12)
                        break
                if alive:
                    x = xn
                    y = yn
                    t += dte
            else:
                x = xn
                y = yn
                t += dte
        if alive:
            out_time[p] = max_time
            out_window[p] = -1
            out_angle[p] = np.nan


@njit(cache=True)
def _walk_ball(seed, stream_ids, x0s, dt, max_time, adaptive,
               cap_dirs, cap_cos,
               out_time, out_window, out_dir):
    inv8c2 = 1.0 / (8.0 * _SIGMAS * _SIGMAS)
    for p in range(stream_ids.shape[0]):
        s0 = _mix64(U64(seed) ^ ((U64(stream_ids[p]) + U64(1)) * _GOLD))
        s1 = _mix64(s0)
        s2 = _mix64(s1)
        s3 = _mix64(s2)
        x = x0s[p, 0]
        y = x0s[p, 1]
        z = x0s[p, 2]
        t = 0.0
        alive = True
        have_spare = False
        spare = 0.0
        while alive and t < max_time:
            if adaptive:
                q = 1.0 - (x * x + y * y + z * z)
                dte = q * q * inv8c2
                if dte < dt:
                    dte = dt
            else:
                dte = dt
            # three standard normals: polar pairs with a carried spare
            if have_spare:
                z1 = spare
                have_spare = False
                while True:
                    r0 = (s0 + s3) & _MASK
                    tt = (s1 << U64(17)) & _MASK
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= tt
                    s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                    u1 = (r0 >> U64(11)) * 1.1102230246251565e-16
                    r0 = (s0 + s3) & _MASK
                    tt = (s1 << U64(17)) & _MASK
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= tt
                    s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                    u2 = (r0 >> U64(11)) * 1.1102230246251565e-16
                    v1 = 2.0 * u1 - 1.0
                    v2 = 2.0 * u2 - 1.0
                    ss = v1 * v1 + v2 * v2
                    if 0.0 < ss < 1.0:
                        break
                fac = np.sqrt(-2.0 * np.log(ss) / ss)
                z2 = v1 * fac
                z3 = v2 * fac
            else:
                while True:
                    r0 = (s0 + s3) & _MASK
                    tt = (s1 << U64(17)) & _MASK
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= tt
                    s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                    u1 = (r0 >> U64(11)) * 1.1102230246251565e-16
                    r0 = (s0 + s3) & _MASK
                    tt = (s1 << U64(17)) & _MASK
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= tt
                    s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                    u2 = (r0 >> U64(11)) * 1.1102230246251565e-16
                    v1 = 2.0 * u1 - 1.0
                    v2 = 2.0 * u2 - 1.0
                    ss = v1 * v1 + v2 * v2
                    if 0.0 < ss < 1.0:
                        break
                fac = np.sqrt(-2.0 * np.log(ss) / ss)
                z1 = v1 * fac
                z2 = v2 * fac
                while True:
                    r0 = (s0 + s3) & _MASK
                    tt = (s1 << U64(17)) & _MASK
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= tt
                    s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                    u1 = (r0 >> U64(11)) * 1.1102230246251565e-16
                    r0 = (s0 + s3) & _MASK
                    tt = (s1 << U64(17)) & _MASK
                    s2 ^= s0
                    s3 ^= s1
                    s1 ^= s2
                    s0 ^= s3
                    s2 ^= tt
                    s3 = ((s3 << U64(45)) | (s3 >> U64(19))) & _MASK
                    u2 = (r0 >> U64(11)) * 1.1102230246251565e-16
                    v1 = 2.0 * u1 - 1.0
                    v2 = 2.0 * u2 - 1.0
                    ss = v1 * v1 + v2 * v2
                    if 0.0 < ss < 1.0:
                        break
                fac = np.sqrt(-2.0 * np.log(ss) / ss)
                z3 = v1 * fac
                spare = v2 * fac
                have_spare = True
            sig = np.sqrt(2.0 * dte)
            xn = x + sig * z1
            yn = y + sig * z2
            zn = z + sig * z3

            if xn * xn + yn * yn + zn * zn >= 1.0:
                frac = 0.0
                bounce = 0
                while True:
                    dx = xn - x
                    dy = yn - y
                    dz = zn - z
                    a = dx * dx + dy * dy + dz * dz
                    if a == 0.0:
                        break
                    b = 2.0 * (x * dx + y * dy + z * dz)
                    c0 = x * x + y * y + z * z - 1.0
                    if c0 >= 0.0:
                        s = -b / a
                    else:
                        s = (-b + np.sqrt(b * b - 4.0 * a * c0)) / (2.0 * a)
                    if not (0.0 < s <= 1.0):
                        break
                    px = x + s * dx
                    py = y + s * dy
                    pz = z + s * dz
                    pn = np.sqrt(px * px + py * py + pz * pz)
                    px /= pn
                    py /= pn
                    pz /= pn
                    hit = -1
                    for j in range(cap_cos.shape[0]):
                        d = px * cap_dirs[j, 0] + py * cap_dirs[j, 1] + pz * cap_dirs[j, 2]
                        if d >= cap_cos[j]:
                            hit = j
                            break
                    frac = frac + s * (1.0 - frac)
                    if hit >= 0:
                        out_time[p] = t + frac * dte
                        out_window[p] = hit
                        out_dir[p, 0] = px
                        out_dir[p, 1] = py
                        out_dir[p, 2] = pz
                        alive = False
                        break
                    rx = xn - px
                    ry = yn - py
                    rz = zn - pz
                    dot = rx * px + ry * py + rz * pz
                    xn = px + rx - 2.0 * dot * px
                    yn = py + ry - 2.0 * dot * py
                    zn = pz + rz - 2.0 * dot * pz
                    x = px
                    y = py
                    z = pz
                    bounce += 1
                    if bounce > _MAX_BOUNCE:
                        xn = px * (1.0 - 1e-12)
                        yn = py * (1.0 - 1e-12)
                        zn = pz * (1.0 - 1e-12)
                        break
                if alive:
                    x = xn
                    y = yn
                    z = zn
                    t += dte
            else:
                x = xn
                y = yn
                z = zn
                t += dte
        if alive:
            out_time[p] = max_time
            out_window[p] = -1
            out_dir[p, 0] = np.nan
            out_dir[p, 1] = np.nan
            out_dir[p, 2] = np.nan


def _arc_tables(config: DomainConfig):
    """Flat (lo, hi, window) arrays with wrap-around arcs split at 0."""
    lo_l, hi_l, win_l = [], [], []
    for k in range(len(config.windows)):
        lo, hi = window_arc(config, k)
        if lo <= hi:
            lo_l.append(lo)
            hi_l.append(hi)
            win_l.append(k)
        else:
            lo_l.append(lo)
            hi_l.append(2.0 * math.pi)
            win_l.append(k)
            lo_l.append(0.0)
            hi_l.append(hi)
            win_l.append(k)
    return (np.array(lo_l), np.array(hi_l), np.array(win_l, dtype=np.int64))


def _cap_tables(config: DomainConfig):
    dirs = np.array([w.center for w in config.windows])
    rad = np.array([w.chord_radius for w in config.windows])
    return dirs, 1.0 - 0.5 * rad**2


def _uniform_points(rng: np.random.Generator, size: int, dim: int) -> np.ndarray:
    if dim == 2:
        r = np.sqrt(rng.uniform(0.0, 1.0, size=size))
        th = rng.uniform(0.0, 2.0 * math.pi, size=size)
        return np.column_stack([r * np.cos(th), r * np.sin(th)])
    v = rng.standard_normal((size, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    r = rng.uniform(0.0, 1.0, size=size) ** (1.0 / 3.0)
    return v * r[:, None]


def qsd_initialize(params: SimParams, eigen_result: EigenResult | None = None,
                   mesh: Mesh | None = None, rng: np.random.Generator | None = None,
                   size: int = 1, dimension: int = 2) -> np.ndarray:
    """Draw start points for the configured mode.

    Returns an (size, dim) array ((dim,) when size is 1).  qsd_fem mode
    rejection-samples the density |u0| over the mesh with the envelope
    max|u0|; a sub-1% acceptance rate raises EnvelopeError.
    """
    if rng is None:
        rng = np.random.default_rng(U64(params.seed) ^ U64(_START_SALT))
    if params.start == "fixed":
        pts = np.tile(np.asarray(params.x0, dtype=float), (size, 1))
    elif params.start == "uniform":
        pts = _uniform_points(rng, size, dimension)
    else:
        if eigen_result is None or mesh is None:
            raise ValueError("qsd_fem start requires the FEM ground mode and its mesh")
        density = np.abs(eigen_result.u0)
        envelope = float(density.max())
        accepted = []
        n_acc = 0
        attempts = 0
        while n_acc < size:
            m = max(4 * (size - n_acc), 64)
            cand = _uniform_points(rng, m, 2)
            u = rng.uniform(0.0, envelope, size=m)
            tri, bary = locate_points(mesh, cand)
            ok = tri >= 0
            vals = np.zeros(m)
            vals[ok] = np.abs(np.einsum(
                "ij,ij->i", bary[ok], density[mesh.triangles[tri[ok]]]))
            keep = cand[u < vals]
            accepted.append(keep)
            n_acc += len(keep)
            attempts += m
            if attempts >= 1000 and n_acc < 0.01 * attempts:
                raise EnvelopeError(
                    f"qsd_fem acceptance rate {n_acc / attempts:.4f} below 1%"
                )
        pts = np.concatenate(accepted)[:size]
    return pts[0] if size == 1 else pts


def _start_points(config: DomainConfig, params: SimParams,
                  eigen_result: EigenResult | None,
                  mesh: Mesh | None, size: int) -> np.ndarray:
    rng = np.random.default_rng(U64(params.seed) ^ U64(_START_SALT))
    if params.start == "fixed":
        x0 = np.asarray(params.x0, dtype=float)
        if len(x0) != config.dimension:
            raise ValueError("x0 dimension does not match the domain")
        if np.linalg.norm(x0) >= 1.0:
            raise ValueError("x0 must lie in the open domain")
        return np.tile(x0, (size, 1))
    if params.start == "uniform":
        return _uniform_points(rng, size, config.dimension)
    if config.dimension != 2:
        raise ValueError("qsd_fem start is available on the disk only")
    return np.atleast_2d(
        qsd_initialize(params, eigen_result, mesh, rng=rng, size=size))


def sample_paths(config: DomainConfig, params: SimParams,
                 eigen_result: EigenResult | None = None,
                 mesh: Mesh | None = None) -> SampleBatch:
    """Simulate the whole ensemble and return per-path outcomes."""
    n = params.n_paths
    x0s = _start_points(config, params, eigen_result, mesh, n)
    max_time = params.resolve_max_time(config)
    streams = np.arange(n, dtype=np.uint64)
    out_time = np.empty(n)
    out_window = np.empty(n, dtype=np.int64)
    if config.dimension == 2:
        out_angle = np.empty(n)
        lo, hi, win = _arc_tables(config)
        _walk_disk(U64(params.seed), streams, x0s, params.dt, max_time,
                   params.adaptive, lo, hi, win, out_time, out_window, out_angle)
    else:
        out_angle = np.empty((n, 3))
        dirs, cos_t = _cap_tables(config)
        _walk_ball(U64(params.seed), streams, x0s, params.dt, max_time,
                   params.adaptive, dirs, cos_t, out_time, out_window, out_angle)
    return SampleBatch(
        exit_times=out_time,
        windows=out_window,
        exit_angles=out_angle,
        censored=out_window < 0,
        dimension=config.dimension,
    )


def simulate_exit(config: DomainConfig, params: SimParams, x0,
                  rng_stream: int) -> ExitSample:
    """Run a single path from x0 on the given stream index."""
    x0 = np.asarray(x0, dtype=float)
    if len(x0) != config.dimension or np.linalg.norm(x0) >= 1.0:
        raise ValueError("x0 must lie in the open domain")
    max_time = params.resolve_max_time(config)
    streams = np.array([rng_stream], dtype=np.uint64)
    out_time = np.empty(1)
    out_window = np.empty(1, dtype=np.int64)
    if config.dimension == 2:
        out_angle = np.empty(1)
        lo, hi, win = _arc_tables(config)
        _walk_disk(U64(params.seed), streams, x0[None, :], params.dt, max_time,
                   params.adaptive, lo, hi, win, out_time, out_window, out_angle)
        angle = float(out_angle[0])
    else:
        out_dir = np.empty((1, 3))
        dirs, cos_t = _cap_tables(config)
        _walk_ball(U64(params.seed), streams, x0[None, :], params.dt, max_time,
                   params.adaptive, dirs, cos_t, out_time, out_window, out_dir)
        angle = out_dir[0]
    return ExitSample(
        exit_time=float(out_time[0]),
        window=int(out_window[0]),
        exit_angle=angle,
        censored=bool(out_window[0] < 0),
    )


def all_absorbing_mean(n_paths: int, dt: float, seed: int, dimension: int = 2,
                       adaptive: bool = True, max_time: float = 50.0) -> float:
    """Mean exit time from the origin with the entire boundary absorbing.

    Calibration oracle: the exact values are 1/4 on the disk and 1/6 on
    the ball (solve of the unit-source Dirichlet problem for the
    generator, which is the plain Laplacian here).
    """
    streams = np.arange(n_paths, dtype=np.uint64)
    x0s = np.zeros((n_paths, dimension))
    out_time = np.empty(n_paths)
    out_window = np.empty(n_paths, dtype=np.int64)
    if dimension == 2:
        out_angle = np.empty(n_paths)
        lo = np.array([0.0])
        hi = np.array([2.0 * math.pi])
        win = np.array([0], dtype=np.int64)
        _walk_disk(U64(seed), streams, x0s, dt, max_time, adaptive,
                   lo, hi, win, out_time, out_window, out_angle)
    else:
        out_dir = np.empty((n_paths, 3))
        dirs = np.array([[0.0, 0.0, 1.0]])
        cos_t = np.array([-2.0])  # every point of the sphere is inside the cap
        _walk_ball(U64(seed), streams, x0s, dt, max_time, adaptive,
                   dirs, cos_t, out_time, out_window, out_dir)
    if np.any(out_window < 0):
        raise RuntimeError("all-absorbing calibration produced censored paths")
    return float(out_time.mean())


def test_exponential(times: np.ndarray) -> tuple:
    """One-sample KS test of the uncensored exit times against Exp(lambda_hat).

    The rate is estimated from the same data, so the asymptotic Kolmogorov
    p-value is conservative-to-liberal in the Lilliefors sense; the caveat
    travels with the result in ExitStats.
    """
    times = np.asarray(times, dtype=float)
    if len(times) < 100:
        raise InsufficientDataError(
            f"need at least 100 uncensored samples, got {len(times)}")
    scale = float(times.mean())
    res = sstats.kstest(times, "expon", args=(0.0, scale), method="asymp")
    return float(res.statistic), float(res.pvalue)


def test_independence(times: np.ndarray, windows: np.ndarray,
                      n_windows: int) -> tuple:
    """Pearson chi-square of window index against exit-time quartile."""
    times = np.asarray(times, dtype=float)
    windows = np.asarray(windows)
    if n_windows < 2:
        raise ValueError("independence requires at least 2 windows")
    if len(times) < 100:
        raise InsufficientDataError(
            f"need at least 100 uncensored samples, got {len(times)}")
    counts = np.bincount(windows, minlength=n_windows)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise DegenerateTableError(f"window {empty} recorded no exits")
    edges = np.quantile(times, [0.25, 0.5, 0.75])
    quart = np.digitize(times, edges)
    table = np.zeros((n_windows, 4), dtype=np.int64)
    np.add.at(table, (windows, quart), 1)
    if np.any(table.sum(axis=0) == 0):
        raise DegenerateTableError("an exit-time quartile bin is empty")
    res = sstats.chi2_contingency(table, correction=False)
    return float(res.statistic), int(res.dof), float(res.pvalue)


def _wilson(count: int, total: int) -> tuple:
    ci = sstats.binomtest(count, total).proportion_ci(
        confidence_level=0.95, method="wilson")
    return float(ci.low), float(ci.high)


def compute_stats(batch: SampleBatch, n_windows: int) -> ExitStats:
    """Aggregate a SampleBatch into the exit-law statistics."""
    unc = ~batch.censored
    times = batch.exit_times[unc]
    wins = batch.windows[unc]
    n = len(batch.exit_times)
    m = len(times)
    if m < 100:
        raise InsufficientDataError(
            f"need at least 100 uncensored samples, got {m}")
    mean = float(times.mean())
    se = float(times.std(ddof=1) / math.sqrt(m))
    counts = np.bincount(wins, minlength=n_windows)
    wilson = [_wilson(int(c), m) for c in counts]
    ks_stat, ks_p = test_exponential(times)
    if n_windows >= 2:
        try:
            chi2, dof, chi_p = test_independence(times, wins, n_windows)
        except DegenerateTableError:
            chi2, dof, chi_p = math.nan, (n_windows - 1) * 3, math.nan
    else:
        chi2, dof, chi_p = math.nan, 0, math.nan
    return ExitStats(
        n_paths=n,
        n_censored=int(n - m),
        censored_fraction=float((n - m) / n),
        mean_exit_time=mean,
        se_mean=se,
        lambda_hat=1.0 / mean,
        window_counts=tuple(int(c) for c in counts),
        window_probs=tuple(float(c / m) for c in counts),
        wilson_low=tuple(w[0] for w in wilson),
        wilson_high=tuple(w[1] for w in wilson),
        ks_statistic=ks_stat,
        ks_pvalue=ks_p,
        ks_note="rate estimated from the same sample (Lilliefors caveat)",
        chi_square=chi2,
        chi_dof=dof,
        chi_pvalue=chi_p,
    )


def run_ensemble(config: DomainConfig, params: SimParams,
                 eigen_result: EigenResult | None = None,
                 mesh: Mesh | None = None) -> ExitStats:
    """Simulate the ensemble and aggregate its statistics."""
    batch = sample_paths(config, params, eigen_result, mesh)
    return compute_stats(batch, len(config.windows))


def richardson_lambda(config: DomainConfig, params: SimParams,
                      dts: tuple = (2e-5, 1e-5)) -> float:
    """Extrapolate lambda_hat to dt = 0 assuming sqrt(dt) boundary bias.

    Runs the ensemble at each dt (same seed and start) and combines the
    two estimates; with bias b*sqrt(dt) the combination
    (sqrt(r)*lam_fine - lam_coarse)/(sqrt(r) - 1), r = dt_coarse/dt_fine,
    cancels the leading term.
    """
    if len(dts) != 2 or dts[1] >= dts[0]:
        raise ValueError("dts must be (coarse, fine) with coarse > fine")
    lams = []
    for dt in dts:
        p = SimParams(dt=dt, n_paths=params.n_paths, seed=params.seed,
                      max_time=params.max_time, start=params.start,
                      x0=params.x0, adaptive=params.adaptive)
        lams.append(run_ensemble(config, p).lambda_hat)
    root = math.sqrt(dts[0] / dts[1])
    return (root * lams[1] - lams[0]) / (root - 1.0)
