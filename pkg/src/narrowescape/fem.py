"""P1 finite elements for the mixed eigenproblem on the meshed disk.

Assembles exact stiffness/mass matrices, solves for the smallest
eigenpairs with shift-invert Lanczos, extracts per-window boundary fluxes
through the variational residual, and supports swapping the boundary
conditions (windows Neumann, rest Dirichlet) as well as a full-Dirichlet
mode used for oracle checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import eigsh, splu

from .geometry import DomainConfig, LevelSetBounds
from .mesh import NEUMANN, Mesh, build_mesh, locate_points
from .quasimode import Quasimode


class ConvergenceError(RuntimeError):
    """Eigensolver failed to reach the requested residual."""


@dataclass(frozen=True)
class SparseSystem:
    """Unconstrained P1 matrices plus the constrained dof bookkeeping."""

    stiffness: sp.csr_matrix
    mass: sp.csr_matrix
    dirichlet_dofs: np.ndarray
    window_dofs: tuple  # per window: array of Dirichlet dofs on that arc

    @property
    def n_dofs(self) -> int:
        return self.stiffness.shape[0]

    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)


@dataclass(frozen=True)
class EigenResult:
    """Ascending eigenvalues with mass-normalized nodal eigenvectors."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # (V, nev), zero on constrained dofs
    residuals: np.ndarray
    window_fluxes: np.ndarray = None
    total_flux: float = None

    @property
    def lambda0(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def lambda1(self) -> float:
        return float(self.eigenvalues[1])

    @property
    def u0(self) -> np.ndarray:
        return self.eigenvectors[:, 0]


def assemble(mesh: Mesh, bc: str = "mixed") -> SparseSystem:
    """Build P1 stiffness and mass matrices with the requested constraint set.

    bc = "mixed": Dirichlet on window-tagged arcs (including junctions),
    "swapped": Dirichlet on the complement arcs (windows become Neumann),
    "all_dirichlet": the whole boundary constrained.
    """
    v = mesh.vertices
    t = mesh.triangles
    # edge vectors opposite each local vertex
    g0 = v[t[:, 2]] - v[t[:, 1]]
    g1 = v[t[:, 0]] - v[t[:, 2]]
    g2 = v[t[:, 1]] - v[t[:, 0]]
    area = 0.5 * (g2[:, 0] * (-g1[:, 1]) - g2[:, 1] * (-g1[:, 0]))
    if np.any(area <= 0.0):
        raise ValueError("mesh contains nonpositive triangle areas")

    edges = (g0, g1, g2)
    n = len(v)
    rows, cols, k_vals, m_vals = [], [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(t[:, i])
            cols.append(t[:, j])
            k_vals.append(np.einsum("ij,ij->i", edges[i], edges[j]) / (4.0 * area))
            m_vals.append(area / (6.0 if i == j else 12.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    stiff = sp.coo_matrix((np.concatenate(k_vals), (rows, cols)), shape=(n, n)).tocsr()
    mass = sp.coo_matrix((np.concatenate(m_vals), (rows, cols)), shape=(n, n)).tocsr()

    n_win = len(mesh.config.windows)
    win_dofs = []
    for k in range(n_win):
        sel = mesh.boundary_edges[mesh.boundary_tags == k]
        win_dofs.append(np.unique(sel))
    if bc == "mixed":
        dirichlet = np.unique(np.concatenate([d for d in win_dofs])) if win_dofs else np.array([], dtype=np.int64)
    elif bc == "swapped":
        sel = mesh.boundary_edges[mesh.boundary_tags == NEUMANN]
        dirichlet = np.unique(sel)
        win_dofs = [np.array([], dtype=np.int64)] * n_win
    elif bc == "all_dirichlet":
        dirichlet = np.unique(mesh.boundary_edges)
        win_dofs = [np.array([], dtype=np.int64)] * n_win
    else:
        raise ValueError(f"unknown bc mode {bc!r}")
    return SparseSystem(
        stiffness=stiff,
        mass=mass,
        dirichlet_dofs=dirichlet,
        window_dofs=tuple(win_dofs),
    )


def solve_smallest(system: SparseSystem, nev: int = 2, tol: float = 1e-10,
                   max_iter: int = 500) -> EigenResult:
    """Smallest nev eigenpairs of K u = lambda M u on the free dofs.

    Shift-invert Lanczos at shift 0 with a deterministic start vector; each
    pair's residual ||K u - lambda M u|| / ||M u|| on the free dofs must
    meet tol or ConvergenceError is raised.
    """
    if nev < 1:
        raise ValueError("nev must be at least 1")
    free = system.free_dofs()
    if len(free) <= nev:
        raise ValueError("not enough free dofs for the requested eigenpairs")
    k_ff = system.stiffness[free][:, free].tocsc()
    m_ff = system.mass[free][:, free].tocsc()
    v0 = np.full(len(free), 1.0 / math.sqrt(len(free)))
    try:
        vals, vecs = eigsh(k_ff, k=nev, M=m_ff, sigma=0.0, which="LM",
                           v0=v0, maxiter=max_iter, tol=0.0)
    except Exception as exc:  # ArpackNoConvergence and factorization issues
        raise ConvergenceError(f"eigensolver failed: {exc}") from exc
    order = np.argsort(vals)
    vals = vals[order]
    vecs = vecs[:, order]

    # polish with deflated inverse iteration: one LU of K serves all pairs,
    # tightening the Lanczos output to near machine precision
    lu = splu(k_ff)

    def m_norm(x):
        return math.sqrt(x @ (m_ff @ x))

    res = np.empty(nev)
    for i in range(nev):
        u = vecs[:, i] / m_norm(vecs[:, i])
        for _ in range(10):
            r = k_ff @ u - vals[i] * (m_ff @ u)
            res[i] = np.linalg.norm(r) / np.linalg.norm(m_ff @ u)
            if res[i] <= 0.5 * tol:
                break
            w = lu.solve(np.asarray(m_ff @ u))
            for j in range(i):
                w -= (vecs[:, j] @ (m_ff @ w)) * vecs[:, j]
            u = w / m_norm(w)
            vals[i] = (u @ (k_ff @ u)) / (u @ (m_ff @ u))
        vecs[:, i] = u
        if not np.isfinite(res[i]) or res[i] > tol:
            raise ConvergenceError(
                f"eigenpair {i} residual {res[i]:.3e} exceeds tolerance {tol:.1e}"
            )

    full = np.zeros((system.n_dofs, nev))
    row_mass = np.asarray(system.mass.sum(axis=1)).ravel()
    for i in range(nev):
        u = vecs[:, i]
        u = u / math.sqrt(u @ (m_ff @ u))
        full[free, i] = u
        # sign convention: the mass-weighted mean is negative
        if row_mass[free] @ u > 0.0:
            full[:, i] = -full[:, i]
    return EigenResult(eigenvalues=vals, eigenvectors=full, residuals=res)


def window_flux(system: SparseSystem, u: np.ndarray, lam: float, k: int) -> float:
    """Discrete boundary flux of the eigenpair through window k.

    Evaluates the residual functional chi_k^T (K u - lambda M u) with the
    unconstrained matrices, the consistent analogue of the normal-derivative
    integral over the window arc.
    """
    r = system.stiffness @ u - lam * (system.mass @ u)
    return float(np.sum(r[system.window_dofs[k]]))


def attach_fluxes(system: SparseSystem, result: EigenResult) -> EigenResult:
    """Return a copy of result with per-window fluxes of the ground mode."""
    u = result.u0
    lam = result.lambda0
    fluxes = np.array([window_flux(system, u, lam, k)
                       for k in range(len(system.window_dofs))])
    r = system.stiffness @ u - lam * (system.mass @ u)
    total = float(np.sum(r[system.dirichlet_dofs]))
    return EigenResult(
        eigenvalues=result.eigenvalues,
        eigenvectors=result.eigenvectors,
        residuals=result.residuals,
        window_fluxes=fluxes,
        total_flux=total,
    )


def solve_mixed(config: DomainConfig, h_max: float = 0.05, grading_levels: int = 8,
                nev: int = 2, tol: float = 1e-10) -> tuple:
    """Mesh, assemble, and solve the mixed problem. Returns (mesh, system, result)."""
    mesh = build_mesh(config, h_max=h_max, grading_levels=grading_levels)
    system = assemble(mesh, bc="mixed")
    result = attach_fluxes(system, solve_smallest(system, nev=nev, tol=tol))
    return mesh, system, result


def solve_swapped_bc(config: DomainConfig, h_max: float = 0.05,
                     grading_levels: int = 8, nev: int = 2) -> np.ndarray:
    """Eigenvalues with the boundary conditions exchanged.

    Windows become Neumann and the remaining boundary Dirichlet; in two
    dimensions this spectrum matches the Laplacian on 2-forms with the
    original mixed conditions.
    """
    mesh = build_mesh(config, h_max=h_max, grading_levels=grading_levels)
    system = assemble(mesh, bc="swapped")
    result = solve_smallest(system, nev=nev)
    return result.eigenvalues


def trace_along_cut(mesh: Mesh, u: np.ndarray, y0: float, n: int = 200) -> np.ndarray:
    """Sample the P1 interpolant of u at n points on the chord {y = y0}.

    Returns an (m, 2) array of (x, value) rows for the points that fall
    inside the mesh.
    """
    if not -1.0 < y0 < 1.0:
        raise ValueError("the cut must intersect the open disk")
    half = math.sqrt(1.0 - y0 * y0)
    xs = np.linspace(-half, half, n + 2)[1:-1]
    pts = np.column_stack([xs, np.full_like(xs, y0)])
    tri_idx, bary = locate_points(mesh, pts)
    ok = tri_idx >= 0
    vals = np.einsum("ij,ij->i", bary[ok], u[mesh.triangles[tri_idx[ok]]])
    return np.column_stack([xs[ok], vals])


def l2_difference(mesh: Mesh, u: np.ndarray, func) -> float:
    """L2 norm of (P1 field u - func) over the mesh.

    Uses the edge-midpoint rule, exact for quadratics. The rule never
    evaluates func at vertices, so comparison fields with logarithmic
    boundary singularities at window centers stay finite.
    """
    p = mesh.vertices[mesh.triangles]
    mids = 0.5 * (p + np.roll(p, -1, axis=1))
    umid = 0.5 * (u[mesh.triangles] + np.roll(u[mesh.triangles], -1, axis=1))
    fmid = np.asarray(func(mids.reshape(-1, 2))).reshape(mids.shape[:2])
    d2 = (umid - fmid) ** 2
    areas = mesh.triangle_areas()
    return float(math.sqrt(np.sum(areas / 3.0 * d2.sum(axis=1))))


def quasimode_rayleigh(mesh: Mesh, system: SparseSystem,
                       bounds: LevelSetBounds = LevelSetBounds()) -> float:
    """Rayleigh quotient of the interpolated, clipped quasimode.

    The quasimode is clipped to its nonpositive part and zeroed on the
    Dirichlet dofs, which places it in the discrete constrained space; its
    quotient is therefore an upper bound for the discrete lambda0.
    """
    qm = Quasimode(mesh.config)
    vals = np.zeros(system.n_dofs)
    free = system.free_dofs()
    vals[free] = np.minimum(qm.eval_phi(mesh.vertices[free]), 0.0)
    num = vals @ (system.stiffness @ vals)
    den = vals @ (system.mass @ vals)
    return float(num / den)
