"""Graded triangular meshes of the unit disk with tagged boundary arcs.

One structured patch of concentric circular rings is built around each
window, centered at the window's boundary point.  Ring radii follow a
geometric ladder below the window radius (resolving the window itself)
and cluster toward the window radius from both sides (resolving the
Dirichlet-Neumann junction singularity at the arc endpoints, where the
eigenfunction is only in H^{3/2-a}).  The rings are clipped to the disk,
so their endpoints lie exactly on the unit circle and the ring at the
window radius ends exactly at the two junction points.  The remaining
bulk is filled by a Delaunay triangulation of a polar point lattice that
conforms to the patch rims.

Everything is deterministic: identical inputs produce identical meshes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from .geometry import DomainConfig

NEUMANN = -1

# Below this length scale the unit circle is flat to double precision near
# (1, 0) (the sagitta underflows), so graded rings would collapse onto each
# other and triangle areas would lose all significant digits.
SCALE_FLOOR = 1e-13

# Chord spacing of the bulk boundary polygon.  The inscribed-polygon area
# deficit is about h^2/6 relative, and the mass-matrix total must match the
# disk area to 1e-4, so the boundary chords are capped independently of
# h_max: 0.021^2/6 = 7.4e-5 leaves headroom for the patch rim chords.
_BOUNDARY_CHORD_CAP = 0.021


class MeshError(RuntimeError):
    """Raised when a mesh cannot be built or fails its invariants."""


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the unit disk with tagged boundary edges.

    vertices: (V, 2) floats; triangles: (T, 3) vertex indices, all
    counterclockwise; boundary_edges: (B, 2) indices; boundary_tags: (B,)
    ints, a window index or NEUMANN; junction_nodes: indices of the window
    arc endpoints.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    junction_nodes: np.ndarray
    config: DomainConfig
    notes: tuple = ()

    def triangle_areas(self) -> np.ndarray:
        v = self.vertices
        t = self.triangles
        d1 = v[t[:, 1]] - v[t[:, 0]]
        d2 = v[t[:, 2]] - v[t[:, 0]]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def validate(self) -> None:
        """Check the structural invariants, raising MeshError on failure."""
        areas = self.triangle_areas()
        if areas.size == 0 or np.any(areas <= 0.0):
            raise MeshError("mesh contains inverted or degenerate triangles")

        bverts = np.unique(self.boundary_edges)
        radii = np.hypot(*self.vertices[bverts].T)
        worst = np.max(np.abs(radii - 1.0))
        if worst > 1e-12:
            raise MeshError(f"boundary vertex off the unit circle by {worst:.3e}")

        # watertightness: every edge is shared by two triangles except the
        # boundary edges, which belong to exactly one
        t = self.triangles
        edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        edges = np.sort(edges, axis=1)
        uniq, counts = np.unique(edges, axis=0, return_counts=True)
        if np.any(counts > 2):
            raise MeshError("an edge is shared by more than two triangles")
        rim = {tuple(e) for e in uniq[counts == 1]}
        declared = {tuple(sorted(e)) for e in self.boundary_edges.tolist()}
        if rim != declared:
            raise MeshError(
                f"boundary edge bookkeeping mismatch: {len(rim ^ declared)} edges differ"
            )

        # single closed loop: each boundary vertex has exactly two boundary
        # edges, and walking them visits every edge once
        adj = {}
        for a, b in self.boundary_edges.tolist():
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        if any(len(v) != 2 for v in adj.values()):
            raise MeshError("boundary is not a union of closed loops")
        start = self.boundary_edges[0, 0]
        prev, cur = None, start
        seen = 0
        while True:
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
            prev, cur = cur, nxt
            seen += 1
            if cur == start:
                break
            if seen > len(self.boundary_edges) + 1:
                raise MeshError("boundary walk does not close")
        if seen != len(self.boundary_edges):
            raise MeshError("boundary has more than one loop")

        # tags may only switch at junction vertices
        junc = set(self.junction_nodes.tolist())
        edge_tag = {}
        for (a, b), tag in zip(self.boundary_edges.tolist(), self.boundary_tags.tolist()):
            edge_tag[(a, b)] = tag
            edge_tag[(b, a)] = tag
        prev, cur = None, start
        while True:
            nxt = adj[cur][0] if adj[cur][0] != prev else adj[cur][1]
            if prev is not None and edge_tag[(prev, cur)] != edge_tag[(cur, nxt)]:
                if cur not in junc:
                    raise MeshError(f"boundary tag changes away from a junction (vertex {cur})")
            prev, cur = cur, nxt
            if prev == start:
                break

        for k in range(len(self.config.windows)):
            n_edges = int(np.sum(self.boundary_tags == k))
            if n_edges < 8:
                raise MeshError(f"window {k} has only {n_edges} boundary edges")


def _graded_line(span: float, h_end: float, h_cap: float, grow: float = 1.7) -> np.ndarray:
    """Symmetric 1D nodes on [0, span], spacing h_end at both ends growing to h_cap."""
    h_end = min(h_end, h_cap)
    if span <= 1.45 * h_end:
        return np.array([0.0, span])
    half = []
    pos, h = 0.0, h_end
    while pos + 1.45 * h < 0.5 * span:
        pos += h
        half.append(pos)
        h = min(h * grow, h_cap)
    left = np.array(half)
    lo = half[-1] if half else 0.0
    gap = span - 2.0 * lo
    n_mid = max(1, int(round(gap / h)))
    mid = lo + gap * np.arange(1, n_mid) / n_mid
    right = span - left[::-1]
    return np.concatenate([[0.0], left, mid, right, [span]])


def _ring_radii(w: float, r_patch: float, levels: int) -> list:
    """Ladder of patch ring radii: geometric below w, clustered at w, geometric above."""
    radii = {w}
    for j in range(1, levels + 1):
        radii.add(w * 0.5**j)
        radii.add(w * (1.0 - 0.5**j))
        radii.add(w * (1.0 + 0.5**j))
    rho = 2.0 * w
    while rho < r_patch / 1.3:
        radii.add(rho)
        rho *= math.sqrt(2.0)
    out = []
    for r in sorted(r for r in radii if r < r_patch * (1.0 - 1e-9)):
        if not out or r > out[-1] * (1.0 + 1e-9):
            out.append(r)
    out.append(r_patch)
    # boundary chords between consecutive ring endpoints have the length of
    # the ring gap; subdivide oversized gaps to keep the polygon area deficit
    # inside the mass-matrix budget
    gap_cap = 0.85 * _BOUNDARY_CHORD_CAP
    refined = [out[0]]
    for r in out[1:]:
        gap = r - refined[-1]
        n_sub = max(1, int(math.ceil(gap / gap_cap)))
        base = refined[-1]
        for s in range(1, n_sub):
            refined.append(base + gap * s / n_sub)
        refined.append(r)
    return refined


def _zip_rings(pa: np.ndarray, ia: np.ndarray, pb: np.ndarray, ib: np.ndarray) -> list:
    """Triangulate the strip between two node chains (positions p*, global ids i*)."""
    tris = []
    i = j = 0
    na, nb = len(ia), len(ib)
    while i < na - 1 or j < nb - 1:
        if i == na - 1:
            adv_a = False
        elif j == nb - 1:
            adv_a = True
        else:
            da = np.sum((pa[i + 1] - pb[j]) ** 2)
            db = np.sum((pb[j + 1] - pa[i]) ** 2)
            adv_a = da <= db
        if adv_a:
            tris.append((ia[i], ia[i + 1], ib[j]))
            i += 1
        else:
            tris.append((ia[i], ib[j + 1], ib[j]))
            j += 1
    return tris


class _Builder:
    def __init__(self):
        self.verts = []
        self.tris = []
        self.bedges = []
        self.btags = []
        self.junctions = []

    def add_vertex(self, xy) -> int:
        self.verts.append((float(xy[0]), float(xy[1])))
        return len(self.verts) - 1


def _build_patch(bld: _Builder, k: int, angle: float, w: float, r_patch: float,
                 levels: int, h_max: float) -> tuple:
    """Mesh the half-ball of radius r_patch around window k's center.

    Returns (center_xy, r_patch, outer ring ids ordered along the ring).
    """
    nx, ny = math.cos(angle), math.sin(angle)
    tx, ty = -ny, nx

    radii = _ring_radii(w, r_patch, levels)
    apex = bld.add_vertex((nx, ny))

    ring_ids = []
    ring_pos = []
    for idx, rho in enumerate(radii):
        g_in = rho - (radii[idx - 1] if idx else 0.0)
        g_out = (radii[idx + 1] - rho) if idx + 1 < len(radii) else 0.9 * h_max
        beta_max = math.acos(min(1.0, rho / 2.0))
        h_end = max(min(g_in, g_out), 0.5 * SCALE_FLOOR) / rho
        h_cap = min(0.28, 0.9 * h_max / rho)
        h_cap = max(h_cap, 1.05 * h_end)
        betas = _graded_line(2.0 * beta_max, h_end, h_cap) - beta_max
        betas[0] = -beta_max
        betas[-1] = beta_max
        c, s = np.cos(betas), np.sin(betas)
        px = (1.0 - rho * c) * nx + rho * s * tx
        py = (1.0 - rho * c) * ny + rho * s * ty
        ids = np.array([bld.add_vertex((x, y)) for x, y in zip(px, py)])
        ring_ids.append(ids)
        ring_pos.append(np.column_stack([px, py]))

    # fan from the window center to the innermost ring
    ids0 = ring_ids[0]
    for m in range(len(ids0) - 1):
        bld.tris.append((apex, ids0[m], ids0[m + 1]))
    bld.bedges.append((apex, ids0[0]))
    bld.btags.append(k)
    bld.bedges.append((apex, ids0[-1]))
    bld.btags.append(k)

    # strips between consecutive rings, plus the two boundary edges capping
    # each strip on the unit circle
    for idx in range(len(radii) - 1):
        bld.tris.extend(_zip_rings(ring_pos[idx], ring_ids[idx],
                                   ring_pos[idx + 1], ring_ids[idx + 1]))
        tag = k if radii[idx + 1] <= w * (1.0 + 1e-12) else NEUMANN
        bld.bedges.append((ring_ids[idx][0], ring_ids[idx + 1][0]))
        bld.btags.append(tag)
        bld.bedges.append((ring_ids[idx][-1], ring_ids[idx + 1][-1]))
        bld.btags.append(tag)

    jw = next(i for i, r in enumerate(radii) if abs(r - w) <= 1e-12 * w)
    bld.junctions.extend([int(ring_ids[jw][0]), int(ring_ids[jw][-1])])

    return (nx, ny), r_patch, ring_ids[-1]


def _build_background(bld: _Builder, patches: list, h_max: float) -> None:
    """Fill the disk outside the patches with a Delaunay mesh of a polar lattice."""
    h_b = min(h_max, _BOUNDARY_CHORD_CAP)

    order = np.argsort([math.atan2(c[1], c[0]) for c, _, _ in patches])
    pts = []        # background-only points
    pt_ids = []     # their global ids

    def add_bg(x, y):
        gid = bld.add_vertex((x, y))
        pts.append((x, y))
        pt_ids.append(gid)
        return gid

    # circle nodes on the gaps between consecutive patch rims
    n_p = len(patches)
    for m in range(n_p):
        ci, ri, ring_i = patches[order[m]]
        cj, rj, ring_j = patches[order[(m + 1) % n_p]]
        a = math.atan2(ci[1], ci[0]) + 2.0 * math.asin(ri / 2.0)
        b = math.atan2(cj[1], cj[0]) - 2.0 * math.asin(rj / 2.0)
        if m == n_p - 1:
            b += 2.0 * math.pi
        if b <= a:
            raise MeshError("patch rims overlap along the boundary")
        arc = b - a
        n_seg = max(1, int(round(arc / h_b)))
        chain = [int(ring_i[-1])]
        for s in range(1, n_seg):
            th = a + arc * s / n_seg
            chain.append(add_bg(math.cos(th), math.sin(th)))
        chain.append(int(ring_j[0]))
        for u, v in zip(chain[:-1], chain[1:]):
            bld.bedges.append((u, v))
            bld.btags.append(NEUMANN)

    # polar lattice in the bulk, staggered ring to ring
    centers = np.array([c for c, _, _ in patches])
    clearances = np.array([r for _, r, _ in patches]) + 0.55 * h_max
    r = 1.0 - 0.78 * h_b
    step = 0.78 * h_b
    parity = 0
    while r > 0.55 * h_max:
        n = max(8, int(round(2.0 * math.pi * r / h_max)))
        th = (np.arange(n) + (0.5 if parity else 0.0)) * (2.0 * math.pi / n)
        x, y = r * np.cos(th), r * np.sin(th)
        d2 = (x[:, None] - centers[:, 0]) ** 2 + (y[:, None] - centers[:, 1]) ** 2
        keep = np.all(d2 > clearances[None, :] ** 2, axis=1)
        for xi, yi in zip(x[keep], y[keep]):
            add_bg(xi, yi)
        parity ^= 1
        step = min(step * 1.25, 0.85 * h_max)
        r -= step
    add_bg(0.0, 0.0)

    # assemble the point set: patch rims first (their ids are fixed), then
    # the background-only points
    rim_ids = []
    rim_pts = []
    for _, _, ring in patches:
        rim_ids.extend(int(i) for i in ring)
        rim_pts.extend(bld.verts[i] for i in ring)
    all_pts = np.array(rim_pts + pts)
    all_ids = np.array(rim_ids + pt_ids)

    dela = Delaunay(all_pts)
    cent = all_pts[dela.simplices].mean(axis=1)
    inside_hole = np.zeros(len(dela.simplices), dtype=bool)
    for c, rad, _ in patches:
        d2 = (cent[:, 0] - c[0]) ** 2 + (cent[:, 1] - c[1]) ** 2
        inside_hole |= d2 < (rad * (1.0 - 1e-10)) ** 2
    for simplex in dela.simplices[~inside_hole]:
        bld.tris.append(tuple(int(all_ids[v]) for v in simplex))


def build_mesh(config: DomainConfig, h_max: float = 0.05, grading_levels: int = 8) -> Mesh:
    """Triangulate the unit disk for the given window configuration.

    h_max bounds the bulk element size; grading_levels sets the number of
    geometric refinement levels toward each window and its junctions.
    """
    if config.dimension != 2:
        raise ValueError("meshing is implemented for the disk only")
    if not 0.0 < h_max <= 0.5:
        raise ValueError("h_max must lie in (0, 0.5]")
    if grading_levels < 0:
        raise ValueError("grading_levels must be nonnegative")

    notes = []
    if grading_levels < 4:
        notes.append("low accuracy near junctions (grading_levels < 4)")

    cap = min(0.45 * config.rho0, 0.45)
    bld = _Builder()
    patches = []
    for k, wspec in enumerate(config.windows):
        w = wspec.chord_radius
        j_max = int(math.floor(math.log2(w / SCALE_FLOOR))) if w > SCALE_FLOOR else 0
        if j_max < 2:
            raise MeshError(
                f"window {k} chord radius {w:.3e} is too small to carve 8 edges "
                f"above the {SCALE_FLOOR:g} resolution floor"
            )
        levels = max(min(grading_levels, j_max), 2)
        r_patch = max(2.44 * h_max, 2.2 * w)
        if r_patch > cap:
            r_patch = cap
        if r_patch < 2.2 * w:
            raise MeshError(
                f"window {k} is too large relative to the window separation "
                f"for the graded patch construction"
            )
        patches.append(_build_patch(bld, k, wspec.angle, w, r_patch, levels, h_max))

    _build_background(bld, patches, h_max)

    verts = np.array(bld.verts)
    tris = np.array(bld.tris, dtype=np.int64)
    d1 = verts[tris[:, 1]] - verts[tris[:, 0]]
    d2 = verts[tris[:, 2]] - verts[tris[:, 0]]
    areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    flip = areas < 0.0
    tris[flip] = tris[flip][:, [0, 2, 1]]

    mesh = Mesh(
        vertices=verts,
        triangles=tris,
        boundary_edges=np.array(bld.bedges, dtype=np.int64),
        boundary_tags=np.array(bld.btags, dtype=np.int64),
        junction_nodes=np.array(sorted(bld.junctions), dtype=np.int64),
        config=config,
        notes=tuple(notes),
    )
    mesh.validate()
    return mesh


def locate_points(mesh: Mesh, pts: np.ndarray, tol: float = 1e-9) -> tuple:
    """Find containing triangles and barycentric coordinates for query points.

    Returns (tri_index, bary) with tri_index -1 for points outside the mesh.
    Lookup is by nearest triangle centroids with a brute-force fallback.
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    v = mesh.vertices
    t = mesh.triangles
    v0 = v[t[:, 0]]
    d1 = v[t[:, 1]] - v0
    d2 = v[t[:, 2]] - v0
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    inv = np.empty((len(t), 2, 2))
    inv[:, 0, 0] = d2[:, 1] / det
    inv[:, 0, 1] = -d2[:, 0] / det
    inv[:, 1, 0] = -d1[:, 1] / det
    inv[:, 1, 1] = d1[:, 0] / det

    def bary_of(tri_idx, p):
        rel = p - v0[tri_idx]
        b1 = inv[tri_idx, 0, 0] * rel[:, 0] + inv[tri_idx, 0, 1] * rel[:, 1]
        b2 = inv[tri_idx, 1, 0] * rel[:, 0] + inv[tri_idx, 1, 1] * rel[:, 1]
        return np.column_stack([1.0 - b1 - b2, b1, b2])

    cent = (v[t[:, 0]] + v[t[:, 1]] + v[t[:, 2]]) / 3.0
    tree = cKDTree(cent)
    k = min(32, len(t))
    _, cand = tree.query(pts, k=k)
    cand = np.atleast_2d(cand)
    if k == 1:
        cand = cand.reshape(-1, 1)

    n = len(pts)
    out_tri = np.full(n, -1, dtype=np.int64)
    out_bary = np.zeros((n, 3))
    undecided = np.ones(n, dtype=bool)
    for s in range(cand.shape[1]):
        if not np.any(undecided):
            break
        idx = np.flatnonzero(undecided)
        tri_idx = cand[idx, s]
        b = bary_of(tri_idx, pts[idx])
        ok = np.all(b >= -tol, axis=1)
        hit = idx[ok]
        out_tri[hit] = tri_idx[ok]
        out_bary[hit] = b[ok]
        undecided[hit] = False

    # brute-force sweep for stragglers (points in slivers far from centroids)
    idx = np.flatnonzero(undecided)
    for i in idx:
        rel = pts[i] - v0
        b1 = inv[:, 0, 0] * rel[:, 0] + inv[:, 0, 1] * rel[:, 1]
        b2 = inv[:, 1, 0] * rel[:, 0] + inv[:, 1, 1] * rel[:, 1]
        b0 = 1.0 - b1 - b2
        ok = np.flatnonzero((b0 >= -tol) & (b1 >= -tol) & (b2 >= -tol))
        if ok.size:
            out_tri[i] = ok[0]
            out_bary[i] = (b0[ok[0]], b1[ok[0]], b2[ok[0]])
    return out_tri, out_bary
