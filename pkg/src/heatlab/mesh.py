"""Structured triangulations of polygonal domains.

Meshes are built on uniform grids with every cell split along its
bottom-left to top-right diagonal.  Two model domains are provided: the
unit square and the L-shape (-1,1)^2 minus [0,1)x(-1,0], whose reentrant
corner sits at the origin.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument, PointOutsideDomain


@dataclass(frozen=True)
class PolygonalDomain:
    name: str
    vertices: np.ndarray  # (V, 2), counterclockwise

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidArgument("a polygon needs at least 3 vertices in the plane")
        if np.any(np.all(v == np.roll(v, -1, axis=0), axis=1)):
            raise InvalidArgument("consecutive polygon vertices must be distinct")
        if signed_polygon_area(v) <= 0:
            raise InvalidArgument("polygon vertices must be counterclockwise")
        if not _is_simple(v):
            raise InvalidArgument("polygon is not simple")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @property
    def is_convex(self) -> bool:
        v = self.vertices
        a = np.roll(v, 1, axis=0)
        c = np.roll(v, -1, axis=0)
        cross = (v[:, 0] - a[:, 0]) * (c[:, 1] - v[:, 1]) - (v[:, 1] - a[:, 1]) * (c[:, 0] - v[:, 0])
        return bool(np.all(cross >= 0))

    @property
    def area(self) -> float:
        return signed_polygon_area(self.vertices)

    def interior_angle(self, k: int) -> float:
        """Interior angle at vertex ``k`` in radians."""
        v = self.vertices
        a, b, c = v[k - 1], v[k], v[(k + 1) % len(v)]
        u, w = a - b, c - b
        ang = math.atan2(u[0] * w[1] - u[1] * w[0], u @ w)
        # angle swept clockwise from (c-b) to (a-b) for a CCW polygon
        ang = -ang
        return ang if ang > 0 else ang + 2 * math.pi

    def distance_to_boundary(self, pts) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        v = self.vertices
        a, b = v, np.roll(v, -1, axis=0)
        d = np.full(len(pts), np.inf)
        for p, q in zip(a, b):
            e = q - p
            s = np.clip(((pts - p) @ e) / (e @ e), 0.0, 1.0)
            d = np.minimum(d, np.linalg.norm(pts - (p + s[:, None] * e), axis=1))
        return d

    def contains(self, pts, tol=0.0) -> np.ndarray:
        """Points inside or within ``tol`` of the closed polygon."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x, y = pts[:, 0], pts[:, 1]
        v = self.vertices
        inside = np.zeros(len(pts), dtype=bool)
        for (x1, y1), (x2, y2) in zip(v, np.roll(v, -1, axis=0)):
            crosses = (y1 > y) != (y2 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            inside ^= crosses & (x < xint)
        return inside | (self.distance_to_boundary(pts) <= tol)


def signed_polygon_area(v) -> float:
    v = np.asarray(v, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    if o1 != o2 and o3 != o4:
        return True
    # collinear overlaps
    def on_seg(a, b, c):
        return min(a[0], b[0]) <= c[0] <= max(a[0], b[0]) and min(a[1], b[1]) <= c[1] <= max(a[1], b[1])

    return (o1 == 0 and on_seg(p1, p2, q1)) or (o2 == 0 and on_seg(p1, p2, q2)) or \
        (o3 == 0 and on_seg(q1, q2, p1)) or (o4 == 0 and on_seg(q1, q2, p2))


def _is_simple(v) -> bool:
    n = len(v)
    for i in range(n):
        for j in range(i + 1, n):
            if j == i + 1 or (i == 0 and j == n - 1):
                continue  # adjacent edges share a vertex
            if _segments_intersect(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                return False
    return True


UNIT_SQUARE = PolygonalDomain("square", np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float))
LSHAPE = PolygonalDomain(
    "lshape",
    np.array([[-1, -1], [0, -1], [0, 0], [1, 0], [1, 1], [-1, 1]], dtype=float),
)
DOMAINS = {"square": UNIT_SQUARE, "lshape": LSHAPE}
REENTRANT_CORNER = np.array([0.0, 0.0])


@dataclass(frozen=True)
class MeshQuality:
    h_max: float
    h_min: float
    rho_min: float
    K_quasi: float


@dataclass(frozen=True, eq=False)
class TriMesh:
    points: np.ndarray
    triangles: np.ndarray
    boundary_nodes: np.ndarray
    h: float
    level: int
    domain: PolygonalDomain
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("points", "triangles", "boundary_nodes"):
            getattr(self, name).setflags(write=False)

    @property
    def n_points(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (E, 2)."""
        if "edges" not in self._cache:
            self._build_edges()
        return self._cache["edges"]

    @property
    def triangle_edges(self) -> np.ndarray:
        """Edge index of local edges (v1v2, v2v0, v0v1) per triangle."""
        if "tri_edges" not in self._cache:
            self._build_edges()
        return self._cache["tri_edges"]

    @property
    def edge_triangle_count(self) -> np.ndarray:
        if "edge_count" not in self._cache:
            self._build_edges()
        return self._cache["edge_count"]

    def _build_edges(self):
        t = self.triangles
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2)
        local = np.sort(local, axis=1)
        edges, inv, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
        self._cache["edges"] = edges
        self._cache["tri_edges"] = inv.reshape(-1, 3)
        self._cache["edge_count"] = counts

    @property
    def boundary_edges(self) -> np.ndarray:
        return self.edges[self.edge_triangle_count == 1]

    def areas(self) -> np.ndarray:
        if "areas" not in self._cache:
            p = self.points[self.triangles]
            d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
            self._cache["areas"] = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._cache["areas"]

    def centroids(self) -> np.ndarray:
        return self.points[self.triangles].mean(axis=1)

    def diameters(self) -> np.ndarray:
        return _side_lengths(self).max(axis=1)

    def inradii(self) -> np.ndarray:
        return 2.0 * self.areas() / _side_lengths(self).sum(axis=1)

    def incenters(self) -> np.ndarray:
        p = self.points[self.triangles]
        s = _side_lengths(self)  # side opposite vertex k
        return np.einsum("tk,tkd->td", s, p) / s.sum(axis=1)[:, None]

    def barycentric(self, tri_idx, pts) -> np.ndarray:
        """Barycentric coordinates of ``pts`` w.r.t. triangles ``tri_idx``."""
        p = self.points[self.triangles[tri_idx]]
        d1, d2 = p[..., 1, :] - p[..., 0, :], p[..., 2, :] - p[..., 0, :]
        det = d1[..., 0] * d2[..., 1] - d1[..., 1] * d2[..., 0]
        r = pts - p[..., 0, :]
        l1 = (r[..., 0] * d2[..., 1] - r[..., 1] * d2[..., 0]) / det
        l2 = (d1[..., 0] * r[..., 1] - d1[..., 1] * r[..., 0]) / det
        return np.stack([1.0 - l1 - l2, l1, l2], axis=-1)

    def euler_characteristic(self) -> int:
        return self.n_points - len(self.edges) + self.n_triangles


def _side_lengths(mesh: TriMesh) -> np.ndarray:
    p = mesh.points[mesh.triangles]
    return np.stack(
        [
            np.linalg.norm(p[:, 2] - p[:, 1], axis=1),
            np.linalg.norm(p[:, 0] - p[:, 2], axis=1),
            np.linalg.norm(p[:, 1] - p[:, 0], axis=1),
        ],
        axis=1,
    )


def _topological_boundary(n_points, triangles) -> np.ndarray:
    t = triangles
    local = np.sort(np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1).reshape(-1, 2), axis=1)
    edges, counts = np.unique(local, axis=0, return_counts=True)
    return np.unique(edges[counts == 1])


def _level_of(n: int) -> int:
    return n.bit_length() - 1 if n & (n - 1) == 0 else 0


def _grid_triangles(keep_cell, nx, ny, node_id):
    tris = []
    for j in range(ny):
        for i in range(nx):
            if not keep_cell(i, j):
                continue
            p00, p10 = node_id[j, i], node_id[j, i + 1]
            p01, p11 = node_id[j + 1, i], node_id[j + 1, i + 1]
            tris.append((p00, p10, p11))
            tris.append((p00, p11, p01))
    return np.array(tris, dtype=np.int64)


def _check_n(n):
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise InvalidArgument(f"number of subdivisions must be a positive integer, got {n!r}")


def build_structured_square_mesh(n: int) -> TriMesh:
    """Unit square split into n x n cells, two triangles per cell."""
    _check_n(n)
    i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1))
    pts = np.column_stack([i.ravel() / n, j.ravel() / n])
    node_id = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    tris = _grid_triangles(lambda i, j: True, n, n, node_id)
    return TriMesh(
        points=pts,
        triangles=tris,
        boundary_nodes=_topological_boundary(len(pts), tris),
        h=math.sqrt(2.0) / n,
        level=_level_of(int(n)),
        domain=UNIT_SQUARE,
    )


def build_lshape_mesh(n: int) -> TriMesh:
    """L-shape made of three unit squares, n subdivisions per unit edge."""
    _check_n(n)
    m = 2 * n
    removed = lambda i, j: i >= n and j < n  # cell in [0,1)x(-1,0]
    used = np.zeros((m + 1, m + 1), dtype=bool)
    for j in range(m):
        for i in range(m):
            if not removed(i, j):
                used[j : j + 2, i : i + 2] = True
    node_id = np.full((m + 1, m + 1), -1, dtype=np.int64)
    node_id[used] = np.arange(used.sum())
    jj, ii = np.nonzero(used)
    pts = np.column_stack([ii / n - 1.0, jj / n - 1.0])
    tris = _grid_triangles(lambda i, j: not removed(i, j), m, m, node_id)
    return TriMesh(
        points=pts,
        triangles=tris,
        boundary_nodes=_topological_boundary(len(pts), tris),
        h=math.sqrt(2.0) / n,
        level=_level_of(int(n)),
        domain=LSHAPE,
    )


def build_mesh(domain: str, level: int) -> TriMesh:
    """Mesh of a named model domain with 2**level subdivisions per unit edge."""
    if domain == "square":
        return build_structured_square_mesh(2**level)
    if domain == "lshape":
        return build_lshape_mesh(2**level)
    raise InvalidArgument(f"unknown domain {domain!r}; expected one of {sorted(DOMAINS)}")


def uniform_refine(mesh: TriMesh) -> TriMesh:
    """Split every triangle into four through its edge midpoints."""
    edges = mesh.edges
    n = mesh.n_points
    mid = 0.5 * (mesh.points[edges[:, 0]] + mesh.points[edges[:, 1]])
    pts = np.vstack([mesh.points, mid])
    te = mesh.triangle_edges + n  # midpoints opposite v0, v1, v2
    a, b, c = mesh.triangles.T
    m_bc, m_ca, m_ab = te.T
    tris = np.concatenate(
        [
            np.column_stack([a, m_ab, m_ca]),
            np.column_stack([m_ab, b, m_bc]),
            np.column_stack([m_ca, m_bc, c]),
            np.column_stack([m_ab, m_bc, m_ca]),
        ]
    )
    return TriMesh(
        points=pts,
        triangles=tris,
        boundary_nodes=_topological_boundary(len(pts), tris),
        h=float(_side_lengths_of(pts, tris).max()),
        level=mesh.level + 1,
        domain=mesh.domain,
    )


def _side_lengths_of(pts, tris):
    p = pts[tris]
    return np.stack([np.linalg.norm(p[:, k] - p[:, (k + 1) % 3], axis=1) for k in range(3)], axis=1)


def mesh_quality(mesh: TriMesh) -> MeshQuality:
    diam = mesh.diameters()
    rho = mesh.inradii()
    h_max, h_min, rho_min = float(diam.max()), float(diam.min()), float(rho.min())
    return MeshQuality(h_max, h_min, rho_min, max(h_max / h_min, h_max / rho_min))


class _TriangleLocator:
    """Uniform bucket grid over triangle bounding boxes."""

    def __init__(self, mesh: TriMesh):
        self.mesh = mesh
        p = mesh.points[mesh.triangles]
        lo, hi = p.min(axis=1), p.max(axis=1)
        self.origin = mesh.points.min(axis=0)
        extent = mesh.points.max(axis=0) - self.origin
        cell = max(float(np.median(hi - lo)), 1e-12)
        self.shape = np.maximum(np.ceil(extent / cell).astype(int), 1)
        self.cell = extent / self.shape
        self.cell[self.cell == 0] = 1.0
        eps = 1e-12 * max(extent.max(), 1.0)
        ilo = self._cell_index(lo - eps)
        ihi = self._cell_index(hi + eps)
        buckets: dict[int, list[int]] = {}
        for t in range(mesh.n_triangles):
            for bx in range(ilo[t, 0], ihi[t, 0] + 1):
                for by in range(ilo[t, 1], ihi[t, 1] + 1):
                    buckets.setdefault(bx * self.shape[1] + by, []).append(t)
        width = max(len(v) for v in buckets.values())
        nb = int(self.shape[0] * self.shape[1])
        self.table = np.full((nb, width), -1, dtype=np.int64)
        for k, v in buckets.items():
            self.table[k, : len(v)] = sorted(v)

    def _cell_index(self, x):
        idx = np.floor((x - self.origin) / self.cell).astype(int)
        return np.clip(idx, 0, self.shape - 1)

    def locate(self, pts, tol=1e-12):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        ij = self._cell_index(pts)
        cand = self.table[ij[:, 0] * self.shape[1] + ij[:, 1]]  # (P, W)
        valid = cand >= 0
        safe = np.where(valid, cand, 0)
        lam = self.mesh.barycentric(safe, pts[:, None, :])
        inside = valid & (lam.min(axis=-1) >= -tol)
        # candidates are sorted, so the first hit is the lowest triangle index
        first = np.argmax(inside, axis=1)
        found = inside[np.arange(len(pts)), first]
        tri = np.where(found, cand[np.arange(len(pts)), first], -1)
        bary = lam[np.arange(len(pts)), first]
        bary = np.clip(bary, 0.0, 1.0)
        bary /= bary.sum(axis=1, keepdims=True)
        return tri, bary


def locate_points(mesh: TriMesh, pts, tol=1e-12):
    """Vectorized point location; returns (triangle index, barycentric).

    Points that fall outside every triangle get index -1.
    """
    loc = mesh._cache.get("locator")
    if loc is None:
        loc = mesh._cache["locator"] = _TriangleLocator(mesh)
    return loc.locate(pts, tol=tol * max(1.0, mesh.h))


def locate_point(mesh: TriMesh, x0):
    """Triangle containing ``x0`` (lowest index on ties) and its barycentric coordinates."""
    tri, bary = locate_points(mesh, np.asarray(x0, dtype=float)[None, :])
    if tri[0] < 0:
        raise PointOutsideDomain(f"point {tuple(np.ravel(x0))} lies outside the {mesh.domain.name} mesh")
    return int(tri[0]), bary[0]


def write_mesh(mesh: TriMesh, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"{mesh.n_points} {mesh.n_triangles}\n")
        for x, y in mesh.points:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for i, j, k in mesh.triangles:
            fh.write(f"{i} {j} {k}\n")
        fh.write(f"{len(mesh.boundary_nodes)}\n")
        fh.write(" ".join(str(int(b)) for b in mesh.boundary_nodes) + "\n")


def read_mesh(path, domain: PolygonalDomain | str, level: int = 0) -> TriMesh:
    if isinstance(domain, str):
        domain = DOMAINS[domain]
    with open(path) as fh:
        tokens = fh.read().split()
    nv, nt = int(tokens[0]), int(tokens[1])
    pos = 2
    pts = np.array(tokens[pos : pos + 2 * nv], dtype=float).reshape(nv, 2)
    pos += 2 * nv
    tris = np.array(tokens[pos : pos + 3 * nt], dtype=np.int64).reshape(nt, 3)
    pos += 3 * nt
    nb = int(tokens[pos])
    bnd = np.array(tokens[pos + 1 : pos + 1 + nb], dtype=np.int64)
    return TriMesh(
        points=pts,
        triangles=tris,
        boundary_nodes=np.sort(bnd),
        h=float(_side_lengths_of(pts, tris).max()),
        level=level,
        domain=domain,
    )
