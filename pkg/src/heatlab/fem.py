"""Lagrange P1/P2 finite elements with homogeneous Dirichlet conditions.

Dirichlet conditions are imposed by eliminating boundary dofs, so every
matrix and coefficient vector exposed here lives on the free (interior)
dofs unless the name says ``full``.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import InvalidArgument, HeatlabError
from .mesh import TriMesh, locate_points, locate_point
from .quadrature import QuadratureRule, triangle_rule


# -- reference basis ---------------------------------------------------------

def basis_values(degree: int, bary: np.ndarray) -> np.ndarray:
    """Basis values at barycentric points, shape (..., nb)."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    if degree == 1:
        return np.stack([l0, l1, l2], axis=-1)
    if degree == 2:
        # vertices, then midpoints of edges (v1v2, v2v0, v0v1)
        return np.stack(
            [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l1 * l2, 4 * l2 * l0, 4 * l0 * l1],
            axis=-1,
        )
    raise InvalidArgument(f"degree must be 1 or 2, got {degree}")


def basis_bary_derivatives(degree: int, bary: np.ndarray) -> np.ndarray:
    """d(phi_a)/d(lambda_k) at barycentric points, shape (..., nb, 3)."""
    shape = bary.shape[:-1]
    if degree == 1:
        return np.broadcast_to(np.eye(3), shape + (3, 3)).copy()
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    z = np.zeros_like(l0)
    rows = [
        [4 * l0 - 1, z, z],
        [z, 4 * l1 - 1, z],
        [z, z, 4 * l2 - 1],
        [z, 4 * l2, 4 * l1],
        [4 * l2, z, 4 * l0],
        [4 * l1, 4 * l0, z],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


class FeSpace:
    """Continuous piecewise polynomials of degree 1 or 2 vanishing on the boundary."""

    def __init__(self, mesh: TriMesh, degree: int = 1):
        if degree not in (1, 2):
            raise InvalidArgument(f"degree must be 1 or 2, got {degree}")
        self.mesh = mesh
        self.degree = degree
        self.rule: QuadratureRule = triangle_rule(5 if degree == 1 else 6)
        nv = mesh.n_points
        if degree == 1:
            self.dofs = np.asarray(mesh.points)
            self.cell_dofs = np.asarray(mesh.triangles)
            bnd = np.zeros(nv, dtype=bool)
            bnd[mesh.boundary_nodes] = True
        else:
            edges = mesh.edges
            self.dofs = np.vstack([mesh.points, 0.5 * (mesh.points[edges[:, 0]] + mesh.points[edges[:, 1]])])
            self.cell_dofs = np.hstack([mesh.triangles, mesh.triangle_edges + nv])
            bnd = np.zeros(len(self.dofs), dtype=bool)
            bnd[mesh.boundary_nodes] = True
            bnd[nv:][mesh.edge_triangle_count == 1] = True
        self.boundary_mask = bnd
        self.interior_dofs = np.flatnonzero(~bnd)
        self.free_index = np.full(len(self.dofs), -1, dtype=np.int64)
        self.free_index[self.interior_dofs] = np.arange(len(self.interior_dofs))
        self._solvers = {}

    def __repr__(self):
        return f"FeSpace({self.mesh.domain.name}, level={self.mesh.level}, r={self.degree}, n={self.dim})"

    @property
    def n_dofs(self) -> int:
        return len(self.dofs)

    @property
    def dim(self) -> int:
        """Dimension of the free system."""
        return len(self.interior_dofs)

    @property
    def dof_per_tri(self) -> int:
        return self.cell_dofs.shape[1]

    @property
    def h(self) -> float:
        return self.mesh.h

    # -- geometry ------------------------------------------------------------

    @cached_property
    def areas(self) -> np.ndarray:
        return self.mesh.areas()

    @cached_property
    def bary_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape (T, 3, 2)."""
        p = self.mesh.points[self.mesh.triangles]
        d1, d2 = p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        return np.stack([-g1 - g2, g1, g2], axis=1)

    @cached_property
    def quad_points(self) -> np.ndarray:
        """Physical quadrature points, shape (T, nq, 2)."""
        p = self.mesh.points[self.mesh.triangles]
        return np.einsum("qk,tkd->tqd", self.rule.points, p)

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Physical quadrature weights, shape (T, nq)."""
        return self.areas[:, None] * self.rule.weights[None, :]

    @cached_property
    def _ref_values(self) -> np.ndarray:
        return basis_values(self.degree, self.rule.points)  # (nq, nb)

    @cached_property
    def _ref_dlam(self) -> np.ndarray:
        return basis_bary_derivatives(self.degree, self.rule.points)  # (nq, nb, 3)

    def basis_gradients_at_quad(self) -> np.ndarray:
        """Physical basis gradients at quadrature points, shape (T, nq, nb, 2)."""
        return np.einsum("qak,tkd->tqad", self._ref_dlam, self.bary_gradients)

    # -- matrices ------------------------------------------------------------

    @cached_property
    def element_mass(self) -> np.ndarray:
        phi = self._ref_values
        ref = np.einsum("q,qa,qb->ab", self.rule.weights, phi, phi)
        return self.areas[:, None, None] * ref[None]

    @cached_property
    def element_stiffness(self) -> np.ndarray:
        g = self.basis_gradients_at_quad()
        return np.einsum("tq,tqad,tqbd->tab", self.quad_weights, g, g)

    def _assemble_full(self, elem):
        nb = self.dof_per_tri
        rows = np.repeat(self.cell_dofs, nb, axis=1).ravel()
        cols = np.tile(self.cell_dofs, (1, nb)).ravel()
        A = sp.coo_matrix((elem.ravel(), (rows, cols)), shape=(self.n_dofs, self.n_dofs)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return ((A + A.T) * 0.5).tocsr()

    def restrict(self, A_full):
        idx = self.interior_dofs
        return A_full[idx][:, idx].tocsr()

    @cached_property
    def mass_full(self):
        return self._assemble_full(self.element_mass)

    @cached_property
    def stiffness_full(self):
        return self._assemble_full(self.element_stiffness)

    @cached_property
    def mass(self):
        return self.restrict(self.mass_full)

    @cached_property
    def stiffness(self):
        return self.restrict(self.stiffness_full)

    def solver(self, which: str):
        """Cached sparse LU solve for 'mass' or 'stiffness'."""
        if which not in self._solvers:
            A = self.mass if which == "mass" else self.stiffness
            if A.shape[0] == 0:
                raise HeatlabError("space has no interior dofs")
            self._solvers[which] = spla.splu(A.tocsc())
        return self._solvers[which].solve

    # -- coefficient handling -----------------------------------------------

    def full(self, coeffs) -> np.ndarray:
        """Embed free coefficients (n,) or (n, m) into all dofs with zeros on the boundary."""
        coeffs = np.asarray(coeffs)
        out = np.zeros((self.n_dofs,) + coeffs.shape[1:], dtype=coeffs.dtype)
        out[self.interior_dofs] = coeffs
        return out

    def element_coefficients(self, coeffs) -> np.ndarray:
        return self.full(coeffs)[self.cell_dofs]  # (T, nb, ...)

    def values_at_quad(self, coeffs) -> np.ndarray:
        """Values at quadrature points, shape (T, nq) or (T, nq, m)."""
        ce = self.element_coefficients(coeffs)
        if ce.ndim == 3:
            return np.matmul(self._ref_values, ce)  # batched over triangles
        return np.einsum("qa,ta...->tq...", self._ref_values, ce)

    def gradients_at_quad(self, coeffs) -> np.ndarray:
        """Gradients at quadrature points, shape (T, nq, 2) or (T, nq, 2, m)."""
        ce = self.element_coefficients(coeffs)
        dl = np.einsum("qak,ta...->tqk...", self._ref_dlam, ce)
        return np.einsum("tqk...,tkd->tqd...", dl, self.bary_gradients)

    def evaluation_matrix(self, pts, free: bool = True):
        """Sparse matrix mapping coefficients to point values."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        tri, bary = locate_points(self.mesh, pts)
        if np.any(tri < 0):
            from .errors import PointOutsideDomain

            bad = pts[tri < 0][0]
            raise PointOutsideDomain(f"point {tuple(bad)} lies outside the {self.mesh.domain.name} mesh")
        return self._eval_matrix(tri, bary, free)

    def _eval_matrix(self, tri, bary, free=True):
        vals = basis_values(self.degree, bary)  # (P, nb)
        rows = np.repeat(np.arange(len(tri)), self.dof_per_tri)
        cols = self.cell_dofs[tri].ravel()
        E = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(len(tri), self.n_dofs))
        E.sum_duplicates()
        return E[:, self.interior_dofs].tocsr() if free else E

    def basis_at(self, x0) -> np.ndarray:
        """Vector of free basis function values at a single point."""
        tri, bary = locate_point(self.mesh, x0)
        out = np.zeros(self.n_dofs)
        out[self.cell_dofs[tri]] = basis_values(self.degree, bary)
        return out[self.interior_dofs]

    def interpolate(self, f) -> "FeFunction":
        """Nodal interpolant of a callable f(x, y)."""
        x = self.dofs[self.interior_dofs]
        return FeFunction(self, np.asarray(f(x[:, 0], x[:, 1]), dtype=float))

    def function(self, coeffs) -> "FeFunction":
        return FeFunction(self, np.asarray(coeffs, dtype=float))

    def zero(self) -> "FeFunction":
        return FeFunction(self, np.zeros(self.dim))

    @cached_property
    def patch_triangles(self) -> list:
        """For every dof, the triangles whose closure contains its node."""
        order = np.argsort(self.cell_dofs.ravel(), kind="stable")
        tri_of = order // self.dof_per_tri
        counts = np.bincount(self.cell_dofs.ravel(), minlength=self.n_dofs)
        return np.split(tri_of, np.cumsum(counts)[:-1])


class FeFunction:
    """An element of S_h stored by its free coefficients."""

    def __init__(self, space: FeSpace, coeffs):
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (space.dim,):
            raise InvalidArgument(f"expected {space.dim} coefficients, got shape {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    def __repr__(self):
        return f"FeFunction({self.space!r})"

    def __add__(self, other):
        return FeFunction(self.space, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return FeFunction(self.space, self.coeffs - other.coeffs)

    def __mul__(self, a):
        return FeFunction(self.space, a * self.coeffs)

    __rmul__ = __mul__

    def __neg__(self):
        return FeFunction(self.space, -self.coeffs)

    def __call__(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.space.evaluation_matrix(pts) @ self.coeffs

    def inner(self, other) -> float:
        return float(self.coeffs @ (self.space.mass @ other.coeffs))

    def norm(self, q=2) -> float:
        return fe_lq_norm(self, q)

    def save(self, path) -> None:
        write_fe_coefficients(path, self.coeffs)


def write_fe_coefficients(path, coeffs, header: str | None = None) -> None:
    """'DOF n' header plus one coefficient per line at full precision."""
    with open(path, "w", newline="\n") as fh:
        if header is not None:
            fh.write(header.rstrip("\n") + "\n")
        fh.write(f"DOF {len(coeffs)}\n")
        for c in coeffs:
            fh.write(f"{float(c):.17g}\n")


def read_fe_coefficients(path) -> np.ndarray:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    start = next(i for i, ln in enumerate(lines) if ln.startswith("DOF "))
    n = int(lines[start].split()[1])
    vals = np.array([float(v) for v in lines[start + 1 : start + 1 + n]])
    if len(vals) != n:
        raise InvalidArgument(f"file declares {n} coefficients but holds {len(vals)}")
    return vals


def load_fe_function(space: FeSpace, path) -> FeFunction:
    return FeFunction(space, read_fe_coefficients(path))


# -- operations --------------------------------------------------------------

def assemble_mass(space: FeSpace, full: bool = False):
    return space.mass_full if full else space.mass


def assemble_stiffness(space: FeSpace, full: bool = False):
    return space.stiffness_full if full else space.stiffness


def load_vector(space: FeSpace, f) -> np.ndarray:
    """b_i = integral of f * phi_i for a callable f(x, y), on free dofs."""
    q = space.quad_points
    vals = np.asarray(f(q[..., 0], q[..., 1]), dtype=float) * space.quad_weights
    elem = np.einsum("tq,qa->ta", vals, space._ref_values)
    b = np.bincount(space.cell_dofs.ravel(), weights=elem.ravel(), minlength=space.n_dofs)
    return b[space.interior_dofs]


def l2_project(space: FeSpace, f) -> FeFunction:
    """L2 projection P_h f of a callable f(x, y)."""
    b = load_vector(space, f)
    c = space.solver("mass")(b)
    res = np.abs(space.mass @ c - b).max(initial=0.0)
    if res > 1e-10 * max(np.abs(b).max(initial=0.0), 1e-300):
        raise HeatlabError(f"mass solve residual {res:.3e} too large")
    return FeFunction(space, c)


def ritz_project(space: FeSpace, u, grad_u) -> FeFunction:
    """Ritz projection R_h u from callables u(x, y) and grad_u(x, y) -> (gx, gy).

    ``u`` is accepted for symmetry with the other projections; only its
    gradient enters the Galerkin right-hand side.
    """
    q = space.quad_points
    gx, gy = grad_u(q[..., 0], q[..., 1])
    g = np.stack([np.broadcast_to(gx, q.shape[:2]), np.broadcast_to(gy, q.shape[:2])], axis=-1)
    dphi = space.basis_gradients_at_quad()
    elem = np.einsum("tq,tqd,tqad->ta", space.quad_weights, g, dphi)
    b = np.bincount(space.cell_dofs.ravel(), weights=elem.ravel(), minlength=space.n_dofs)[space.interior_dofs]
    return FeFunction(space, space.solver("stiffness")(b))


def fe_lq_norm(f: FeFunction, q=2) -> float:
    """L^q norm of an FE function; q may be float('inf')."""
    return float(lq_norms(f.space, f.coeffs, q))


def lq_norms(space: FeSpace, coeffs, q):
    """L^q norms of one (n,) or many (n, m) coefficient vectors."""
    return lq_norms_multi(space, coeffs, [q])[0]


def lq_norms_multi(space: FeSpace, coeffs, qs) -> list:
    """Several L^q norms from a single evaluation at the quadrature points."""
    qs = [float(q) for q in qs]
    for q in qs:
        if not q >= 1:
            raise InvalidArgument(f"exponent q must lie in [1, inf], got {q}")
    coeffs = np.asarray(coeffs)
    if coeffs.ndim == 2:
        # bound the size of the quadrature-value array
        step = max(1, int(4e6 // max(1, space.quad_weights.size)))
        if coeffs.shape[1] > step:
            parts = [lq_norms_multi(space, coeffs[:, s : s + step], qs) for s in range(0, coeffs.shape[1], step)]
            return [np.concatenate([p[k] for p in parts]) for k in range(len(qs))]
    vals = space.values_at_quad(coeffs)
    w = space.quad_weights
    if vals.ndim == 3:
        w = w[..., None]
    out = []
    absv = np.abs(vals)
    for q in qs:
        if np.isinf(q):
            qmax = absv.max(axis=(0, 1))
            dmax = np.abs(coeffs).max(axis=0, initial=0.0) if coeffs.size else 0.0
            out.append(np.maximum(qmax, dmax))
        elif q == 2.0:
            out.append(np.sqrt(np.sum(w * vals * vals, axis=(0, 1))))
        elif q == 1.0:
            out.append(np.sum(w * absv, axis=(0, 1)))
        elif q == 4.0:
            v2 = vals * vals
            out.append(np.sum(w * v2 * v2, axis=(0, 1)) ** 0.25)
        else:
            out.append(np.sum(w * absv**q, axis=(0, 1)) ** (1.0 / q))
    return out


def discrete_delta(space: FeSpace, x0) -> FeFunction:
    """delta_{h,x0}: the FE function with (delta, chi) = chi(x0) for all chi in S_h."""
    phi = space.basis_at(x0)
    return FeFunction(space, space.solver("mass")(phi))


# -- transfer between nested spaces -----------------------------------------

def prolongation(coarse: FeSpace, fine: FeSpace):
    """Sparse interpolation matrix from coarse to fine free coefficients.

    Exact when the fine mesh refines the coarse one; raises otherwise.
    """
    check_nested(coarse, fine)
    E = coarse.evaluation_matrix(fine.dofs[fine.interior_dofs])
    E.data[np.abs(E.data) < 1e-14] = 0.0
    E.eliminate_zeros()
    return E


def parent_triangles(coarse: FeSpace, fine: FeSpace) -> np.ndarray:
    """Coarse triangle containing each fine triangle."""
    key = ("parents", id(coarse.mesh))
    cache = fine.mesh._cache
    if key not in cache:
        tri, _ = locate_points(coarse.mesh, fine.mesh.centroids())
        if np.any(tri < 0):
            raise InvalidArgument("fine mesh is not nested in the coarse mesh")
        verts = fine.mesh.points[fine.mesh.triangles]  # (Tf, 3, 2)
        lam = coarse.mesh.barycentric(np.repeat(tri, 3), verts.reshape(-1, 2))
        if lam.min() < -1e-10:
            raise InvalidArgument("fine mesh is not nested in the coarse mesh")
        cache[key] = tri
    return cache[key]


def check_nested(coarse: FeSpace, fine: FeSpace) -> None:
    if coarse.mesh.domain is not fine.mesh.domain:
        raise InvalidArgument("spaces live on different domains")
    if fine.mesh.n_triangles < coarse.mesh.n_triangles:
        raise InvalidArgument("fine mesh has fewer triangles than the coarse mesh")
    parent_triangles(coarse, fine)


def element_moment_matrix(coarse: FeSpace, fine: FeSpace | None = None):
    """Sparse map from coefficients to per-element moments of the coarse space.

    Row ``t*nb + a`` holds the functional v -> integral over triangle t of
    v * phi_a^t, where phi_a^t is the local basis of the coarse element.  The
    argument v is a coefficient vector of ``fine`` (nested, possibly equal to
    ``coarse``); the quadrature is exact because the integrand is a
    polynomial on every fine triangle.
    """
    fine = coarse if fine is None else fine
    nb = coarse.dof_per_tri
    if fine is coarse:
        Me = coarse.element_mass  # (T, nb, nb)
        rows = np.repeat(np.arange(coarse.mesh.n_triangles * nb), nb)
        cols = np.repeat(coarse.cell_dofs, nb, axis=0).ravel()
        A = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(coarse.mesh.n_triangles * nb, coarse.n_dofs))
        return A[:, coarse.interior_dofs].tocsr()
    parents = parent_triangles(coarse, fine)
    qp = fine.quad_points  # (Tf, nq, 2)
    Tf, nq, _ = qp.shape
    lam = coarse.mesh.barycentric(np.repeat(parents, nq), qp.reshape(-1, 2)).reshape(Tf, nq, 3)
    phi_c = basis_values(coarse.degree, lam)  # (Tf, nq, nbc)
    phi_f = fine._ref_values  # (nq, nbf)
    loc = np.einsum("tq,tqa,qb->tab", fine.quad_weights, phi_c, phi_f)  # (Tf, nbc, nbf)
    nbf = fine.dof_per_tri
    rows = (parents[:, None, None] * nb + np.arange(nb)[None, :, None]) + np.zeros((1, 1, nbf), dtype=np.int64)
    cols = np.broadcast_to(fine.cell_dofs[:, None, :], loc.shape)
    A = sp.csr_matrix((loc.ravel(), (rows.ravel(), cols.ravel())), shape=(coarse.mesh.n_triangles * nb, fine.n_dofs))
    A.sum_duplicates()
    return A[:, fine.interior_dofs].tocsr()


def element_moments_of_callable(space: FeSpace, v) -> np.ndarray:
    q = space.quad_points
    vals = np.asarray(v(q[..., 0], q[..., 1]), dtype=float) * space.quad_weights
    return np.einsum("tq,qa->ta", vals, space._ref_values).ravel()


# -- Clement-type quasi-interpolation ---------------------------------------

def clement_operator(space: FeSpace):
    """Sparse map from element moments to I_h nodal values on free dofs.

    For each interior node x_i the local L2 projection onto the FE functions
    of its patch (no boundary constraint inside the patch) is evaluated at
    x_i, i.e. its coefficient for the nodal basis function of x_i.
    """
    cache = space.__dict__.setdefault("_clement", {})
    if "op" in cache:
        return cache["op"]
    nb = space.dof_per_tri
    Me = space.element_mass
    rows, cols, vals = [], [], []
    patches = space.patch_triangles
    for k, i in enumerate(space.interior_dofs):
        tris = patches[i]
        if len(tris) == 0:
            raise HeatlabError(f"empty patch at dof {i}")
        local = np.unique(space.cell_dofs[tris])
        pos = np.searchsorted(local, space.cell_dofs[tris])  # (p, nb)
        m = len(local)
        Ml = np.zeros((m, m))
        for t_loc, t in enumerate(tris):
            Ml[np.ix_(pos[t_loc], pos[t_loc])] += Me[t]
        e = np.zeros(m)
        e[np.searchsorted(local, i)] = 1.0
        r = np.linalg.solve(Ml, e)  # row of Ml^{-1} for node i (Ml symmetric)
        rows.append(np.full(len(tris) * nb, k))
        cols.append((tris[:, None] * nb + np.arange(nb)[None, :]).ravel())
        vals.append(r[pos].ravel())
    op = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(space.dim, space.mesh.n_triangles * nb),
    )
    cache["op"] = op
    return op


def clement_interpolate(space: FeSpace, v) -> FeFunction:
    """I_h v for v a callable, an FE function on ``space``, or one on a nested finer space."""
    op = clement_operator(space)
    if isinstance(v, FeFunction):
        moments = element_moment_matrix(space, v.space if v.space is not space else None) @ v.coeffs
    elif callable(v):
        moments = element_moments_of_callable(space, v)
    else:
        raise InvalidArgument("v must be an FeFunction or a callable")
    return FeFunction(space, op @ moments)


def clement_matrix(coarse: FeSpace, fine: FeSpace | None = None):
    """I_h as a sparse matrix acting on coefficient vectors of ``fine``."""
    return (clement_operator(coarse) @ element_moment_matrix(coarse, fine)).tocsr()
