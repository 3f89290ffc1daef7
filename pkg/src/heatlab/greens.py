"""Discrete Green's functions and a fine-mesh reference for the regularized kernel.

Gamma_h(t, ., x0) = E_h(t) delta_{h,x0}.  The regularized kernel Gamma is
the heat evolution of a smooth unit-mass bump supported in the triangle
containing x0; it is approximated by the semigroup of a nested fine mesh
applied to the fine L2 projection of the bump.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .fem import FeFunction, FeSpace, check_nested, clement_matrix, discrete_delta, lq_norms, prolongation
from .mesh import LSHAPE, REENTRANT_CORNER, TriMesh, build_mesh, locate_point, locate_points
from .quadrature import TimeGrid, dyadic_time_grid
from .reference import rational_krylov_decomposition
from .spectral import SemigroupOperator, SpectralDecomposition


@dataclass(frozen=True)
class RegularizedBump:
    """c (1 - r^2/rho^2)^k on the disc of radius rho, normalized to unit mass."""

    center: np.ndarray
    radius: float
    degree: int = 4

    @property
    def normalization(self) -> float:
        return (self.degree + 1) / (math.pi * self.radius**2)

    def __call__(self, x, y):
        r2 = ((np.asarray(x) - self.center[0]) ** 2 + (np.asarray(y) - self.center[1]) ** 2) / self.radius**2
        return self.normalization * np.where(r2 < 1.0, np.clip(1.0 - r2, 0.0, None) ** self.degree, 0.0)

    def polar_rule(self, n_radial: int = 12, n_angular: int = 512):
        """Points and weights integrating the bump times a smooth function."""
        xr, wr = np.polynomial.legendre.leggauss(n_radial)
        r = 0.5 * self.radius * (xr + 1.0)
        wr = 0.5 * self.radius * wr
        theta = (np.arange(n_angular) + 0.5) * (2.0 * math.pi / n_angular)
        R, TH = np.meshgrid(r, theta, indexing="ij")
        pts = self.center[None, :] + np.column_stack([(R * np.cos(TH)).ravel(), (R * np.sin(TH)).ravel()])
        prof = self.normalization * (1.0 - (r / self.radius) ** 2) ** self.degree * r * wr
        w = np.repeat(prof, n_angular) * (2.0 * math.pi / n_angular)
        return pts, w


def make_bump(mesh: TriMesh, x0, degree: int = 4) -> RegularizedBump:
    """Bump inside the triangle containing x0.

    The radius is min(dist(x0, edges), h/4); if x0 sits closer than h/8 to
    an edge it is moved to the incenter of its triangle first.
    """
    x0 = np.asarray(x0, dtype=float)
    tri, _ = locate_point(mesh, x0)
    p = mesh.points[mesh.triangles[tri]]
    dist = _distance_to_triangle_edges(p, x0)
    if dist < mesh.h / 8:
        x0 = mesh.incenters()[tri]
        dist = _distance_to_triangle_edges(p, x0)
    return RegularizedBump(x0, min(dist, mesh.h / 4), degree)


def _distance_to_triangle_edges(p, x):
    d = np.inf
    for k in range(3):
        a, b = p[k], p[(k + 1) % 3]
        e = b - a
        s = np.clip((x - a) @ e / (e @ e), 0.0, 1.0)
        d = min(d, float(np.linalg.norm(x - (a + s * e))))
    return d


def bump_load_vector(space: FeSpace, bump: RegularizedBump) -> np.ndarray:
    pts, w = bump.polar_rule()
    return space.evaluation_matrix(pts).T @ w


def projected_bump(space: FeSpace, bump: RegularizedBump) -> FeFunction:
    return FeFunction(space, space.solver("mass")(bump_load_vector(space, bump)))


@dataclass
class KernelSlice:
    t: float
    x0: np.ndarray
    values: FeFunction
    derivative: int = 0


def kernel_coefficients(S: SemigroupOperator, deltas, times, derivative: int = 0) -> np.ndarray:
    """(d/dt)^k Gamma_h(t, ., x0) for columns of ``deltas``; shape (n, n_x0, nt)."""
    deltas = np.atleast_2d(np.asarray(deltas).T).T
    return kernel_from_modal(S, S.S.modal(deltas), times, derivative)


def kernel_from_modal(S: SemigroupOperator, modal, times, derivative: int = 0) -> np.ndarray:
    lam = S.S.eigenvalues[:, None, None]
    times = np.asarray(times, dtype=float)[None, None, :]
    fac = np.exp(-lam * times)
    if derivative:
        fac = fac * (-lam) ** derivative
    a = modal[:, :, None] * fac
    n = a.shape[0]
    return (S.S.eigenvectors @ a.reshape(n, -1)).reshape(-1, a.shape[1], a.shape[2])


def kernel_slice(space: FeSpace, S: SemigroupOperator, x0, t: float, derivative: int = 0) -> KernelSlice:
    if t < 0:
        raise InvalidArgument(f"time must be non-negative, got {t}")
    d = discrete_delta(space, x0).coeffs
    c = kernel_coefficients(S, d, [t], derivative)[:, 0, 0]
    return KernelSlice(t, np.asarray(x0, dtype=float), FeFunction(space, c), derivative)


def kernel_l1_norm(slice_or_function) -> float:
    f = slice_or_function.values if isinstance(slice_or_function, KernelSlice) else slice_or_function
    return float(lq_norms(f.space, f.coeffs, 1))


def kernel_probe_points(space: FeSpace, probe_level: int = 2, corner_neighbours: int = 3) -> np.ndarray:
    """Incenters of a fixed level-2 probe mesh, plus incenters nearest the reentrant corner."""
    probe = build_mesh(space.mesh.domain.name, probe_level)
    pts = [probe.incenters()]
    if space.mesh.domain is LSHAPE:
        inc = space.mesh.incenters()
        d = np.linalg.norm(inc - REENTRANT_CORNER, axis=1)
        pts.append(inc[np.argsort(d, kind="stable")[:corner_neighbours]])
    return np.vstack(pts)


def kernel_l1_profile(space: FeSpace, S: SemigroupOperator, x0s, times, batch: int = 8):
    """||Gamma_h(t,.,x0)||_{L1} and ||d_t Gamma_h(t,.,x0)||_{L1}, arrays (n_x0, nt)."""
    x0s = np.atleast_2d(x0s)
    modal = S.S.modal(np.column_stack([discrete_delta(space, x).coeffs for x in x0s]))
    g = np.zeros((len(x0s), len(times)))
    dg = np.zeros_like(g)
    for s in range(0, len(x0s), batch):
        sl = slice(s, s + batch)
        for k, out in ((0, g), (1, dg)):
            c = kernel_from_modal(S, modal[:, sl], times, k)
            n, m, nt = c.shape
            out[sl] = lq_norms(space, c.reshape(n, m * nt), 1).reshape(m, nt)
    return g, dg


# -- fine reference -----------------------------------------------------------

def reference_kernel(fine: FeSpace, S_fine: SemigroupOperator, bump: RegularizedBump, t: float,
                     min_resolution: float = 0.5) -> FeFunction:
    """E_{h,fine}(t) P_{h,fine} bump, the fine-mesh surrogate for Gamma(t, ., x0)."""
    check_bump_resolved(fine, bump, min_resolution)
    g = projected_bump(fine, bump).coeffs
    return FeFunction(fine, S_fine.evolve(g, [t])[:, 0])


def check_bump_resolved(fine: FeSpace, bump: RegularizedBump, min_resolution: float) -> None:
    if bump.radius < min_resolution * fine.h:
        raise InvalidArgument(
            f"bump radius {bump.radius:.3e} is not resolved by the fine mesh (h_fine = {fine.h:.3e})"
        )


@dataclass
class KernelPair:
    """Coarse Gamma_h and fine-reference Gamma for one source point.

    Both kernels are evaluated on the fine space; the coarse one by exact
    prolongation of nested P1/P2 functions.
    """

    coarse: FeSpace
    S_coarse: SemigroupOperator
    fine: FeSpace
    bump: RegularizedBump
    S_ref: SemigroupOperator = field(repr=False)
    prolong: object = field(repr=False)
    delta_modal: np.ndarray = field(repr=False)
    ref_modal: np.ndarray = field(repr=False)

    @property
    def x0(self):
        return self.bump.center

    def coarse_coefficients(self, times, derivative=0) -> np.ndarray:
        lam = self.S_coarse.eigenvalues[:, None]
        fac = np.exp(-lam * np.asarray(times, dtype=float)[None, :]) * (-lam) ** derivative
        return self.S_coarse.S.synthesize(self.delta_modal[:, None] * fac)

    def reference_coefficients(self, times, derivative=0) -> np.ndarray:
        mu = self.S_ref.eigenvalues[:, None]
        fac = np.exp(-mu * np.asarray(times, dtype=float)[None, :]) * (-mu) ** derivative
        return self.S_ref.S.synthesize(self.ref_modal[:, None] * fac)

    def difference(self, times, derivative=0) -> np.ndarray:
        """(d/dt)^k F(t) = Gamma_h - Gamma_ref on the fine space, shape (n_fine, nt)."""
        return self.prolong @ self.coarse_coefficients(times, derivative) - self.reference_coefficients(times, derivative)


def build_kernel_pair(coarse: FeSpace, S_coarse: SemigroupOperator, fine: FeSpace, x0,
                      min_levels: int = 2, min_resolution: float = 0.5) -> KernelPair:
    check_nested(coarse, fine)
    if fine.mesh.n_triangles < coarse.mesh.n_triangles * 4**min_levels:
        raise InvalidArgument(f"fine mesh must be at least {min_levels} refinement levels below the coarse mesh")
    bump = make_bump(coarse.mesh, x0)
    check_bump_resolved(fine, bump, min_resolution)
    delta = discrete_delta(coarse, bump.center).coeffs
    g = projected_bump(fine, bump).coeffs
    S_ref = SemigroupOperator(rational_krylov_decomposition(fine, g), fine)
    return KernelPair(
        coarse=coarse,
        S_coarse=S_coarse,
        fine=fine,
        bump=bump,
        S_ref=S_ref,
        prolong=prolongation(coarse, fine),
        delta_modal=S_coarse.S.modal(delta),
        ref_modal=S_ref.S.modal(g),
    )


def kernel_difference_norms(pair: KernelPair, grid: TimeGrid | None = None, batch: int = 16,
                            tail_split: float = 2.0**-10) -> dict:
    """||d_t F||_{L1(Q)} and ||t d_tt F||_{L1(Q)} over Q = (0, 1) x Omega."""
    grid = dyadic_time_grid() if grid is None else grid
    t = grid.nodes
    l1_dt = np.zeros(len(t))
    l1_dtt = np.zeros(len(t))
    for s in range(0, len(t), batch):
        sl = slice(s, s + batch)
        l1_dt[sl] = lq_norms(pair.fine, pair.difference(t[sl], 1), 1)
        l1_dtt[sl] = lq_norms(pair.fine, pair.difference(t[sl], 2), 1)
    w = grid.weights
    dtF = float(np.sum(w * l1_dt))
    tdttF = float(np.sum(w * t * l1_dtt))
    tail = float(np.sum((w * l1_dt)[t < tail_split]))
    return {
        "dtF_L1": dtF,
        "t_dttF_L1": tdttF,
        "tail_fraction": tail / dtF if dtF > 0 else 0.0,
    }


def long_time_decay_rate(space: FeSpace, S: SemigroupOperator, x0, times=None) -> float:
    """Least-squares decay rate of ||d_t Gamma_h(t, ., x0)||_{L1} over t in [1, 4]."""
    times = np.linspace(1.0, 4.0, 13) if times is None else np.asarray(times)
    _, dg = kernel_l1_profile(space, S, np.atleast_2d(x0), times)
    slope = np.polyfit(times, np.log(dg[0]), 1)[0]
    return float(-slope)


def gaussian_envelope_fit(values, points, x0, t, bins: int = 24):
    """Fit log(t |Gamma|) against |x-x0|^2/t over per-bin maxima.

    Returns (slope, intercept); a Gaussian bound C t^-1 exp(-|x-x0|^2/(C t))
    corresponds to slope -1/C.
    """
    s = np.sum((np.asarray(points) - x0) ** 2, axis=1) / t
    v = np.log(np.maximum(np.abs(values) * t, 1e-300))
    edges = np.linspace(0.0, s.max(), bins + 1)
    idx = np.clip(np.digitize(s, edges) - 1, 0, bins - 1)
    xs, ys = [], []
    for b in range(bins):
        sel = idx == b
        if sel.any() and v[sel].max() > np.log(1e-14):
            k = np.argmax(np.where(sel, v, -np.inf))
            xs.append(s[k])
            ys.append(v[k])
    slope, intercept = np.polyfit(xs, ys, 1)
    return float(slope), float(intercept)


def pair_trajectories(pair: KernelPair):
    """(phi, phi_h, I_h phi) of a kernel pair as trajectories on the fine space.

    phi is the reference kernel, phi_h the coarse kernel prolonged to the
    fine mesh and I_h phi the coarse quasi-interpolant of phi, prolonged.
    """
    C = clement_matrix(pair.coarse, pair.fine)
    phi = lambda t, k: pair.reference_coefficients(t, k)
    phi_h = lambda t, k: pair.prolong @ pair.coarse_coefficients(t, k)
    interp = lambda t, k: pair.prolong @ (C @ pair.reference_coefficients(t, k))
    return phi, phi_h, interp


def difference_trajectory(pair: KernelPair):
    return lambda t, k: pair.difference(t, k)
