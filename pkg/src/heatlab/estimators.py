"""Empirical constants of the discrete heat semigroup, measured as maxima over probes.

Each estimator returns an :class:`EstimateRecord`; a probe maximum is a
lower bound for the corresponding operator norm.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .fem import FeSpace, clement_interpolate, clement_matrix, l2_project, lq_norms, lq_norms_multi, ritz_project
from .greens import kernel_from_modal, kernel_l1_profile, kernel_probe_points
from .mesh import LSHAPE, REENTRANT_CORNER, locate_points, mesh_quality
from .parabolic import SourceTerm, separable, solve_semidiscrete, square_wave_flips, time_grid_for
from .quadrature import TimeGrid, default_time_grid
from .spectral import SemigroupOperator

MAXREG_PAIRS = ((2.0, 2.0), (4.0, 4.0), (4.0, 2.0), (2.0, 4.0), (math.inf, math.inf))
INF = math.inf


def ell_h(h: float) -> float:
    """The logarithmic factor log(2 + 1/h)."""
    return math.log(2.0 + 1.0 / h)


def default_t_grid() -> np.ndarray:
    return np.logspace(-6, 1, 40)


@dataclass
class EstimateRecord:
    scenario: str
    domain: str
    level: int
    h: float
    r: int
    p: object
    q: object
    value: float
    aux: object = ""
    K_quasi: float = float("nan")
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value >= 0):
            raise InvalidArgument(f"estimate must be finite and non-negative, got {self.value}")


def new_record(scenario, space: FeSpace, p, q, value, aux="", **extra) -> EstimateRecord:
    mesh = space.mesh
    return EstimateRecord(
        scenario, mesh.domain.name, mesh.level, mesh.h, space.degree, p, q, float(value), aux,
        mesh_quality(mesh).K_quasi, dict(extra),
    )


# -- probes -------------------------------------------------------------------

PROBE_KINDS = ("eigenmodes", "random", "spikes", "corner", "checkerboard")


@dataclass(frozen=True)
class ProbeFamily:
    kind: str
    count: int = 4
    seed: int = 42

    def __post_init__(self):
        if self.kind not in PROBE_KINDS:
            raise InvalidArgument(f"unknown probe kind {self.kind!r}; expected one of {PROBE_KINDS}")
        if self.count < 1:
            raise InvalidArgument("probe count must be positive")

    def generate(self, space: FeSpace, S: SemigroupOperator | None = None) -> np.ndarray:
        """Coefficient vectors of the probes, shape (dim, count)."""
        n = space.dim
        m = self.count
        x = space.dofs[space.interior_dofs]
        if self.kind == "eigenmodes":
            if S is None:
                raise InvalidArgument("eigenmode probes need a spectral decomposition")
            out = S.S.eigenvectors[:, :m].copy()
        elif self.kind == "random":
            out = np.random.default_rng(self.seed).standard_normal((n, m))
        elif self.kind == "spikes":
            out = np.zeros((n, m))
            rng = np.random.default_rng(self.seed)
            picks = list(rng.choice(n, size=min(m, n), replace=False))
            centre = _focus_point(space)
            picks[0] = int(np.argmin(np.linalg.norm(x - centre, axis=1)))
            for k, i in enumerate(picks):
                out[i, k] = 1.0
        elif self.kind == "corner":
            c = _focus_point(space)
            widths = 0.4 * 2.0 ** -np.arange(m)
            r2 = np.sum((x - c) ** 2, axis=1)
            out = np.exp(-r2[:, None] / widths[None, :] ** 2)
        else:
            cell = space.h / math.sqrt(2.0)
            out = np.empty((n, m))
            for k in range(m):
                w = cell * 2**k
                out[:, k] = (-1.0) ** (np.floor(x[:, 0] / w + 1e-9) + np.floor(x[:, 1] / w + 1e-9))
        if np.any(np.abs(out).max(axis=0) == 0):
            raise InvalidArgument(f"{self.kind} family produced a zero probe")
        return out


def _focus_point(space: FeSpace) -> np.ndarray:
    """The reentrant corner on the L-shape, the centre elsewhere."""
    if space.mesh.domain is LSHAPE:
        return REENTRANT_CORNER
    return space.mesh.points.mean(axis=0)


def default_probes(space: FeSpace, S: SemigroupOperator, seed: int = 42, count: int = 4) -> np.ndarray:
    return np.hstack([ProbeFamily(k, count, seed).generate(space, S) for k in PROBE_KINDS])


def _check_probes(probes) -> np.ndarray:
    probes = np.atleast_2d(np.asarray(probes, dtype=float).T).T
    if probes.size == 0 or probes.shape[1] == 0:
        raise InvalidArgument("empty probe family")
    return probes


# -- analyticity --------------------------------------------------------------

def analyticity_table(space: FeSpace, S: SemigroupOperator, qs=(1.0, 2.0, 4.0, INF), t_grid=None, probes=None,
                      kernel_points=None) -> list:
    """Analyticity records for several q from one evolution of the probes."""
    qs = [float(q) for q in qs]
    for q in qs:
        if q not in (1.0, 2.0, 4.0, INF):
            raise InvalidArgument(f"q must be one of 1, 2, 4, inf; got {q}")
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    probes = _check_probes(default_probes(space, S) if probes is None else probes)
    modal = S.S.modal(probes)  # (n, m)
    lam = S.eigenvalues[:, None, None]
    decay = np.exp(-lam * t[None, None, :])
    m, nt = probes.shape[1], len(t)
    V = S.S.eigenvectors
    ev = V @ (modal[:, :, None] * decay).reshape(len(lam), -1)
    dv = V @ (modal[:, :, None] * (-lam) * decay).reshape(len(lam), -1)
    n_e = lq_norms_multi(space, ev, qs)
    n_d = lq_norms_multi(space, dv, qs)
    base = lq_norms_multi(space, probes, qs)
    out = []
    for q, ne, nd, b in zip(qs, n_e, n_d, base):
        ne, nd = ne.reshape(m, nt), nd.reshape(m, nt)
        ratios = (ne + t[None, :] * nd) / b[:, None]
        k, i = np.unravel_index(np.argmax(ratios), ratios.shape)
        extra = {"argmax_probe": int(k), "argmax_t": float(t[i]), "t_min": float(t[0]),
                 "ratio_at_t_min": ne[:, 0] / b}
        aux = float(t[i])
        if np.isinf(q):
            x0s = kernel_probe_points(space) if kernel_points is None else kernel_points
            g, dg = kernel_l1_profile(space, S, x0s, t)
            aux = float((g + t[None, :] * dg).max())
            extra["kernel_bound"] = aux
            extra["kernel_l1_sup"] = float(g.max())
        out.append(new_record("analyticity", space, "inf", _fmt_exp(q), ratios[k, i], aux, **extra))
    return out


def analyticity_constant(space: FeSpace, S: SemigroupOperator, q, t_grid=None, probes=None,
                         kernel_points=None) -> EstimateRecord:
    """max over probes and t of (||E_h(t) v||_q + t ||d_t E_h(t) v||_q) / ||v||_q.

    For q = inf the aux field carries the kernel bound
    sup_{x0, t} (||Gamma_h||_{L1} + t ||d_t Gamma_h||_{L1}), the exact
    L^inf operator norm of the same quantity.
    """
    return analyticity_table(space, S, [q], t_grid, probes, kernel_points)[0]


def _fmt_exp(x):
    return "inf" if np.isinf(float(x)) else float(x)


# -- maximal function ---------------------------------------------------------

def probe_point_weights(space: FeSpace, points) -> np.ndarray:
    """Areas of the probe-mesh triangles owning each probe point."""
    from .mesh import build_mesh

    probe = build_mesh(space.mesh.domain.name, 2)
    tri, _ = locate_points(probe, points)
    w = np.where(tri >= 0, probe.areas()[np.maximum(tri, 0)], 0.0)
    n_probe = probe.n_triangles
    if len(points) > n_probe:
        # extra points near the corner carry the areas of their own mesh triangles
        t2, _ = locate_points(space.mesh, points[n_probe:])
        w[n_probe:] = space.mesh.areas()[t2]
    return w


def maximal_function_table(space: FeSpace, S: SemigroupOperator, qs=(2.0, 4.0, INF), t_grid=None, probes=None,
                           points=None, weights=None) -> list:
    """||sup_t |E_h(t)| |v| ||_q / ||v||_q on the probe-point grid, maximized over probes."""
    qs = [float(q) for q in qs]
    for q in qs:
        if q not in (2.0, 4.0, INF):
            raise InvalidArgument(f"maximal-function ratio needs q in {{2, 4, inf}}, got {q}")
    t = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    probes = _check_probes(default_probes(space, S) if probes is None else probes)
    pts = kernel_probe_points(space) if points is None else np.atleast_2d(points)
    w = probe_point_weights(space, pts) if weights is None else np.asarray(weights)
    M = maximal_function_values(space, S, pts, t, probes)  # (n_pts, m)
    dens = lq_norms_multi(space, probes, qs)
    out = []
    for q, den in zip(qs, dens):
        num = M.max(axis=0) if np.isinf(q) else np.sum(w[:, None] * M**q, axis=0) ** (1.0 / q)
        ratios = num / den
        k = int(np.argmax(ratios))
        out.append(new_record("maximal-function", space, "inf", _fmt_exp(q), ratios[k], k,
                              ratios=ratios, probe_grid_norms=_grid_norm(space, pts, w, probes, q) / den))
    return out


def maximal_function_ratio(space: FeSpace, S: SemigroupOperator, q, t_grid=None, probes=None,
                           points=None, weights=None) -> EstimateRecord:
    return maximal_function_table(space, S, [q], t_grid, probes, points, weights)[0]


def maximal_function_values(space: FeSpace, S: SemigroupOperator, points, times, probes) -> np.ndarray:
    """sup_t of int |Gamma_h(t, x, x0)| |v(x)| dx for every probe point x0 and probe v."""
    from .fem import discrete_delta

    modal = S.S.modal(np.column_stack([discrete_delta(space, x).coeffs for x in points]))
    absv = np.abs(space.values_at_quad(probes)) * space.quad_weights[..., None]  # (T, nq, m)
    out = np.zeros((len(points), probes.shape[1]))
    for tk in times:
        c = kernel_from_modal(S, modal, [tk])[:, :, 0]
        g = np.abs(space.values_at_quad(c))  # (T, nq, n_pts)
        out = np.maximum(out, np.einsum("tqp,tqm->pm", g, absv))
    return out


def _grid_norm(space, pts, w, probes, q):
    vals = np.abs(space.evaluation_matrix(pts) @ probes)
    if np.isinf(q):
        return vals.max(axis=0)
    return np.sum(w[:, None] * vals**q, axis=0) ** (1.0 / q)


# -- maximal regularity -------------------------------------------------------

def default_sources(space: FeSpace, S: SemigroupOperator, seed: int = 42, T: float = 1.0) -> list:
    """Separable probe sources: spatial probes times several time profiles."""
    spatial = [
        ("v1", S.S.eigenvectors[:, 0]),
        ("random", ProbeFamily("random", 1, seed).generate(space)[:, 0]),
        ("spike", ProbeFamily("spikes", 1, seed).generate(space)[:, 0]),
        ("corner", ProbeFamily("corner", 2, seed).generate(space)[:, 1]),
        ("checker", ProbeFamily("checkerboard", 1, seed).generate(space)[:, 0]),
    ]
    sources = []
    for name, w in spatial:
        sources.append(separable(w, "one", T, label=f"{name}-one"))
        sources.append(separable(w, "exp", T, label=f"{name}-exp"))
        sources.append(separable(w, "cos", T, omega=20.0, label=f"{name}-cos"))
        sources.append(separable(w, "square", T, flips=square_wave_flips(T), label=f"{name}-square"))
    return sources


def _check_pair(p, q):
    pair = (float(p), float(q))
    if pair not in MAXREG_PAIRS:
        raise InvalidArgument(f"unsupported (p, q) = {pair}; expected one of {MAXREG_PAIRS}")
    return pair


def maximal_regularity_table(space: FeSpace, S: SemigroupOperator, pairs=MAXREG_PAIRS, sources=None,
                             T: float = 1.0) -> list:
    """One record per (p, q): max over sources of ||Delta_h u||_{L^p L^q} / ||P_h f||_{L^p L^q}."""
    pairs = [_check_pair(p, q) for p, q in pairs]
    sources = default_sources(space, S, T=T) if sources is None else sources
    if not sources:
        raise InvalidArgument("empty source family")
    qs = sorted({q for _, q in pairs})
    best = {pq: (-1.0, None) for pq in pairs}
    for src in sources:
        grid = time_grid_for(src)
        times = np.concatenate([grid.nodes, grid.edges[1:]])
        traj = solve_semidiscrete(space, S.S, src, times, fields=("lap_u", "source"))
        nt = len(grid.nodes)
        lus = lq_norms_multi(space, traj.lap_u, qs)
        lfs = lq_norms_multi(space, traj.source, qs)
        for q, lu, lf in zip(qs, lus, lfs):
            for p, qq in pairs:
                if qq != q:
                    continue
                if np.isinf(p):
                    num, den = lu.max(), lf.max()
                else:
                    num = np.sum(grid.weights * lu[:nt] ** p) ** (1 / p)
                    den = np.sum(grid.weights * lf[:nt] ** p) ** (1 / p)
                ratio = num / den
                if ratio > best[(p, q)][0]:
                    best[(p, q)] = (ratio, src.label)
    out = []
    for p, q in pairs:
        val, label = best[(p, q)]
        aux = val / ell_h(space.h) if np.isinf(p) else label
        out.append(new_record("maxreg", space, _fmt_exp(p), _fmt_exp(q), val, aux, argmax_source=label))
    return out


def maximal_regularity_constant(space: FeSpace, S: SemigroupOperator, p, q, sources=None, T: float = 1.0):
    return maximal_regularity_table(space, S, [(p, q)], sources, T)[0]


def single_mode_l2_ratio(lam: float, T: float = 1.0) -> float:
    """Closed-form ||Delta_h u||/||f|| in L2(0,T;L2) for f = v_1 constant in time."""
    integral = (T + 2.0 * math.expm1(-lam * T) / lam - math.expm1(-2.0 * lam * T) / (2.0 * lam)) / lam**2
    return math.sqrt(lam**2 * integral / T)


# -- errors against a fine reference ------------------------------------------

@dataclass
class ReferenceTrajectory:
    """Fine-mesh solution u(t) = E_fine(t) u0 in modal form."""

    fine: FeSpace
    S_fine: SemigroupOperator
    u0: np.ndarray

    def __post_init__(self):
        self._modal = self.S_fine.S.modal(self.u0)

    def at(self, times) -> np.ndarray:
        return self.S_fine.S.synthesize(self.S_fine.evolve_modal(self._modal, times))


def fine_reference(fine: FeSpace, u0) -> ReferenceTrajectory:
    """Evolution of u0 on the fine space via a Krylov basis when the space is too big for dense."""
    from .reference import rational_krylov_decomposition
    from .spectral import DEFAULT_DOF_CAP, decompose_space

    if fine.dim <= DEFAULT_DOF_CAP:
        S = decompose_space(fine)
    else:
        S = rational_krylov_decomposition(fine, u0)
    return ReferenceTrajectory(fine, SemigroupOperator(S, fine), np.asarray(u0, dtype=float))


class Transfer:
    """Projections between a coarse space and a nested fine one, on coefficient arrays."""

    def __init__(self, coarse: FeSpace, fine: FeSpace):
        from .fem import prolongation

        self.coarse, self.fine = coarse, fine
        self.P = prolongation(coarse, fine)
        self._PtM = (self.P.T @ fine.mass).tocsr()
        self._PtK = (self.P.T @ fine.stiffness).tocsr()
        self._C = None

    def l2(self, u):
        return self.coarse.solver("mass")(self._PtM @ u)

    def ritz(self, u):
        return self.coarse.solver("stiffness")(self._PtK @ u)

    def clement(self, u):
        if self._C is None:
            self._C = clement_matrix(self.coarse, self.fine)
        return self._C @ u

    def up(self, c):
        return self.P @ c


def _linf_linf(space, F):
    return float(np.max(lq_norms(space, F, INF)))


def best_approximation_ratio(coarse: FeSpace, S_coarse: SemigroupOperator, ref: ReferenceTrajectory,
                             grid: TimeGrid | None = None) -> EstimateRecord:
    """||u - u_h||_{L^inf L^inf} / (ell_h^2 min_chi ||u - chi||_{L^inf L^inf}), u_h(0) = P_h u(0)."""
    tr = Transfer(coarse, ref.fine)
    grid = default_time_grid(1.0) if grid is None else grid
    times = np.concatenate([[0.0], grid.nodes, grid.edges[1:]])
    u = ref.at(times)
    uh = S_coarse.evolve(tr.l2(ref.u0), times)
    num = _linf_linf(ref.fine, u - tr.up(uh))
    cands = {
        "I_h": _linf_linf(ref.fine, u - tr.up(tr.clement(u))),
        "P_h": _linf_linf(ref.fine, u - tr.up(tr.l2(u))),
        "R_h": _linf_linf(ref.fine, u - tr.up(tr.ritz(u))),
    }
    choice = min(cands, key=cands.get)
    den = ell_h(coarse.h) ** 2 * cands[choice]
    value, vacuous = _safe_ratio(num, den, ell_h(coarse.h) ** 2 * _linf_linf(ref.fine, u))
    return new_record("best-approx", coarse, "inf", "inf", value, choice, numerator=num, candidates=cands,
                      vacuous=vacuous)


def _safe_ratio(num, den, scale=0.0, rel=1e-12):
    """num/den, with both sides below rel * scale treated as an exact 0/0."""
    tiny = max(1e-300, rel * scale)
    if den <= tiny:
        return (0.0, True) if num <= tiny else (math.inf, False)
    return num / den, False


def corollary_error_bound_check(coarse: FeSpace, S_coarse: SemigroupOperator, ref: ReferenceTrajectory,
                                p, q, grid: TimeGrid | None = None) -> EstimateRecord:
    """||u_h - u|| / (c_{p,q} (||u - R_h u|| + ||P_h u(0) - u_h(0)||)), c = ell_h for (inf, inf)."""
    p, q = float(p), float(q)
    if (p, q) not in ((2.0, 2.0), (INF, INF)):
        raise InvalidArgument(f"corollary check supports (2, 2) and (inf, inf), got {(p, q)}")
    tr = Transfer(coarse, ref.fine)
    grid = default_time_grid(1.0) if grid is None else grid
    if np.isinf(p):
        times = np.concatenate([[0.0], grid.nodes, grid.edges[1:]])
    else:
        times = grid.nodes
    u = ref.at(times)
    uh0 = tr.l2(ref.u0)
    uh = S_coarse.evolve(uh0, times)
    lhs_t = np.asarray(lq_norms(ref.fine, u - tr.up(uh), q))
    ritz_t = np.asarray(lq_norms(ref.fine, u - tr.up(tr.ritz(u)), q))
    init = float(lq_norms(coarse, tr.l2(ref.u0) - uh0, q))

    def tnorm(v):
        return float(v.max()) if np.isinf(p) else float(np.sum(grid.weights * v**p) ** (1 / p))

    lhs = tnorm(lhs_t)
    rhs = tnorm(ritz_t) + init
    if np.isinf(p):
        rhs *= ell_h(coarse.h)
    value, vacuous = _safe_ratio(lhs, rhs, tnorm(np.asarray(lq_norms(ref.fine, u, q))))
    return new_record("corollary23", coarse, _fmt_exp(p), _fmt_exp(q), value, "vacuous" if vacuous else init,
                      lhs=lhs, rhs=rhs, initial_term=init, vacuous=vacuous)


# -- elliptic projections -----------------------------------------------------

def sample_points(space: FeSpace, order: int = 6) -> np.ndarray:
    """Barycentric lattice points of every triangle, used for sup norms of non-FE fields."""
    k = np.array([(i, j, order - i - j) for i in range(order + 1) for j in range(order + 1 - i)], dtype=float) / order
    p = space.mesh.points[space.mesh.triangles]
    return np.einsum("qk,tkd->tqd", k, p).reshape(-1, 2)


@dataclass(frozen=True)
class ProbeField:
    name: str
    u: object
    grad: object


def smooth_probe() -> ProbeField:
    s, c, pi = np.sin, np.cos, math.pi
    return ProbeField(
        "sinsin",
        lambda x, y: s(pi * x) * s(pi * y),
        lambda x, y: (pi * c(pi * x) * s(pi * y), pi * s(pi * x) * c(pi * y)),
    )


def corner_singular_probe() -> ProbeField:
    """r^{2/3} sin(2 theta / 3) (1 - x^2)(1 - y^2) with theta in [0, 3 pi / 2]."""

    def polar(x, y):
        r = np.hypot(x, y)
        th = np.mod(np.arctan2(y, x), 2 * math.pi)
        return r, th

    def u(x, y):
        r, th = polar(x, y)
        return r ** (2 / 3) * np.sin(2 * th / 3) * (1 - x**2) * (1 - y**2)

    def grad(x, y):
        r, th = polar(x, y)
        rs = np.where(r > 0, r, 1.0)
        s = r ** (2 / 3) * np.sin(2 * th / 3)
        # gradient of r^{2/3} sin(2 theta/3) in Cartesian form
        fr = (2 / 3) * rs ** (-1 / 3) * np.sin(2 * th / 3)
        ft = (2 / 3) * rs ** (-1 / 3) * np.cos(2 * th / 3)
        sx = fr * np.cos(th) - ft * np.sin(th)
        sy = fr * np.sin(th) + ft * np.cos(th)
        cut = (1 - x**2) * (1 - y**2)
        return sx * cut + s * (-2 * x) * (1 - y**2), sy * cut + s * (1 - x**2) * (-2 * y)

    return ProbeField("corner-singular", u, grad)


def default_projection_probes(space: FeSpace) -> list:
    probes = [smooth_probe()]
    if space.mesh.domain is LSHAPE:
        probes.append(corner_singular_probe())
    return probes


def projection_linf_stability(space: FeSpace, probes=None) -> list:
    """Two records: max ||u - P_h u||_inf / (ell_h ||u - I_h u||_inf), same for R_h."""
    probes = default_projection_probes(space) if probes is None else probes
    pts = sample_points(space)
    E = space.evaluation_matrix(pts)
    lh = ell_h(space.h)
    best = {"P_h": (0.0, ""), "R_h": (0.0, "")}
    for pr in probes:
        uval = pr.u(pts[:, 0], pts[:, 1])
        ref = np.max(np.abs(uval - E @ clement_interpolate(space, pr.u).coeffs))
        for name, proj in (("P_h", l2_project(space, pr.u)), ("R_h", ritz_project(space, pr.u, pr.grad))):
            err = np.max(np.abs(uval - E @ proj.coeffs))
            value, _ = _safe_ratio(err, lh * ref, lh * np.max(np.abs(uval)))
            if value >= best[name][0]:
                best[name] = (value, pr.name)
    return [new_record("projections", space, name, "inf", v, label) for name, (v, label) in best.items()]


# -- inverse discrete Laplacian -----------------------------------------------

def deltah_inverse_linf_ratio(space: FeSpace, probes) -> EstimateRecord:
    """max ||w_h||_inf / ||f_h||_inf with Delta_h w_h = f_h."""
    f = _check_probes(probes)
    w = -space.solver("stiffness")(space.mass @ f)
    ratios = np.asarray(lq_norms(space, w, INF)) / np.asarray(lq_norms(space, f, INF))
    k = int(np.argmax(ratios))
    return new_record("deltainv", space, "inf", "inf", ratios[k], k, ratios=ratios)


# -- level-to-level verdicts --------------------------------------------------

def growth_factors(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return v[1:] / v[:-1]


def stable_within(values, tol: float) -> bool:
    """No level-to-level increase by more than a factor 1 + tol."""
    return bool(np.all(growth_factors(values) <= 1.0 + tol))


def loglog_slope(h, values) -> float:
    return float(np.polyfit(np.log(np.asarray(h)), np.log(np.asarray(values)), 1)[0])


def verdict(h, values, threshold: float = 0.3) -> str:
    """BOUNDED, or GROWING(rate) when values grow like h^-rate with rate above the threshold."""
    if len(values) < 2 or not np.all(np.asarray(values) > 0):
        return "SKIPPED"
    rate = -loglog_slope(h, values)
    return f"GROWING({rate:.2f})" if rate > threshold else "BOUNDED"
