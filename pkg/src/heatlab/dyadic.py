"""Dyadic space-time annuli around a point and the local norms measured on them.

With rho(t, x) = max(|x - x0|, sqrt(t)) and d_j = 2^-j the cylinder
(0, 1) x Omega splits into

    Q_j = {d_j <= rho <= 2 d_j}     1 <= j <= J*
    Q_* = {rho < d_J*}
    Q_0 = everything else (rho > 1),

points on a common boundary going to the smaller j.  Norms are accumulated
per annulus in a single sweep over the fine quadrature and a dyadically
graded time grid whose panel edges fall on the annulus boundaries t = d_j^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DecompositionUnavailable, IncompleteReport, InvalidArgument
from .fem import FeSpace
from .quadrature import TimeGrid, dyadic_time_grid

STAR = "star"


@dataclass(frozen=True)
class DyadicDecomposition:
    x0: np.ndarray
    C_star: float
    h: float
    J_star: int

    def d(self, j) -> float:
        return 2.0 ** -np.asarray(j, dtype=float)

    @property
    def d_star(self) -> float:
        return 2.0**-self.J_star

    @property
    def n_bins(self) -> int:
        # bins 0..J*, then [d_{J*+1}, d_{J*}) and everything closer
        return self.J_star + 3

    def metric(self, t, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        r = np.linalg.norm(x - self.x0, axis=-1)
        return np.maximum(r, np.sqrt(np.asarray(t, dtype=float)))

    def bins_of(self, rho) -> np.ndarray:
        """Raw dyadic bin of each metric value (see :attr:`n_bins`)."""
        rho = np.asarray(rho, dtype=float)
        _, e = np.frexp(rho)
        raw = 1 - e
        raw = np.where(rho <= 1.0, np.maximum(raw, 1), 0)
        raw = np.where(rho == 0.0, self.J_star + 2, raw)
        return np.minimum(raw, self.J_star + 2)

    def classify(self, t, x) -> np.ndarray:
        """Region label per point: 0..J* for Q_j, -1 for the innermost set."""
        b = self.bins_of(self.metric(t, x))
        return np.where(b > self.J_star, -1, b)

    def region_bins(self, region) -> list:
        """Bins making up a region: j, STAR, or ('prime', j) for Q_{j-1} u Q_j u Q_{j+1}."""
        if isinstance(region, str) and region == STAR:
            return [self.J_star + 1, self.J_star + 2]
        if isinstance(region, tuple) and region[0] == "prime":
            j = self._check_j(region[1])
            return [k for k in (j - 1, j, j + 1) if 0 <= k <= self.J_star + 1]
        return [self._check_j(region)]

    def _check_j(self, j) -> int:
        if not (isinstance(j, (int, np.integer)) and 0 <= j <= self.J_star):
            raise InvalidArgument(f"annulus index {j} outside 0..{self.J_star}")
        return int(j)


def dyadic_level(C_star: float, h: float) -> int:
    """Largest J with 2^-J >= C_star h."""
    x = math.log2(1.0 / (C_star * h))
    J = math.floor(x)
    if x - J > 1 - 1e-12:
        J += 1
    return J


def build_decomposition(x0, C_star: float = 16.0, h: float = 1.0) -> DyadicDecomposition:
    if C_star < 16:
        raise InvalidArgument(f"C_star must be at least 16, got {C_star}")
    if not h < 1.0 / (4.0 * C_star):
        raise DecompositionUnavailable(
            f"mesh too coarse for the dyadic decomposition: h = {h:.4g} but h < 1/(4 C_star) = {1 / (4 * C_star):.4g} is required"
        )
    return DyadicDecomposition(np.asarray(x0, dtype=float), float(C_star), float(h), dyadic_level(C_star, h))


# -- streamed accumulation ------------------------------------------------------

Trajectory = Callable[[np.ndarray, int], np.ndarray]
"""(times, derivative) -> coefficient snapshots of shape (n, len(times))."""


@dataclass
class BinnedField:
    """Per-bin sums of w |F|^2 and w |grad F|^2 over space-time quadrature points."""

    decomposition: DyadicDecomposition
    values: np.ndarray
    gradients: np.ndarray
    counts: np.ndarray


@dataclass(frozen=True)
class LocalNorm:
    value: float
    empty: bool

    def __float__(self):
        return self.value


def bin_field(space: FeSpace, traj: Trajectory, dec: DyadicDecomposition, grid: TimeGrid | None = None,
              derivative: int = 0, batch: int = 16) -> BinnedField:
    grid = dyadic_time_grid() if grid is None else grid
    qp, qw = space.quad_points, space.quad_weights
    r = np.linalg.norm(qp - dec.x0, axis=-1)  # (T, nq)
    nb = dec.n_bins
    vals = np.zeros(nb)
    grads = np.zeros(nb)
    counts = np.zeros(nb, dtype=np.int64)
    t = grid.nodes
    for s in range(0, len(t), batch):
        tb = t[s : s + batch]
        c = traj(tb, derivative)
        v = space.values_at_quad(c)  # (T, nq, m)
        g = space.gradients_at_quad(c)  # (T, nq, 2, m)
        g2 = np.sum(g * g, axis=2)
        for k, tk in enumerate(tb):
            b = dec.bins_of(np.maximum(r, math.sqrt(tk))).ravel()
            w = (grid.weights[s + k] * qw).ravel()
            vals += np.bincount(b, weights=w * v[..., k].ravel() ** 2, minlength=nb)
            grads += np.bincount(b, weights=w * g2[..., k].ravel(), minlength=nb)
            counts += np.bincount(b, minlength=nb)
    return BinnedField(dec, vals, grads, counts)


def bin_snapshot(space: FeSpace, coeffs, dec: DyadicDecomposition) -> BinnedField:
    """Spatial bins of a single function; the spatial sets Omega_j use the t = 0 classification."""
    c = np.asarray(coeffs)[:, None]
    grid = TimeGrid(np.array([0.0]), np.array([1.0]), np.array([0.0, 1.0]))
    return bin_field(space, lambda t, k: c, dec, grid)


def local_space_time_norm(field: BinnedField, region, order: int = 0) -> LocalNorm:
    """|||F|||_{k, region} from accumulated sums; empty regions give 0 with the flag set."""
    if order not in (0, 1):
        raise InvalidArgument(f"order must be 0 or 1, got {order}")
    bins = field.decomposition.region_bins(region)
    s = field.values[bins].sum()
    if order == 1:
        s += field.gradients[bins].sum()
    empty = int(field.counts[bins].sum()) == 0
    return LocalNorm(float(np.sqrt(s)), empty)


# -- the weighted sum K -----------------------------------------------------------

NORM_KEYS = ("F_1", "dtF", "dtF_1", "dttF")


@dataclass
class LocalNormReport:
    """Per-annulus norms |||F|||_{1,Q_j}, |||d_t F|||_{Q_j}, |||d_t F|||_{1,Q_j}, |||d_tt F|||_{Q_j}."""

    J_star: int
    F: np.ndarray
    F_1: np.ndarray
    dtF: np.ndarray
    dtF_1: np.ndarray
    dttF: np.ndarray
    K: float
    N: int = 2
    meta: dict = field(default_factory=dict)

    def terms(self) -> np.ndarray:
        d = 2.0 ** -np.arange(self.J_star + 1, dtype=float)
        return d ** (1 + self.N / 2) * (self.F_1 / d + self.dtF + d * self.dtF_1 + d**2 * self.dttF)

    def recompute_K(self) -> float:
        return float(np.sum(self.terms()))


def weighted_sum_K(entries: dict, J_star: int, N: int = 2) -> LocalNormReport:
    """Assemble K from per-j entries {j: {'F', 'F_1', 'dtF', 'dtF_1', 'dttF'}}."""
    missing = [j for j in range(J_star + 1) if j not in entries]
    if missing:
        raise IncompleteReport(f"missing annuli {missing} for J* = {J_star}")
    rows = range(J_star + 1)
    cols = {"F": np.array([float(entries[j].get("F", 0.0)) for j in rows])}
    for key in NORM_KEYS:
        cols[key] = np.array([float(_need(entries[j], key, j)) for j in rows])
    rep = LocalNormReport(J_star, cols["F"], cols["F_1"], cols["dtF"], cols["dtF_1"], cols["dttF"], 0.0, N)
    rep.K = rep.recompute_K()
    return rep


def _need(entry, key, j):
    if key not in entry:
        raise IncompleteReport(f"annulus {j} lacks {key}")
    return entry[key]


def local_norm_report(space: FeSpace, traj: Trajectory, dec: DyadicDecomposition,
                      grid: TimeGrid | None = None) -> LocalNormReport:
    """K for the field described by ``traj`` (time derivatives taken spectrally by the trajectory)."""
    b0 = bin_field(space, traj, dec, grid, 0)
    b1 = bin_field(space, traj, dec, grid, 1)
    b2 = bin_field(space, traj, dec, grid, 2)
    entries = {}
    for j in range(dec.J_star + 1):
        entries[j] = {
            "F": local_space_time_norm(b0, j, 0).value,
            "F_1": local_space_time_norm(b0, j, 1).value,
            "dtF": local_space_time_norm(b1, j, 0).value,
            "dtF_1": local_space_time_norm(b1, j, 1).value,
            "dttF": local_space_time_norm(b2, j, 0).value,
        }
    rep = weighted_sum_K(entries, dec.J_star)
    rep.meta["d_star"] = dec.d_star
    return rep


# -- local energy inequality -----------------------------------------------------

@dataclass
class LocalEnergyRecord:
    j: int
    epsilon: float
    lhs: float
    rhs: float
    rhs_terms: dict

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs


def local_energy_check(space: FeSpace, phi: Trajectory, phi_h: Trajectory, interp: Trajectory,
                       dec: DyadicDecomposition, j: int, epsilon: float, h: float,
                       grid: TimeGrid | None = None) -> LocalEnergyRecord:
    """Both sides of the local energy error inequality with unit constant.

    ``phi`` is the reference solution, ``phi_h`` the coarse solution and
    ``interp`` the quasi-interpolant I_h phi, all expressed on ``space``.
    """
    dec._check_j(j)
    if not 0.0 < epsilon < 1.0:
        raise InvalidArgument(f"epsilon must lie in (0, 1), got {epsilon}")
    d = 2.0**-j
    err = lambda t, k: phi(t, k) - phi_h(t, k)
    eta = lambda t, k: interp(t, k) - phi(t, k)
    e0 = bin_field(space, err, dec, grid, 0)
    e1 = bin_field(space, err, dec, grid, 1)
    n0 = bin_field(space, eta, dec, grid, 0)
    n1 = bin_field(space, eta, dec, grid, 1)
    init = bin_snapshot(space, phi_h(np.array([0.0]), 0)[:, 0], dec)
    P = ("prime", j)
    N = lambda f, reg, k: local_space_time_norm(f, reg, k).value

    lhs = N(e1, j, 0) + N(e0, j, 1) / d
    I_j = N(init, P, 1) + N(init, P, 0) / d
    X_j = d * N(n1, P, 1) + N(n1, P, 0) + N(n0, P, 1) / d + N(n0, P, 0) / d**2
    l2 = N(e0, P, 0) / d**2
    window = N(e1, P, 0) + N(e0, P, 1) / d
    coupling = math.sqrt(h / d) + h / (epsilon * d) + epsilon
    rhs = epsilon**-3 * (I_j + X_j + l2) + coupling * window
    terms = {"I_j": I_j, "X_j": X_j, "l2_window": l2, "coupling": coupling, "energy_window": window}
    return LocalEnergyRecord(j, epsilon, lhs, rhs, terms)
