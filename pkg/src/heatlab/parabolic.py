"""Semi-discrete heat equation with zero initial data, integrated exactly per mode.

Each mode obeys a_i' + lambda_i a_i = f_i(t), a_i(0) = 0, whose Duhamel
integral has a closed form for every supported source profile, so
trajectories carry no time-discretization error.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgument
from .fem import FeSpace, lq_norms
from .quadrature import TimeGrid, default_time_grid
from .spectral import SpectralDecomposition

PROFILES = ("one", "exp", "cos", "square")


@dataclass(frozen=True)
class SourceTerm:
    """f(t, x) in one of three representations.

    separable  g(t) * w(x) with g from PROFILES and w given by FE coefficients
    piecewise  values[k] on [grid[k], grid[k+1]) (FE coefficients per interval)
    modal      g(t) * sum_i c_i v_i with c given in the eigenbasis
    """

    kind: str
    T: float = 1.0
    profile: str = "one"
    spatial: np.ndarray | None = None
    omega: float = 0.0
    flips: tuple = ()
    grid: np.ndarray | None = None
    values: np.ndarray | None = None
    label: str = ""

    def __post_init__(self):
        if self.kind not in ("separable", "piecewise", "modal"):
            raise InvalidArgument(f"unsupported source kind {self.kind!r}")
        if self.kind in ("separable", "modal") and self.profile not in PROFILES:
            raise InvalidArgument(f"unsupported time profile {self.profile!r}; expected one of {PROFILES}")
        if self.kind == "piecewise":
            g = np.asarray(self.grid, dtype=float)
            if g[0] != 0.0 or not np.isclose(g[-1], self.T, rtol=0, atol=1e-14) or np.any(np.diff(g) <= 0):
                raise InvalidArgument("piecewise-constant grid must increase from 0 to T")
            if len(self.values) != len(g) - 1:
                raise InvalidArgument("need one value vector per grid interval")

    @property
    def breakpoints(self) -> tuple:
        if self.kind == "piecewise":
            return tuple(np.asarray(self.grid)[1:-1])
        if self.profile == "square":
            return tuple(self.flips)
        return ()

    def scaled(self, a: float) -> "SourceTerm":
        kw = dict(self.__dict__)
        if self.kind == "piecewise":
            kw["values"] = a * np.asarray(self.values)
        else:
            kw["spatial"] = a * np.asarray(self.spatial)
        return SourceTerm(**kw)


def separable(spatial, profile="one", T=1.0, omega=0.0, flips=(), label="") -> SourceTerm:
    return SourceTerm("separable", T, profile, np.asarray(spatial, dtype=float), omega, tuple(flips), label=label)


def square_wave_flips(T=1.0, levels=6):
    """Sign flips at the dyadic times T 2^-k, k = 1..levels."""
    return tuple(sorted(T * 2.0 ** -np.arange(1, levels + 1)))


def _square_wave_pieces(T, flips):
    grid = np.concatenate([[0.0], np.sort(flips), [T]])
    vals = (-1.0) ** np.arange(len(grid) - 1)
    return grid, vals


def profile_values(src: SourceTerm, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    if src.profile == "one":
        return np.ones_like(t)
    if src.profile == "exp":
        return np.exp(-t)
    if src.profile == "cos":
        return np.cos(src.omega * t)
    grid, vals = _square_wave_pieces(src.T, src.flips)
    k = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, len(vals) - 1)
    return vals[k]


def duhamel_profile(src: SourceTerm, lam, times) -> np.ndarray:
    """psi(lam, t) = int_0^t exp(-lam (t-s)) g(s) ds, shape (len(lam), len(times))."""
    lam = np.asarray(lam, dtype=float)[:, None]
    t = np.asarray(times, dtype=float)[None, :]
    if src.profile == "one":
        return -np.expm1(-lam * t) / lam
    if src.profile == "exp":
        d = lam - 1.0
        small = np.abs(d) < 1e-12
        dd = np.where(small, 1.0, d)
        out = np.exp(-t) * (-np.expm1(-dd * t)) / dd
        return np.where(small, t * np.exp(-t), out)
    if src.profile == "cos":
        w = src.omega
        return (lam * np.cos(w * t) + w * np.sin(w * t) - lam * np.exp(-lam * t)) / (lam**2 + w**2)
    grid, vals = _square_wave_pieces(src.T, src.flips)
    return _piecewise_scalar(lam, t, grid, vals)


def _piece_integrals(lam, t, a, b):
    """int_a^{min(t,b)} exp(-lam (t-s)) ds for t > a, else 0."""
    m = np.minimum(t, b)
    active = t > a
    val = np.exp(-lam * (t - m)) * (-np.expm1(-lam * np.maximum(m - a, 0.0))) / lam
    return np.where(active, val, 0.0)


def _piecewise_scalar(lam, t, grid, vals):
    out = np.zeros(np.broadcast(lam, t).shape)
    for k, v in enumerate(vals):
        out += v * _piece_integrals(lam, t, grid[k], grid[k + 1])
    return out


def _piecewise_duhamel(lam, t, grid, modal_vals):
    """Sum over intervals of modal_vals[:, k] * integral; modal_vals (n, K)."""
    out = np.zeros(np.broadcast(lam, t).shape)
    for k in range(modal_vals.shape[1]):
        out += modal_vals[:, k : k + 1] * _piece_integrals(lam, t, grid[k], grid[k + 1])
    return out


def modal_source(src: SourceTerm, S: SpectralDecomposition, times) -> np.ndarray:
    """Modal coefficients of P_h f(t) at the given times, shape (n, nt)."""
    t = np.asarray(times, dtype=float)
    if src.kind == "piecewise":
        grid = np.asarray(src.grid, dtype=float)
        mv = S.modal(np.asarray(src.values, dtype=float).T)  # (n, K)
        k = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, mv.shape[1] - 1)
        return mv[:, k]
    c = np.asarray(src.spatial, dtype=float) if src.kind == "modal" else S.modal(src.spatial)
    return c[:, None] * profile_values(src, t)[None, :]


def modal_solution(src: SourceTerm, S: SpectralDecomposition, times) -> np.ndarray:
    """Modal coefficients a_i(t) of u_h, shape (n, nt)."""
    lam = S.eigenvalues
    t = np.asarray(times, dtype=float)
    if src.kind == "piecewise":
        grid = np.asarray(src.grid, dtype=float)
        mv = S.modal(np.asarray(src.values, dtype=float).T)
        return _piecewise_duhamel(lam[:, None], t[None, :], grid, mv)
    c = np.asarray(src.spatial, dtype=float) if src.kind == "modal" else S.modal(src.spatial)
    return c[:, None] * duhamel_profile(src, lam, t)


@dataclass
class TrajectorySample:
    """u_h, d_t u_h, Delta_h u_h and P_h f as coefficient arrays (n, nt)."""

    space: FeSpace
    times: np.ndarray
    u: np.ndarray
    dtu: np.ndarray
    lap_u: np.ndarray
    source: np.ndarray
    modal_u: np.ndarray = field(repr=False, default=None)

    def residuals(self) -> np.ndarray:
        """||d_t u - Delta_h u - P_h f||_{L2} / ||P_h f||_{L2} per time."""
        M = self.space.mass
        r = self.dtu - self.lap_u - self.source
        num = np.sqrt(np.einsum("it,it->t", r, M @ r))
        den = np.sqrt(np.einsum("it,it->t", self.source, M @ self.source))
        return num / np.where(den > 0, den, 1.0)


def solve_semidiscrete(space: FeSpace, S: SpectralDecomposition, f: SourceTerm, times,
                       fields=("u", "dtu", "lap_u", "source")) -> TrajectorySample:
    """Exact trajectory at the given times; fields not listed in ``fields`` are left as None."""
    times = np.asarray(times, dtype=float)
    if np.any(times < 0) or np.any(times > f.T * (1 + 1e-14)):
        raise InvalidArgument("output times must lie in [0, T]")
    a = modal_solution(f, S, times)
    fm = modal_source(f, S, times)
    lam = S.eigenvalues[:, None]
    V = S.eigenvectors
    lap = -lam * a
    modal = {"u": a, "dtu": lap + fm, "lap_u": lap, "source": fm}
    out = {k: (V @ m if k in fields else None) for k, m in modal.items()}
    return TrajectorySample(space=space, times=times, modal_u=a, **out)


def time_grid_for(f: SourceTerm, **kw) -> TimeGrid:
    return default_time_grid(f.T, breakpoints=f.breakpoints, **kw)


def bochner_norm(space: FeSpace, field_coeffs, grid: TimeGrid, p, q) -> float:
    """||F||_{L^p(0,T; L^q)} for coefficient snapshots F[:, k] at grid.nodes[k]."""
    p, q = float(p), float(q)
    if not (p >= 1 and q >= 1):
        raise InvalidArgument(f"exponents must lie in [1, inf], got p={p}, q={q}")
    spatial = np.asarray(lq_norms(space, field_coeffs, q))
    return time_norm(spatial, grid, p)


def time_norm(values, grid: TimeGrid, p) -> float:
    values = np.asarray(values, dtype=float)
    if np.isinf(p):
        return float(values.max())
    return float(np.sum(grid.weights * values**p) ** (1.0 / p))


def modal_l2l2_norm_squared(src: SourceTerm, S: SpectralDecomposition, T=None) -> np.ndarray:
    """int_0^T a_i(t)^2 dt per mode for a time-constant separable/modal source.

    Closed form used as an independent check of the time quadrature.
    """
    if src.kind == "piecewise" or src.profile != "one":
        raise InvalidArgument("closed form available only for time-constant sources")
    T = src.T if T is None else T
    lam = S.eigenvalues
    c = np.asarray(src.spatial) if src.kind == "modal" else S.modal(src.spatial)
    integral = (T + 2.0 * np.expm1(-lam * T) / lam - np.expm1(-2.0 * lam * T) / (2.0 * lam)) / lam**2
    return c**2 * integral
