import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from heatlab.errors import InvalidArgument
from heatlab.parabolic import (
    SourceTerm,
    bochner_norm,
    modal_l2l2_norm_squared,
    separable,
    solve_semidiscrete,
    square_wave_flips,
    time_grid_for,
)
from heatlab.quadrature import default_time_grid


def test_constant_eigenmode_source(square3):
    space, S = square3
    D = S.S
    lam = D.lambda_1
    t = np.linspace(0, 1, 11)
    tr = solve_semidiscrete(space, D, separable(D.eigenvectors[:, 0]), t)
    assert np.allclose(tr.modal_u[0], (1 - np.exp(-lam * t)) / lam, atol=1e-12, rtol=0)
    assert np.abs(tr.modal_u[1:]).max() <= 1e-12


def test_zero_source(square3):
    space, S = square3
    tr = solve_semidiscrete(space, S.S, separable(np.zeros(space.dim)), [0.0, 0.5, 1.0])
    assert not np.any(tr.u)


def test_exponential_profile_against_ode(square3):
    space, S = square3
    lam = S.S.lambda_1
    tr = solve_semidiscrete(space, S.S, separable(S.S.eigenvectors[:, 0], "exp"), [0.5])
    sol = solve_ivp(lambda t, a: -lam * a + math.exp(-t), (0, 0.5), [0.0], rtol=1e-12, atol=1e-14)
    assert tr.modal_u[0, 0] == pytest.approx(sol.y[0, -1], abs=1e-9)
    assert tr.modal_u[0, 0] == pytest.approx((math.exp(-0.5) - math.exp(-lam * 0.5)) / (lam - 1), abs=1e-12)


@pytest.mark.parametrize("profile,kw", [("one", {}), ("cos", {"omega": 20.0}), ("square", {"flips": square_wave_flips()})])
def test_residuals(lshape3, rng, profile, kw):
    space, S = lshape3
    f = separable(rng.standard_normal(space.dim), profile, **kw)
    grid = time_grid_for(f)
    tr = solve_semidiscrete(space, S.S, f, grid.nodes)
    assert tr.residuals().max() <= 1e-8


def test_piecewise_source_matches_ode(square3, rng):
    space, S = square3
    grid = np.array([0.0, 0.25, 0.6, 1.0])
    vals = rng.standard_normal((3, space.dim))
    f = SourceTerm("piecewise", grid=grid, values=vals)
    tr = solve_semidiscrete(space, S.S, f, [0.8])
    lam = S.S.eigenvalues[:3]
    mv = S.S.modal(vals.T)[:3]

    def rhs(t, a):
        k = min(np.searchsorted(grid, t, side="right") - 1, 2)
        return -lam * a + mv[:, k]

    sol = solve_ivp(rhs, (0, 0.8), np.zeros(3), rtol=1e-11, atol=1e-13, max_step=0.01)
    assert np.allclose(tr.modal_u[:3, 0], sol.y[:, -1], atol=1e-8)


def test_invalid_inputs(square3):
    space, S = square3
    with pytest.raises(InvalidArgument):
        SourceTerm("chirp")
    with pytest.raises(InvalidArgument):
        separable(np.ones(space.dim), "sawtooth")
    with pytest.raises(InvalidArgument):
        SourceTerm("piecewise", grid=np.array([0.0, 0.5]), values=np.zeros((1, space.dim)))
    with pytest.raises(InvalidArgument):
        solve_semidiscrete(space, S.S, separable(np.ones(space.dim)), [1.5])
    with pytest.raises(InvalidArgument):
        bochner_norm(space, np.ones((space.dim, 2)), default_time_grid(), 0.5, 2)


def test_bochner_constant_field(square3):
    space, _ = square3
    c = np.ones(space.dim)
    grid = default_time_grid(1.0)
    F = np.repeat(c[:, None], len(grid), axis=1)
    from heatlab.fem import lq_norms

    for p, q in [(1, 2), (2, 2), (4, 1), (np.inf, 4)]:
        assert bochner_norm(space, F, grid, p, q) == pytest.approx(float(lq_norms(space, c, q)), rel=1e-12)


def test_bochner_l2_matches_modal(lshape3, rng):
    space, S = lshape3
    f = separable(rng.standard_normal(space.dim))
    grid = time_grid_for(f)
    tr = solve_semidiscrete(space, S.S, f, grid.nodes)
    exact = math.sqrt(modal_l2l2_norm_squared(f, S.S).sum())
    assert bochner_norm(space, tr.u, grid, 2, 2) == pytest.approx(exact, rel=1e-8)
    fine = time_grid_for(f, panels=128)
    tr2 = solve_semidiscrete(space, S.S, f, fine.nodes)
    a, b = bochner_norm(space, tr.u, grid, 4, 4), bochner_norm(space, tr2.u, fine, 4, 4)
    assert abs(a - b) / b < 1e-6


@pytest.mark.parametrize("profile", ["one", "cos", "square"])
def test_energy_identity_and_l2_regularity(square3, rng, profile):
    space, S = square3
    f = separable(rng.standard_normal(space.dim), profile, omega=20.0, flips=square_wave_flips())
    grid = time_grid_for(f)
    tr = solve_semidiscrete(space, S.S, f, np.append(grid.nodes, 1.0))
    M, K = space.mass, space.stiffness
    u, src = tr.u[:, :-1], tr.source[:, :-1]
    lhs = 0.5 * tr.u[:, -1] @ (M @ tr.u[:, -1]) + np.sum(grid.weights * np.einsum("it,it->t", u, K @ u))
    rhs = np.sum(grid.weights * np.einsum("it,it->t", src, M @ u))
    assert lhs == pytest.approx(rhs, rel=1e-7)
    sq = lambda F: bochner_norm(space, F[:, :-1], grid, 2, 2) ** 2
    assert sq(tr.dtu) + sq(tr.lap_u) <= sq(tr.source) * (1 + 1e-7)
