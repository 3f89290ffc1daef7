import numpy as np

from heatlab.reference import rational_krylov_decomposition
from heatlab.spectral import SemigroupOperator, apply_semigroup

from conftest import make_space


def test_krylov_matches_dense(lshape3):
    space, S = lshape3
    x = space.dofs[space.interior_dofs]
    v = np.exp(-20 * ((x[:, 0] + 0.3) ** 2 + (x[:, 1] - 0.2) ** 2))
    R = SemigroupOperator(rational_krylov_decomposition(space, v), space)
    for t in (1e-4, 1e-2, 0.3, 1.0):
        a = apply_semigroup(S, t, v)
        b = apply_semigroup(R, t, v)
        assert np.abs(a - b).max() <= 1e-6 * np.abs(v).max()


def test_krylov_ritz_values_bound_spectrum():
    space = make_space("square", 3)
    v = np.ones(space.dim)
    D = rational_krylov_decomposition(space, v)
    from heatlab.spectral import decompose_space

    lam = decompose_space(space).eigenvalues
    # Ritz values lie inside the spectral interval
    assert D.eigenvalues.min() >= lam[0] * (1 - 1e-10)
    assert D.eigenvalues.max() <= lam[-1] * (1 + 1e-10)
    V = D.eigenvectors
    assert np.abs(V.T @ (space.mass @ V) - np.eye(D.n)).max() < 1e-9
