"""Reduced evolution on meshes too large for a dense eigensolve.

The semigroup applied to a few fixed vectors is approximated by Galerkin
projection onto a rational Krylov space

    span{w, A w, A^2 w} + span{(I + g A)^{-j} w : g in poles, j <= depth},

with A = M^{-1} K and real poles spread logarithmically over the time
scales of interest.  The projected pencil is diagonalized exactly, which
gives M-orthonormal Ritz pairs with the same interface as a full
:class:`~heatlab.spectral.SpectralDecomposition`, so the modal calculus of
:mod:`heatlab.spectral` applies unchanged.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .fem import FeSpace
from .spectral import SpectralDecomposition


def default_poles(space: FeSpace, per_decade: int = 3) -> np.ndarray:
    """Shift parameters covering times from ~1/lambda_max up to O(1)."""
    lam_max_est = 48.0 * space.degree**2 / space.h**2
    lo = np.floor(np.log10(0.1 / lam_max_est))
    return np.logspace(lo, 0.5, int((0.5 - lo) * per_decade) + 1)


def _orthonormalize(M, blocks, drop_tol=1e-10):
    """M-orthonormal basis of the span of the given columns (CGS, twice)."""
    basis = []
    Mbasis = []
    for x in blocks:
        x = np.array(x, dtype=float)
        nrm0 = np.sqrt(x @ (M @ x))
        if nrm0 == 0:
            continue
        x /= nrm0
        for _ in range(2):
            if basis:
                Q = np.column_stack(basis)
                MQ = np.column_stack(Mbasis)
                x -= Q @ (MQ.T @ x)
        nrm = np.sqrt(x @ (M @ x))
        if nrm < drop_tol:
            continue
        x /= nrm
        basis.append(x)
        Mbasis.append(M @ x)
    return np.column_stack(basis)


def rational_krylov_decomposition(space: FeSpace, vectors, poles=None, depth: int = 3) -> SpectralDecomposition:
    """Ritz pairs of (K, M) on a rational Krylov space generated by ``vectors``."""
    M, K = space.mass, space.stiffness
    vectors = np.atleast_2d(np.asarray(vectors, dtype=float).T).T  # (n, m)
    poles = default_poles(space) if poles is None else np.asarray(poles, dtype=float)
    msolve = space.solver("mass")
    blocks = []
    for w in vectors.T:
        blocks.append(w)
        x = w
        for _ in range(2):
            x = msolve(K @ x)
            blocks.append(x)
    Mc = M.tocsc()
    Kc = K.tocsc()
    for g in poles:
        lu = spla.splu((Mc + g * Kc).tocsc())
        for w in vectors.T:
            x = w
            for _ in range(depth):
                x = lu.solve(M @ x)
                blocks.append(x)
    V = _orthonormalize(M, blocks)
    T = V.T @ (K @ V)
    T = 0.5 * (T + T.T)
    mu, U = sla.eigh(T)
    return SpectralDecomposition(mu, V @ U, M)
