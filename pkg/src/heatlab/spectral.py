"""Eigendecomposition of the discrete Dirichlet Laplacian and the calculus built on it.

With M-orthonormal eigenpairs K v_i = lambda_i M v_i, the discrete
Laplacian Delta_h = -M^{-1} K acts diagonally, so the semigroup, its time
derivatives, the resolvent and fractional powers are evaluated exactly
mode by mode.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InvalidArgument, InvalidInput, ProblemTooLarge
from .fem import FeFunction, FeSpace

DEFAULT_DOF_CAP = 5000


@dataclass(frozen=True, eq=False)
class SpectralDecomposition:
    eigenvalues: np.ndarray  # ascending, positive
    eigenvectors: np.ndarray  # columns, M-orthonormal
    mass: object = None  # sparse M on the free dofs, used for modal coefficients

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    @property
    def lambda_1(self) -> float:
        return float(self.eigenvalues[0])

    def modal(self, coeffs) -> np.ndarray:
        """Modal coefficients a_i = (v, v_i)_M of one or many coefficient vectors."""
        return self.eigenvectors.T @ (self.mass @ np.asarray(coeffs))

    def synthesize(self, modal) -> np.ndarray:
        return self.eigenvectors @ modal

    def residuals(self, K) -> np.ndarray:
        """Relative eigen-residuals max|K v - lambda M v| / (lambda max|v|)."""
        V, lam = self.eigenvectors, self.eigenvalues
        R = K @ V - (self.mass @ V) * lam[None, :]
        return np.abs(R).max(axis=0) / (lam * np.abs(V).max(axis=0))


def decompose(M, K, cap: int = DEFAULT_DOF_CAP) -> SpectralDecomposition:
    """Full generalized eigendecomposition of the pencil (K, M)."""
    n = M.shape[0]
    if K.shape != M.shape:
        raise InvalidArgument(f"matrix shapes differ: {M.shape} vs {K.shape}")
    if n > cap:
        raise ProblemTooLarge(f"{n} interior dofs exceeds the dense eigensolver cap {cap}; coarsen the mesh")
    Md = M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=float)
    Kd = K.toarray() if hasattr(K, "toarray") else np.asarray(K, dtype=float)
    try:
        # LAPACK reduces to standard form through the Cholesky factor of M
        lam, V = sla.eigh(Kd, Md, driver="gvd")
    except np.linalg.LinAlgError as exc:
        raise InvalidInput(f"mass matrix is not symmetric positive definite: {exc}") from exc
    if lam[0] <= 0:
        raise InvalidInput("stiffness matrix is not positive definite on the free dofs")
    return SpectralDecomposition(lam, V, M)


def decompose_space(space: FeSpace, cap: int = DEFAULT_DOF_CAP) -> SpectralDecomposition:
    return decompose(space.mass, space.stiffness, cap=cap)


class SemigroupOperator:
    """E_h(t) = exp(t Delta_h) and friends, evaluated in the eigenbasis."""

    def __init__(self, decomposition: SpectralDecomposition, space: FeSpace | None = None):
        self.S = decomposition
        self.space = space
        self._factors = {}

    @property
    def eigenvalues(self):
        return self.S.eigenvalues

    def factors(self, t: float) -> np.ndarray:
        f = self._factors.get(t)
        if f is None:
            f = self._factors[t] = np.exp(-self.S.eigenvalues * t)
        return f

    def evolve_modal(self, modal, times, derivative: int = 0) -> np.ndarray:
        """(d/dt)^k E_h(t) applied in modal form; returns (n, len(times))."""
        lam = self.S.eigenvalues[:, None]
        times = np.asarray(times, dtype=float)[None, :]
        out = np.exp(-lam * times) * np.asarray(modal)[:, None]
        if derivative:
            out = out * (-lam) ** derivative
        return out

    def evolve(self, coeffs, times, derivative: int = 0) -> np.ndarray:
        return self.S.synthesize(self.evolve_modal(self.S.modal(coeffs), times, derivative))

    def _wrap(self, v, coeffs):
        return FeFunction(v.space, coeffs) if isinstance(v, FeFunction) else coeffs


def _coeffs(v):
    return v.coeffs if isinstance(v, FeFunction) else np.asarray(v, dtype=float)


def apply_semigroup(S: SemigroupOperator, t: float, v):
    if t < 0:
        raise InvalidArgument(f"time must be non-negative, got {t}")
    if t == 0:
        return S._wrap(v, _coeffs(v).copy())
    c = S.S.synthesize(S.factors(t) * S.S.modal(_coeffs(v)))
    return S._wrap(v, c)


def apply_time_derivative(S: SemigroupOperator, t: float, v):
    """d/dt E_h(t) v = Delta_h E_h(t) v."""
    if t <= 0:
        raise InvalidArgument(f"time must be positive, got {t}")
    c = S.S.synthesize(-S.S.eigenvalues * S.factors(t) * S.S.modal(_coeffs(v)))
    return S._wrap(v, c)


def resolvent_factors(S: SemigroupOperator, z: complex) -> np.ndarray:
    if z == 0:
        raise InvalidArgument("resolvent parameter z must be nonzero")
    lam = S.S.eigenvalues
    if np.any(z + lam == 0):
        raise InvalidArgument(f"z = {z} lies in the spectrum of Delta_h")
    return z / (z + lam)


def apply_resolvent(S: SemigroupOperator, z: complex, v) -> np.ndarray:
    """Coefficients of z (z - Delta_h)^{-1} v (complex)."""
    fac = resolvent_factors(S, complex(z))
    return S.S.eigenvectors @ (fac * S.S.modal(_coeffs(v)))


def resolvent_l2_norm(S: SemigroupOperator, z: complex) -> float:
    return float(np.abs(resolvent_factors(S, complex(z))).max())


def fractional_seminorm(S: SemigroupOperator, s: float, v) -> float:
    """||(-Delta_h)^{s/2} v||_{L2} for s in [0, 2]."""
    if not 0.0 <= s <= 2.0:
        raise InvalidArgument(f"exponent s must lie in [0, 2], got {s}")
    a = S.S.modal(_coeffs(v))
    return float(np.sqrt(np.sum(S.S.eigenvalues**s * a * a)))


# -- binary cache -------------------------------------------------------------

MAGIC = b"SPECDEC1"


def cache_key(domain: str, level: int, r: int) -> str:
    return hashlib.sha256(f"{domain}|{level}|{r}".encode()).hexdigest()[:16]


def save_decomposition(path, S: SpectralDecomposition) -> None:
    n = S.n
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<q", n))
        fh.write(np.ascontiguousarray(S.eigenvalues, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(S.eigenvectors.T, dtype="<f8").tobytes())


def load_decomposition(path, mass=None) -> SpectralDecomposition:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise InvalidInput(f"{path} is not a SPECDEC1 file")
        (n,) = struct.unpack("<q", fh.read(8))
        lam = np.frombuffer(fh.read(8 * n), dtype="<f8").astype(float)
        V = np.frombuffer(fh.read(8 * n * n), dtype="<f8").astype(float).reshape(n, n).T
    return SpectralDecomposition(lam, np.ascontiguousarray(V), mass)
