"""Quadrature rules on the reference triangle and on time intervals."""
from __future__ import annotations

from dataclasses import dataclass
from math import sqrt

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points with weights normalized to sum to one."""

    points: np.ndarray  # (nq, 3)
    weights: np.ndarray  # (nq,)
    degree: int

    @property
    def size(self) -> int:
        return len(self.weights)


def _orbit3(a, b):
    return [(a, b, b), (b, a, b), (b, b, a)]


def _orbit6(a, b, c):
    return [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]


def _rule(groups, degree):
    pts, wts = [], []
    for w, orbit in groups:
        pts.extend(orbit)
        wts.extend([w] * len(orbit))
    return QuadratureRule(np.array(pts, dtype=float), np.array(wts, dtype=float), degree)


def _degree5():
    s15 = sqrt(15.0)
    a1 = (6.0 - s15) / 21.0
    a2 = (6.0 + s15) / 21.0
    return _rule(
        [
            (9.0 / 40.0, [(1 / 3, 1 / 3, 1 / 3)]),
            ((155.0 - s15) / 1200.0, _orbit3(1 - 2 * a1, a1)),
            ((155.0 + s15) / 1200.0, _orbit3(1 - 2 * a2, a2)),
        ],
        5,
    )


def _degree6():
    # Dunavant's 12-point rule, polished to double precision by Newton on
    # the moment equations (see tests for the exactness check).
    return _rule(
        [
            (0.1167862757263834, _orbit3(0.5014265096581829, 0.2492867451709085)),
            (0.05084490637020737, _orbit3(0.8738219710169945, 0.06308901449150273)),
            (0.08285107561837128, _orbit6(0.05314504984481522, 0.3103524510337855, 0.6365024991213993)),
        ],
        6,
    )


def _degree2():
    return _rule([(1.0 / 3.0, _orbit3(2.0 / 3.0, 1.0 / 6.0))], 2)


TRIANGLE_RULES = {2: _degree2(), 5: _degree5(), 6: _degree6()}


def triangle_rule(degree: int) -> QuadratureRule:
    """Smallest stored rule that is exact to at least ``degree``."""
    for d in sorted(TRIANGLE_RULES):
        if d >= degree:
            return TRIANGLE_RULES[d]
    raise ValueError(f"no triangle rule of degree {degree}")


@dataclass(frozen=True)
class TimeGrid:
    """Composite Gauss-Legendre nodes on [0, T]."""

    nodes: np.ndarray
    weights: np.ndarray
    edges: np.ndarray

    @property
    def T(self) -> float:
        return float(self.edges[-1])

    def __len__(self):
        return len(self.nodes)


def gauss_legendre_panels(edges, order: int = 4) -> TimeGrid:
    edges = np.unique(np.asarray(edges, dtype=float))
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * x[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return TimeGrid(nodes.ravel(), weights.ravel(), edges)


def graded_edges(T: float = 1.0, panels: int = 64, breakpoints=(), grading: int = 24) -> np.ndarray:
    """Uniform panel edges on [0, T], refined geometrically after each breakpoint.

    Solutions of the semi-discrete problem develop layers of width ~1/lambda
    right after t=0 and after every jump of the source, so each such point
    gets ``grading`` extra edges at distances 2^-k of the next uniform panel.
    """
    base = np.linspace(0.0, T, panels + 1)
    starts = sorted({0.0, *[float(b) for b in breakpoints if 0.0 <= b < T]})
    extra = []
    for s in starts:
        nxt = base[base > s + 1e-15 * T]
        width = (nxt[0] if len(nxt) else T) - s
        extra.extend(s + width * 2.0 ** -np.arange(1, grading + 1))
        extra.append(s)
    return np.unique(np.concatenate([base, np.asarray(extra, dtype=float)]))


def default_time_grid(T: float = 1.0, breakpoints=(), panels: int = 64, order: int = 4, grading: int = 24) -> TimeGrid:
    return gauss_legendre_panels(graded_edges(T, panels, breakpoints, grading), order)


def dyadic_time_grid(levels: int = 30, order: int = 6, T: float = 1.0) -> TimeGrid:
    """Panels [2^-k-1, 2^-k] T for k < levels plus [0, 2^-levels T]."""
    edges = np.concatenate([[0.0], T * 2.0 ** -np.arange(levels, -1, -1)])
    return gauss_legendre_panels(edges, order)
