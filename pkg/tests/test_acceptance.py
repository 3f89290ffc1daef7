"""Acceptance criteria 1-10.

Run with ``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per
criterion is printed in the terminal summary (or run this file directly).
"""
import math
import sys
import time

import numpy as np
import pytest

from heatlab.config import RunConfig
from heatlab.estimators import loglog_slope, maximal_regularity_constant, single_mode_l2_ratio
from heatlab.fem import discrete_delta
from heatlab.mesh import UNIT_SQUARE, TriMesh
from heatlab.parabolic import separable
from heatlab.runner import KERNEL_SOURCE, LevelContext, csv_body, run
from heatlab.spectral import (
    SemigroupOperator,
    apply_semigroup,
    apply_time_derivative,
    decompose_space,
    fractional_seminorm,
)

from conftest import make_space

DOMAINS = ("square", "lshape")
LEVELS = (3, 4, 5)
BUDGET_SECONDS = 30 * 60

RESULTS = {}


def record(criterion, item, ok, detail=""):
    RESULTS.setdefault(criterion, []).append((item, bool(ok), detail))
    return ok


def summary_lines():
    lines = []
    for c in sorted(RESULTS):
        items = RESULTS[c]
        bad = [f"{i}: {d}" for i, ok, d in items if not ok]
        status = "PASS" if not bad else "FAIL"
        tail = f" ({'; '.join(bad)})" if bad else f" ({len(items)} checks)"
        lines.append(f"criterion {c:>2}: {status}{tail}")
    return lines


# -- shared full run -------------------------------------------------------------

@pytest.fixture(scope="session")
def study(tmp_path_factory):
    """The default refinement study on both domains, levels 3..5."""
    d = tmp_path_factory.mktemp("study")
    cfg = RunConfig(domains=DOMAINS, levels=LEVELS, cache_dir=str(d / "cache"), output=str(d / "study.csv"))
    start = time.perf_counter()
    res = run(cfg)
    return {"cfg": cfg, "result": res, "seconds": time.perf_counter() - start, "rows": res.rows}


def series(rows, scenario, domain, p, q):
    out = {}
    for r in rows:
        if r.scenario == scenario and r.domain == domain and str(r.p) == str(p) and str(r.q) == str(q):
            out[r.level] = r
    return [out[lv] for lv in LEVELS if lv in out]


def growth_check(values, h, tol):
    """Per-level growth at most 1 + tol, and no h^-rate growth with rate > 0.3."""
    v = np.asarray(values, dtype=float)
    if len(v) != len(LEVELS) or not np.all(np.isfinite(v)) or not np.all(v > 0):
        return False, f"values unavailable: {list(v)}"
    growth = float(np.max(v[1:] / v[:-1]))
    slope = loglog_slope(h, v)
    ok = growth <= 1 + tol and -slope <= 0.3
    return ok, f"max growth {growth:.3f}, log-log slope {slope:+.3f}"


# -- 1 ----------------------------------------------------------------------------

def test_criterion_1_assembly_oracles():
    start = time.perf_counter()
    mesh = TriMesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]),
                   np.array([0, 1, 2]), 1.0, 0, UNIT_SQUARE)
    from heatlab.fem import FeSpace

    sp = FeSpace(mesh, 1)
    M = np.array([[2, 1, 1], [1, 2, 1], [1, 1, 2]]) / 24.0
    K = np.array([[1, -0.5, -0.5], [-0.5, 0.5, 0], [-0.5, 0, 0.5]])
    err_m = np.abs(sp.mass_full.toarray() - M).max()
    err_k = np.abs(sp.stiffness_full.toarray() - K).max()
    rows = max(float(np.abs(np.asarray(make_space(d, 4).stiffness_full.sum(axis=1))).max()) for d in DOMAINS)
    elapsed = time.perf_counter() - start
    ok = record(1, "oracles", err_m <= 1e-12 and err_k <= 1e-12 and rows <= 1e-12,
                f"mass {err_m:.1e}, stiffness {err_k:.1e}, row sums {rows:.1e}")
    ok &= record(1, "runtime", elapsed < 1.0, f"{elapsed:.2f}s")
    assert ok


# -- 2 ----------------------------------------------------------------------------

def test_criterion_2_spectrum():
    start = time.perf_counter()
    lam = [decompose_space(make_space("square", L)).lambda_1 for L in (2, 3, 4)]
    elapsed = time.perf_counter() - start
    exact = 2 * math.pi**2
    rel = abs(lam[-1] - exact) / exact
    ok = record(2, "lambda_1 at n=16", rel < 0.02, f"{lam[-1]:.5f}, rel. dev. {rel:.2%}")
    ok &= record(2, "monotone", lam[0] > lam[1] > lam[2] > exact, str([round(x, 4) for x in lam]))
    ok &= record(2, "runtime", elapsed < 60, f"{elapsed:.1f}s")
    assert ok


# -- 3 ----------------------------------------------------------------------------

def test_criterion_3_semigroup_calculus():
    start = time.perf_counter()
    space = make_space("lshape", 4)
    S = SemigroupOperator(decompose_space(space), space)
    M = space.mass
    rng = np.random.default_rng(42)
    probes = rng.standard_normal((5, space.dim))
    mnorm = lambda c: math.sqrt(c @ (M @ c))
    lam1 = S.S.lambda_1

    law = 0.0
    for s, t in [(0.01, 0.02), (0.1, 0.5), (1e-4, 0.3)]:
        for v in probes:
            d = apply_semigroup(S, s + t, v) - apply_semigroup(S, s, apply_semigroup(S, t, v))
            law = max(law, np.abs(d).max() / np.abs(v).max())
    adj = 0.0
    for u, v in zip(probes[:-1], probes[1:]):
        a = apply_semigroup(S, 0.05, u) @ (M @ v)
        b = u @ (M @ apply_semigroup(S, 0.05, v))
        adj = max(adj, abs(a - b) / max(1.0, abs(a)))
    # operator norm: the probe maximum never exceeds e^{-lambda_1 t}, and v_1 attains it
    norm_err = 0.0
    for t in (0.01, 0.1, 1.0):
        bound = math.exp(-lam1 * t)
        worst = max(mnorm(apply_semigroup(S, t, v)) / mnorm(v) for v in probes)
        attained = mnorm(apply_semigroup(S, t, S.S.eigenvectors[:, 0]))
        norm_err = max(norm_err, abs(attained - bound) / bound, max(0.0, worst - bound) / bound)
    tgrid = np.logspace(-6, 1, 40)
    sup_dt = max(t * mnorm(apply_time_derivative(S, t, v)) / mnorm(v) for v in probes for t in tgrid)
    elapsed = time.perf_counter() - start

    ok = record(3, "semigroup law", law <= 1e-9, f"{law:.1e}")
    ok &= record(3, "self-adjoint", adj <= 1e-10, f"{adj:.1e}")
    ok &= record(3, "||E(t)|| = exp(-lambda_1 t)", norm_err <= 1e-9, f"{norm_err:.1e}")
    ok &= record(3, "sup t||dE||", sup_dt <= math.exp(-1) + 1e-6, f"{sup_dt:.6f}")
    ok &= record(3, "runtime", elapsed < 30, f"{elapsed:.1f}s")
    assert ok


# -- 4 ----------------------------------------------------------------------------

@pytest.mark.parametrize("domain", DOMAINS)
def test_criterion_4_fractional_holder(study, domain):
    worst = -np.inf
    for lv in LEVELS:
        ctx = LevelContext(study["cfg"], domain, lv)
        S = ctx.S
        rng = np.random.default_rng(1000 + lv)
        for _ in range(20):
            v = rng.standard_normal(ctx.space.dim)
            for a in (0.55, 0.75, 1.0):
                lhs = fractional_seminorm(S, 1 + a, v)
                rhs = fractional_seminorm(S, 1, v) ** (1 - a) * fractional_seminorm(S, 2, v) ** a
                worst = max(worst, (lhs - rhs) / rhs)
    assert record(4, domain, worst <= 1e-9, f"max relative excess {worst:.1e}")


# -- 5 ----------------------------------------------------------------------------

@pytest.mark.parametrize("domain", DOMAINS)
def test_criterion_5_maximal_l2_regularity(study, domain):
    vals = [r.value for r in series(study["rows"], "maxreg", domain, 2.0, 2.0)]
    ok = record(5, f"{domain} bound", len(vals) == 3 and max(vals) <= 1 + 1e-6, f"max {max(vals):.9f}")
    ctx = LevelContext(study["cfg"], domain, 4)
    S = ctx.S
    rec = maximal_regularity_constant(ctx.space, S, 2, 2, sources=[separable(S.S.eigenvectors[:, 0])])
    dev = abs(rec.value - single_mode_l2_ratio(S.S.lambda_1))
    ok &= record(5, f"{domain} closed form", dev <= 1e-8, f"deviation {dev:.1e}")
    assert ok


# -- 6 ----------------------------------------------------------------------------

UNIFORMITY = [
    ("analyticity q=2", "analyticity", "inf", 2.0, 0.3, DOMAINS),
    ("analyticity q=inf", "analyticity", "inf", "inf", 0.3, DOMAINS),
    ("kernel L1 bound", "kernels", "sup_t", 1.0, 0.3, DOMAINS),
    ("maximal function q=4", "maximal-function", "inf", 4.0, 0.3, DOMAINS),
    ("maxreg p=q=4", "maxreg", 4.0, 4.0, 0.3, DOMAINS),
    ("dtF L1", "kernels", "dtF", 1.0, 0.3, DOMAINS),
    ("K(C*=16)", "dyadic", "K", 16.0, 0.3, DOMAINS),
    ("deltainv", "deltainv", "max", "inf", 0.3, DOMAINS),
    ("best approximation", "best-approx", "inf", "inf", 0.5, DOMAINS),
    ("projection P_h", "projections", "P_h", "inf", 0.3, ("square",)),
    ("projection R_h", "projections", "R_h", "inf", 0.3, ("square",)),
    ("projection P_h", "projections", "P_h", "inf", 0.5, ("lshape",)),
    ("projection R_h", "projections", "R_h", "inf", 0.5, ("lshape",)),
]
CASES = [(name, sc, p, q, tol, d) for name, sc, p, q, tol, ds in UNIFORMITY for d in ds]


@pytest.mark.parametrize("name,scenario,p,q,tol,domain", CASES, ids=[f"{c[0]}-{c[5]}" for c in CASES])
def test_criterion_6_h_uniformity(study, name, scenario, p, q, tol, domain):
    rows = series(study["rows"], scenario, domain, p, q)
    vals = [r.value for r in rows]
    h = [r.h for r in rows]
    if rows and any("skipped" in str(r.aux) for r in rows):
        ok, detail = False, str(rows[0].aux)
    else:
        ok, detail = growth_check(vals, h, tol)
    assert record(6, f"{name} [{domain}]", ok, detail), detail


def test_criterion_6_runtime(study):
    secs = study["seconds"]
    assert record(6, "runtime", secs <= BUDGET_SECONDS, f"{secs / 60:.1f} min"), secs


# -- 7 ----------------------------------------------------------------------------

@pytest.mark.parametrize("domain", DOMAINS)
def test_criterion_7_log_factor_ceiling(study, domain):
    rows = series(study["rows"], "maxreg", domain, "inf", "inf")
    scaled = np.array([float(r.aux) for r in rows])
    growth = float(np.max(scaled[1:] / scaled[:-1]))
    assert record(7, domain, len(rows) == 3 and growth <= 1.3,
                  f"value/ell_h {np.round(scaled, 4).tolist()}, max growth {growth:.3f}")


# -- 8 ----------------------------------------------------------------------------

def delta_decay_constant(space, x0):
    """1/|slope| of log|delta_h(x_j)| against |x_j - x0|/h over nodes with |value| > 1e-14."""
    d = discrete_delta(space, x0).coeffs
    r = np.linalg.norm(space.dofs[space.interior_dofs] - x0, axis=1) / space.h
    keep = np.abs(d) > 1e-14
    slope = np.polyfit(r[keep], np.log(np.abs(d[keep])), 1)[0]
    return slope


@pytest.mark.parametrize("domain", DOMAINS)
def test_criterion_8_discrete_delta_decay(domain):
    x0 = np.array(KERNEL_SOURCE[domain])
    slopes = [delta_decay_constant(make_space(domain, lv), x0) for lv in LEVELS]
    K = [1 / abs(s) for s in slopes]
    ok = all(s < 0 for s in slopes) and max(K) / min(K) < 2
    assert record(8, domain, ok, f"slopes {np.round(slopes, 3).tolist()}, K ratio {max(K) / min(K):.3f}")


# -- 9 ----------------------------------------------------------------------------

@pytest.mark.parametrize("domain", DOMAINS)
def test_criterion_9_long_time_decay(study, domain):
    rows = series(study["rows"], "kernels", domain, "decay", 1.0)
    ratios = [r.value / float(r.aux) for r in rows]
    assert record(9, domain, len(rows) == 3 and min(ratios) >= 0.9,
                  f"rate/lambda_1 {np.round(ratios, 4).tolist()}")


# -- 10 ---------------------------------------------------------------------------

def test_criterion_10_determinism(tmp_path):
    cfg = RunConfig(domains=DOMAINS, levels=(3,))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(cfg, str(a))
    run(cfg, str(b))
    same = csv_body(a.read_text()) == csv_body(b.read_text())
    n = len(csv_body(a.read_text()).splitlines()) - 1
    assert record(10, "byte-identical bodies", same, f"{n} rows")


if __name__ == "__main__":
    code = pytest.main([__file__, "-q"])
    print("\n".join(summary_lines()))
    sys.exit(code)
