import math

import numpy as np
import pytest

from heatlab.errors import InvalidArgument
from heatlab.estimators import (
    PROBE_KINDS,
    EstimateRecord,
    ProbeField,
    ProbeFamily,
    analyticity_constant,
    analyticity_table,
    best_approximation_ratio,
    corollary_error_bound_check,
    default_probes,
    deltah_inverse_linf_ratio,
    ell_h,
    fine_reference,
    loglog_slope,
    maximal_function_ratio,
    maximal_function_table,
    maximal_regularity_constant,
    maximal_regularity_table,
    projection_linf_stability,
    single_mode_l2_ratio,
    stable_within,
    verdict,
)
from heatlab.parabolic import separable

from conftest import make_space


def test_ell_h():
    assert ell_h(0.5) == pytest.approx(math.log(4.0))
    assert ell_h(1 / 8) == pytest.approx(math.log(10.0))


def test_record_validation(square3):
    with pytest.raises(InvalidArgument):
        EstimateRecord("x", "square", 3, 0.1, 1, 2, 2, float("nan"))
    with pytest.raises(InvalidArgument):
        EstimateRecord("x", "square", 3, 0.1, 1, 2, 2, -1.0)


@pytest.mark.parametrize("kind", PROBE_KINDS)
def test_probe_families(lshape3, kind):
    space, S = lshape3
    a = ProbeFamily(kind, 3, seed=7).generate(space, S)
    b = ProbeFamily(kind, 3, seed=7).generate(space, S)
    assert a.shape == (space.dim, 3)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a).max(axis=0) > 0)


def test_probe_family_errors(square3):
    space, _ = square3
    with pytest.raises(InvalidArgument):
        ProbeFamily("sawtooth")
    with pytest.raises(InvalidArgument):
        ProbeFamily("eigenmodes").generate(space)
    with pytest.raises(InvalidArgument):
        analyticity_constant(space, square3[1], 2, probes=np.zeros((space.dim, 0)))


def test_analyticity_l2(lshape3):
    space, S = lshape3
    rec = analyticity_constant(space, S, 2)
    assert rec.value <= 1 + math.exp(-1) + 1e-6
    assert rec.value >= 1.0
    assert rec.aux == rec.extra["argmax_t"]
    # strong continuity at t = 1e-6 for the smooth eigenmode probes
    assert np.all(np.abs(rec.extra["ratio_at_t_min"][:4] - 1) < 1e-3)


def test_analyticity_linf_records_kernel_bound(lshape3):
    space, S = lshape3
    rec = analyticity_constant(space, S, math.inf)
    assert rec.q == "inf"
    assert rec.aux == rec.extra["kernel_bound"] > 0
    assert rec.extra["kernel_l1_sup"] <= rec.extra["kernel_bound"]
    with pytest.raises(InvalidArgument):
        analyticity_constant(space, S, 3)


def test_maximal_function_lower_and_upper_bounds(square3):
    space, S = square3
    probes = np.hstack([ProbeFamily("eigenmodes", 1).generate(space, S), ProbeFamily("corner", 2).generate(space, S)])
    for q in (2.0, 4.0, math.inf):
        rec = maximal_function_ratio(space, S, q, probes=probes)
        assert np.all(rec.extra["ratios"] >= rec.extra["probe_grid_norms"] - 1e-3)
    rec = maximal_function_ratio(space, S, math.inf, probes=probes)
    an = analyticity_constant(space, S, math.inf, probes=probes)
    assert rec.value <= an.extra["kernel_l1_sup"] * (1 + 1e-12)
    with pytest.raises(InvalidArgument):
        maximal_function_ratio(space, S, 1)


def test_maxreg_l2_bound_and_closed_form(lshape3):
    space, S = lshape3
    rec = maximal_regularity_constant(space, S, 2, 2)
    assert rec.value <= 1 + 1e-6
    v1 = S.S.eigenvectors[:, 0]
    single = maximal_regularity_constant(space, S, 2, 2, sources=[separable(v1, label="v1")])
    assert single.value == pytest.approx(single_mode_l2_ratio(S.S.lambda_1), abs=1e-8)
    with pytest.raises(InvalidArgument):
        maximal_regularity_constant(space, S, 3, 3)


def test_maxreg_linf_aux(square3):
    space, S = square3
    rec = maximal_regularity_constant(space, S, math.inf, math.inf)
    assert rec.aux == pytest.approx(rec.value / ell_h(space.h))


def test_scale_invariance(lshape3):
    space, S = lshape3
    P = default_probes(space, S)
    for q in (1, 2, 4, math.inf):
        a = analyticity_constant(space, S, q, probes=P, kernel_points=np.array([[-0.5, 0.5]])).value
        b = analyticity_constant(space, S, q, probes=7.0 * P, kernel_points=np.array([[-0.5, 0.5]])).value
        assert a == pytest.approx(b, rel=1e-12)
    for q in (2, math.inf):
        a = maximal_function_ratio(space, S, q, probes=P).value
        b = maximal_function_ratio(space, S, q, probes=7.0 * P).value
        assert a == pytest.approx(b, rel=1e-12)
    src = [separable(P[:, 5], "cos", omega=20.0)]
    a = maximal_regularity_constant(space, S, 4, 2, sources=src).value
    b = maximal_regularity_constant(space, S, 4, 2, sources=[s.scaled(7.0) for s in src]).value
    assert a == pytest.approx(b, rel=1e-12)
    a = deltah_inverse_linf_ratio(space, P).value
    assert deltah_inverse_linf_ratio(space, 10.0 * P).value == pytest.approx(a, rel=1e-12)


def test_probe_monotonicity(square3):
    space, S = square3
    P = default_probes(space, S)
    small, big = P[:, :5], P
    assert analyticity_constant(space, S, 4, probes=big).value >= analyticity_constant(space, S, 4, probes=small).value
    assert maximal_function_ratio(space, S, 4, probes=big).value >= maximal_function_ratio(space, S, 4, probes=small).value
    assert deltah_inverse_linf_ratio(space, big).value >= deltah_inverse_linf_ratio(space, small).value


def test_deltainv_eigenmode(square4):
    space, S = square4
    rec = deltah_inverse_linf_ratio(space, S.S.eigenvectors[:, :1])
    assert rec.value == pytest.approx(1 / S.S.lambda_1, rel=1e-10)
    assert abs(rec.value - 1 / (2 * math.pi**2)) / (1 / (2 * math.pi**2)) < 0.05


def test_best_approx_representable(square3):
    space, S = square3
    ref = fine_reference(space, S.S.eigenvectors[:, 0])
    rec = best_approximation_ratio(space, S, ref)
    assert rec.extra["numerator"] <= 1e-8
    assert rec.value <= 1e-6
    assert rec.aux in ("I_h", "P_h", "R_h")


def test_best_approx_and_corollary_on_nested_pair():
    coarse, fine = make_space("square", 2), make_space("square", 4)
    from heatlab.spectral import SemigroupOperator, decompose_space

    S = SemigroupOperator(decompose_space(coarse), coarse)
    u0 = fine.interpolate(lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)).coeffs
    ref = fine_reference(fine, u0)
    rec = best_approximation_ratio(coarse, S, ref)
    assert 0 < rec.value < np.inf
    c22 = corollary_error_bound_check(coarse, S, ref, 2, 2)
    assert c22.extra["initial_term"] <= 1e-10
    assert 0 < c22.value < np.inf
    cinf = corollary_error_bound_check(coarse, S, ref, math.inf, math.inf)
    assert cinf.p == "inf"
    zero = corollary_error_bound_check(coarse, S, fine_reference(fine, np.zeros(fine.dim)), 2, 2)
    assert zero.value == 0.0 and zero.aux == "vacuous"
    with pytest.raises(InvalidArgument):
        corollary_error_bound_check(coarse, S, ref, 4, 4)


def test_projections_fe_function_gives_zero(square3):
    space, _ = square3
    c = np.random.default_rng(3).standard_normal(space.dim)
    f = space.function(c)
    g = space.gradients_at_quad(c)

    def u(x, y):
        return f(np.column_stack([np.ravel(x), np.ravel(y)])).reshape(np.shape(x))

    recs = projection_linf_stability(space, [ProbeField("fe", u, lambda x, y: (g[..., 0], g[..., 1]))])
    assert [r.p for r in recs] == ["P_h", "R_h"]
    assert all(r.value <= 1e-8 for r in recs)


def test_projections_default_probes():
    recs = projection_linf_stability(make_space("lshape", 3))
    assert {r.aux for r in recs} <= {"sinsin", "corner-singular"}
    assert all(0 < r.value < 10 for r in recs)


def test_tables_are_complete(square3):
    space, S = square3
    assert [r.q for r in analyticity_table(space, S)] == [1.0, 2.0, 4.0, "inf"]
    assert [r.q for r in maximal_function_table(space, S)] == [2.0, 4.0, "inf"]
    pq = [(r.p, r.q) for r in maximal_regularity_table(space, S)]
    assert pq == [(2.0, 2.0), (4.0, 4.0), (4.0, 2.0), (2.0, 4.0), ("inf", "inf")]


def test_verdicts():
    h = [0.1, 0.05, 0.025]
    assert verdict(h, [1.0, 1.01, 1.02]) == "BOUNDED"
    assert verdict(h, [1.0, 2.0, 4.0]).startswith("GROWING(1.00")
    assert verdict(h[:1], [1.0]) == "SKIPPED"
    assert loglog_slope(h, [1.0, 2.0, 4.0]) == pytest.approx(-1.0)
    assert stable_within([1.0, 1.25, 1.5], 0.3)
    assert not stable_within([1.0, 1.4], 0.3)
