import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from qcopula.data import ReturnMatrix
from qcopula.errors import DimensionMismatch, FitDiverged, OutOfDomain, TooFewObservations
from qcopula.marginals import (
    PIT_CLIP,
    PseudoSampleMatrix,
    StudentTMarginal,
    _moment_init,
    fit_student_t,
    inverse_pit,
    marginals_from_json,
    marginals_to_json,
    pit,
    student_t_cdf,
    student_t_quantile,
    t_loglik,
)

STD_T5 = StudentTMarginal(0.0, 1.0, 5.0)


def t_density(x, dof):
    # written out from the gamma-function form, independent of scipy.stats
    c = math.gamma((dof + 1) / 2) / (math.sqrt(dof * math.pi) * math.gamma(dof / 2))
    return c * (1 + x * x / dof) ** (-(dof + 1) / 2)


def test_fit_recovers_t5(rng):
    m = fit_student_t(rng.standard_t(5, 10_000))
    assert 4 <= m.dof <= 6.5
    assert abs(m.location) < 0.05 and abs(m.scale - 1) < 0.05


def test_fit_normal_pins_dof_high(rng):
    assert fit_student_t(rng.standard_normal(10_000)).dof >= 100


def test_fit_constant_column():
    with pytest.raises(FitDiverged):
        fit_student_t(np.full(200, 0.3))


def test_fit_needs_enough_rows():
    with pytest.raises(TooFewObservations):
        fit_student_t(np.arange(10.0))


def test_fit_never_regresses_from_moment_start(rng):
    for dof in (2.5, 4, 30):
        x = 0.3 + 2.0 * rng.standard_t(dof, 3000)
        m = fit_student_t(x)
        assert t_loglik(x, m.location, m.scale, m.dof) >= t_loglik(x, *_moment_init(x)) - 1e-9


def test_cdf_at_location():
    assert student_t_cdf(StudentTMarginal(1.7, 0.3, 4.0), 1.7) == pytest.approx(0.5, abs=1e-15)


def test_cdf_cauchy():
    assert student_t_cdf(StudentTMarginal(0, 1, 1), 1.0) == pytest.approx(0.75, abs=1e-14)


def test_cdf_matches_quadrature_oracle():
    oracle = 0.5 + integrate.quad(t_density, 0.0, 2.015, args=(5.0,), epsabs=1e-14)[0]
    assert student_t_cdf(STD_T5, 2.015) == pytest.approx(oracle, abs=1e-10)
    assert oracle == pytest.approx(0.95, abs=1e-4)


def test_quantile_median_and_cauchy():
    assert student_t_quantile(StudentTMarginal(2.0, 3.0, 7.0), 0.5) == pytest.approx(2.0, abs=1e-14)
    assert student_t_quantile(StudentTMarginal(0, 1, 1), 0.75) == pytest.approx(1.0, abs=1e-12)


def test_quantile_round_trip(rng):
    m = StudentTMarginal(0.1, 0.7, 3.3)
    u = rng.uniform(size=1000)
    np.testing.assert_allclose(student_t_cdf(m, student_t_quantile(m, u)), u, atol=1e-10, rtol=0)


def test_quantile_domain():
    with pytest.raises(OutOfDomain):
        student_t_quantile(STD_T5, 1.0)


def test_extreme_quantile_is_finite():
    q = student_t_quantile(StudentTMarginal(0, 1, 3), 1 - 1e-12)
    assert np.isfinite(q) and q > 1e3


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(2.01, 200))
def test_cdf_monotone(a, b, dof):
    if a == b:
        return
    lo, hi = sorted((a, b))
    m = StudentTMarginal(0.0, 1.0, dof)
    assert student_t_cdf(m, lo) <= student_t_cdf(m, hi)
    if hi - lo > 1e-6 and abs(lo) < 20 and abs(hi) < 20:
        assert student_t_cdf(m, lo) < student_t_cdf(m, hi)


def test_pit_at_locations_is_half():
    models = [StudentTMarginal(0.2, 1, 4), StudentTMarginal(-1, 2, 9)]
    u = pit(ReturnMatrix(("a", "b"), np.tile([0.2, -1.0], (5, 1))), models)
    np.testing.assert_allclose(u.rows, 0.5, atol=1e-15)


def test_pit_uniform_histogram(rng):
    x = 0.5 + 2 * rng.standard_t(4, 50_000)
    m = fit_student_t(x)
    u = pit(ReturnMatrix(("a",), x[:, None]), [m]).rows[:, 0]
    counts = np.bincount(np.minimum((u * 20).astype(int), 19), minlength=20)
    expected = x.size / 20
    se = math.sqrt(x.size * 0.05 * 0.95)
    assert np.all(np.abs(counts - expected) < 3 * se)


def test_pit_is_clipped():
    u = pit(ReturnMatrix(("a",), np.array([[1e300], [-1e300]])), [STD_T5]).rows
    assert u[0, 0] == 1 - PIT_CLIP and u[1, 0] == PIT_CLIP


def test_inverse_pit_of_half_is_location():
    models = [StudentTMarginal(0.2, 1, 4), StudentTMarginal(-1, 2, 9)]
    x = inverse_pit(PseudoSampleMatrix(("a", "b"), np.full((3, 2), 0.5)), models)
    np.testing.assert_allclose(x.rows, np.tile([0.2, -1.0], (3, 1)), atol=1e-14)


def test_pit_round_trips(rng):
    models = [StudentTMarginal(0.0, 0.01, 3.0), StudentTMarginal(0.001, 0.05, 6.0)]
    x = ReturnMatrix(("a", "b"), np.column_stack([0.01 * rng.standard_t(3, 500),
                                                 0.001 + 0.05 * rng.standard_t(6, 500)]))
    np.testing.assert_allclose(inverse_pit(pit(x, models), models).rows, x.rows, atol=1e-8, rtol=0)
    u = PseudoSampleMatrix(("a", "b"), rng.uniform(1e-9, 1 - 1e-9, (500, 2)))
    np.testing.assert_allclose(pit(inverse_pit(u, models), models).rows, u.rows, atol=1e-8, rtol=0)


def test_model_count_must_match():
    with pytest.raises(DimensionMismatch):
        pit(ReturnMatrix(("a", "b"), np.zeros((2, 2))), [STD_T5])


def test_json_round_trip():
    models = [StudentTMarginal(0.1, 0.2, 3.0), StudentTMarginal(-0.5, 1.5, 80.0)]
    ids, back = marginals_from_json(marginals_to_json(["x", "y"], models))
    assert ids == ["x", "y"] and back == models
