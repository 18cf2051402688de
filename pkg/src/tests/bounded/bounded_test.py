import math

import numpy as np
import pytest

from depcag.engine.bounded import (
    TruncationPolicy, bounded_solution, bounded_values, difference_equation_residual,
    lipschitz_bound_check, series_tail_report, variation_of_parameters,
)
from depcag.engine.dichotomy import GreenContext, certified_dichotomy, verify_ed1
from depcag.engine.dynamics import integrate_depcag
from depcag.engine.error import ConditionViolationError, DomainError
from depcag.model.dichotomy import DichotomySpec
from depcag.model.grid import builtin_family
from depcag.model.system import ForcingTerm, LinearSystem

# default horizon for alpha = 0.5 is 40, so the table must reach one interval further
SPAN = (-42.0, 42.0)


def make_system(a="-1", b="0", family="floor"):
    return LinearSystem.build([[a]], [[b]], builtin_family(family))


def make_forcing(*components):
    return ForcingTerm.certify(list(components), (-50.0, 50.0), 2000, 1.1)


def make_context(sys_, K_auto=False, span=SPAN):
    dicho = DichotomySpec(P=[[1.0]], K=1.0, alpha=0.5, K_auto=K_auto)
    ctx = GreenContext.build(sys_, dicho, *span)
    if K_auto:
        ctx = ctx.with_dichotomy(certified_dichotomy(ctx, verify_ed1(ctx, -3, 3)))
    return ctx


@pytest.mark.timeout(120)
def test_constant_forcing_of_stable_ode():
    v = bounded_solution(make_context(make_system()), make_forcing("1"), 0.3)
    assert v.value[0] == pytest.approx(1.0, abs=v.error_bar + 1e-9)
    assert v.error_bar <= 1e-4
    assert v.horizon == pytest.approx(40.0)


@pytest.mark.timeout(120)
def test_constant_forcing_with_piecewise_constant_argument():
    # constant c solves 0 = -c + 0.1 c + 1
    ctx = make_context(make_system(b="0.1"), K_auto=True)
    values = bounded_values(ctx, make_forcing("1"), [-1.5, 0.0, 2.25])
    for v in values:
        assert v.value[0] == pytest.approx(1 / 0.9, abs=v.error_bar + 1e-9)


@pytest.mark.timeout(120)
def test_periodic_forcing_of_stable_ode():
    # x' = -x + cos t has the bounded solution (cos t + sin t) / 2
    t = 1.1
    v = bounded_solution(make_context(make_system()), make_forcing("cos(t)"), t)
    assert v.value[0] == pytest.approx((math.cos(t) + math.sin(t)) / 2, abs=v.error_bar + 1e-8)


def test_zero_forcing():
    v = bounded_solution(make_context(make_system(), span=(-2.0, 2.0)), make_forcing("0"), 0.0)
    assert v.value == [0.0]
    assert v.error_bar == 0.0


def test_uncertified_K_rejected():
    ctx = GreenContext.build(make_system(), DichotomySpec(P=[[1.0]], alpha=0.5, K_auto=True), -2.0, 2.0)
    with pytest.raises(ConditionViolationError, match="ED1"):
        bounded_solution(ctx, make_forcing("1"), 0.0)


def test_truncation_policy():
    ctx = make_context(make_system(), span=(-2.0, 2.0))
    assert TruncationPolicy.default_horizon(0.5, 1.0) == pytest.approx(40.0)
    assert TruncationPolicy.default_horizon(10.0, 1.0) == pytest.approx(10.0)
    policy = TruncationPolicy.build(ctx, 2.0, horizon_T=10.0)
    assert policy.tail_bound == pytest.approx(2 * ctx.green_scale() * 2.0 * math.exp(-5.0))


@pytest.mark.timeout(120)
def test_bound_check_passes():
    ctx = make_context(make_system(b="0.1"), K_auto=True)
    g = make_forcing("sin(t)")
    report = lipschitz_bound_check(ctx, g, [-1.0, 0.0, 0.5, 2.0])
    assert report.passed
    assert report.violations == []
    assert report.bound == pytest.approx(2 * ctx.green_scale() * g.g_sup.value)


class TestVariationOfParameters:
    def test_stable_ode(self):
        x = variation_of_parameters(make_system(), make_forcing("1"), 0.0, [0.0], 2.0)
        assert x[0] == pytest.approx(1 - math.exp(-2), abs=1e-8)
        assert x[0] == pytest.approx(0.864665, abs=1e-6)

    def test_matches_direct_integration(self):
        sys_ = make_system(b="0.1", family="floor_half")
        g = make_forcing("sin(t)")
        x = variation_of_parameters(sys_, g, 0.2, [1.0], 3.4)
        direct = integrate_depcag(sys_, None, 0.2, [1.0], 3.4, g=g).at([3.4])[0][0]
        assert np.allclose(x, direct, rtol=1e-6, atol=1e-8)

    def test_tau_after_zeta_rejected(self):
        with pytest.raises(DomainError, match="only tau in"):
            variation_of_parameters(make_system(family="floor_half"), None, 0.7, [1.0], 2.0)

    def test_backward_rejected(self):
        with pytest.raises(DomainError, match="precedes"):
            variation_of_parameters(make_system(), None, 1.0, [1.0], 0.5)


class TestSeriesTails:
    def test_stable_series_converge(self):
        report = series_tail_report(make_context(make_system(b="0.1"), span=(-2.0, 2.0)), 0)
        assert report.passed
        assert report.terms == 20
        assert len(report.partial_sums) == 4
        # zeta_r = t_r on the floor grid, and P = I leaves no unstable part
        assert report.last_terms[0] == 0.0
        assert report.last_terms[2] == report.last_terms[3] == 0.0
        assert report.fitted_ratios[1] < 1

    def test_growing_series_fail(self):
        # x' = x with P = I: P Z(0, t_r) grows like e^{-t_r} into the past
        report = series_tail_report(make_context(make_system(a="1"), span=(-2.0, 2.0)), 0)
        assert not report.passed
        assert report.fitted_ratios[1] == pytest.approx(math.e, rel=1e-3)
        assert report.last_terms[1] > 1e6

    def test_too_few_terms(self):
        with pytest.raises(DomainError, match=">= 10"):
            series_tail_report(make_context(make_system(), span=(-2.0, 2.0)), 0, terms=5)


def test_difference_equation_residual():
    sys_ = make_system(b="0.1", family="floor_half")
    report = difference_equation_residual(sys_, make_forcing("sin(t)"), 0.0, [1.0], 5)
    assert report.passed
    assert len(report.residuals) == 5
    assert report.max_residual <= 1e-6


def test_difference_equation_closed_form():
    # x' = -x + 0.1 x([t]) + 1: x(n + 1) = STEP x(n) + 1 - e^{-1}
    step = math.exp(-1) + 0.1 * (1 - math.exp(-1))
    sys_ = make_system(b="0.1")
    g = make_forcing("1")
    x = integrate_depcag(sys_, None, 0.0, [1.0], 4.0, g=g).at([0.0, 1.0, 2.0, 3.0, 4.0])[0][:, 0]
    for n in range(4):
        assert x[n + 1] == pytest.approx(step * x[n] + 1 - math.exp(-1), abs=1e-7)
    report = difference_equation_residual(sys_, g, 0.0, [1.0], 4)
    assert report.passed
    assert len(report.residuals) == 4


@pytest.mark.timeout(120)
def test_bounded_solution_is_linear_in_forcing():
    ctx = make_context(make_system(b="0.1"), K_auto=True)
    ts = [-0.7, 0.0, 1.3]
    first = bounded_values(ctx, make_forcing("sin(t)"), ts)
    second = bounded_values(ctx, make_forcing("cos(0.5*t)"), ts)
    combined = bounded_values(ctx, make_forcing("sin(t) + 3*cos(0.5*t)"), ts)
    for a, b, c in zip(first, second, combined):
        slack = a.error_bar + 3 * b.error_bar + c.error_bar + 1e-9
        assert c.value[0] == pytest.approx(a.value[0] + 3 * b.value[0], abs=slack)
