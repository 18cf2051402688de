import math

import numpy as np
import pytest

from depcag.engine.error import DomainError, SingularFactorError, WindowExceededError
from depcag.engine.flow import (
    FlowTable, check_condition_c, classify_regime, closed_form_reduction, discrete_reduction, e_matrix,
    fundamental_matrix, j_matrix, table_for, transition_matrix, transition_residual,
)
from depcag.model.grid import builtin_family
from depcag.model.reports import Regime
from depcag.model.system import LinearSystem

# x' = -x + 0.1 x([t]) advances by this factor over each unit interval
STEP_FACTOR = math.exp(-1) + 0.1 * (1 - math.exp(-1))


def make_scalar(a="-1", b="0.1", family="floor", params=None):
    return LinearSystem.build([[a]], [[b]], builtin_family(family, params))


def test_one_step_factor():
    sys_ = make_scalar()
    assert transition_matrix(sys_, 1.0, 0.0)[0, 0] == pytest.approx(STEP_FACTOR, abs=1e-6)
    assert STEP_FACTOR == pytest.approx(0.431091, abs=1e-6)


def test_inside_an_interval():
    sys_ = make_scalar()
    expected = math.exp(-0.5) + 0.1 * (1 - math.exp(-0.5))
    assert transition_matrix(sys_, 3.5, 3.0)[0, 0] == pytest.approx(expected, abs=1e-6)


def test_backward_transition_inverts_forward():
    sys_ = make_scalar()
    assert transition_matrix(sys_, 0.0, 3.0)[0, 0] == pytest.approx(STEP_FACTOR ** -3, rel=1e-6)


def test_discrete_reduction_is_constant():
    mats = discrete_reduction(make_scalar(), -2, 2)
    assert len(mats) == 5
    for m in mats:
        assert m[0, 0] == pytest.approx(STEP_FACTOR, abs=1e-6)


def test_advanced_argument():
    # x' = -0.5 x(n + 1/2): x(n+1) = 0.6 x(n)
    sys_ = make_scalar(a="0", b="-0.5", family="floor_half")
    assert transition_matrix(sys_, 1.0, 0.0)[0, 0] == pytest.approx(0.6, abs=1e-9)
    assert transition_matrix(sys_, 0.5, 0.0)[0, 0] == pytest.approx(0.8, abs=1e-9)


@pytest.mark.parametrize("a,b,family,expected", [
    ("-1", "0.1", "floor", STEP_FACTOR),
    ("0", "-0.5", "floor_half", 0.6),
])
def test_closed_form_reduction(a, b, family, expected):
    mats = closed_form_reduction(make_scalar(a=a, b=b, family=family), -1, 1)
    assert [m[0, 0] for m in mats] == pytest.approx([expected] * 3, abs=1e-12)


def test_closed_form_matches_table():
    sys_ = LinearSystem.build([["-1", "0.3"], ["0", "0.5"]], [["0.1", "0"], ["0.2", "-0.1"]],
                              builtin_family("floor_half"))
    for exact, tabled in zip(closed_form_reduction(sys_, -2, 2), discrete_reduction(sys_, -2, 2)):
        np.testing.assert_allclose(tabled, exact, atol=1e-7)


def test_closed_form_needs_constant_coefficients():
    with pytest.raises(DomainError, match="constant"):
        closed_form_reduction(make_scalar(a="-1 - 0.5*cos(t)"), 0, 1)


def test_time_dependent_ode_limit():
    sys_ = make_scalar(a="-1 - 0.5*cos(t)", b="0")
    t, tau = 2.3, 0.4
    expected = math.exp(-(t - tau) - 0.5 * (math.sin(t) - math.sin(tau)))
    assert transition_matrix(sys_, t, tau)[0, 0] == pytest.approx(expected, rel=1e-7)


PLANAR = ([["-1", "0.3"], ["0", "0.5"]], [["0.1", "0"], ["0.2", "-0.1"]])
PLANAR_VARYING = ([["-1 + 0.3*sin(t)", "0.2*cos(t)"], ["0", "0.5"]], [["0.1", "0"], ["0.05*sin(2*t)", "-0.1"]])
TRIPLES = [(3.7, 1.2, -2.4), (-3.1, 0.5, 2.9), (0.25, 0.75, 0.5), (1.9, 1.6, 1.1), (-0.4, 3.3, -3.6)]
PAIRS = [(t, s) for t, s, _ in TRIPLES]


@pytest.fixture(scope="module", params=[PLANAR, PLANAR_VARYING], ids=["constant", "varying"])
def planar(request):
    sys_ = LinearSystem.build(*request.param, builtin_family("floor_half"))
    return sys_, table_for(sys_, -4.0, 4.0)


@pytest.mark.parametrize("t, s, tau", TRIPLES)
def test_cocycle(planar, t, s, tau):
    _, table = planar
    assert np.allclose(table.z(t, s) @ table.z(s, tau), table.z(t, tau), rtol=1e-8, atol=1e-10)


@pytest.mark.parametrize("t, s", PAIRS)
def test_transition_inverse(planar, t, s):
    _, table = planar
    assert np.allclose(table.z(t, s) @ table.z(s, t), np.eye(2), atol=1e-9)


@pytest.mark.parametrize("t, s", [(0.9, 0.1), (0.1, 0.9), (2.45, 2.05), (-3.2, -3.95)])
def test_cauchy_matrix_growth(planar, t, s):
    sys_, table = planar
    nodes = np.linspace(-4.0, 4.0, 801)
    M = float(np.linalg.norm(sys_.A.at(nodes), ord=2, axis=(-2, -1)).max())
    assert np.linalg.norm(table.phi(t, s), 2) <= math.exp(M * abs(t - s)) * (1 + 1e-9)


@pytest.mark.parametrize("t, s", PAIRS)
def test_projected_cocycle(planar, t, s):
    # P(t) = Z(t, 0) P Z(0, t) is carried along by the flow
    _, table = planar
    P = np.array([[1.0, 0.0], [0.0, 0.0]])

    def P_at(u):
        return table.z(u, 0.0) @ P @ table.z(0.0, u)

    assert np.allclose(table.z(t, s) @ P_at(s), P_at(t) @ table.z(t, s), rtol=1e-8, atol=1e-9)


@pytest.mark.parametrize("t, s, tau", TRIPLES)
def test_restart_from_intermediate_time(planar, t, s, tau):
    # integrating to s and restarting there on a fresh window gives the same solution
    sys_, table = planar
    xi = np.array([0.7, -1.3])
    restarted = transition_matrix(sys_, t, s) @ (transition_matrix(sys_, s, tau) @ xi)
    assert np.allclose(restarted, table.z(t, tau) @ xi, rtol=1e-7, atol=1e-9)


class TestTransitionResidual:
    def test_small_on_both_systems(self, planar):
        sys_, table = planar
        rng = np.random.default_rng(3)
        ts = rng.uniform(-3.5, 3.5, 200)
        assert transition_residual(sys_, table, ts, 0.3).max() <= 1e-4

    def test_wrong_system_detected(self, planar):
        sys_, table = planar
        other = LinearSystem.build(PLANAR[0], [["0.6", "0"], ["0", "0.4"]], builtin_family("floor_half"))
        ts = np.linspace(-2.9, 2.9, 25)
        assert transition_residual(other, table, ts, 0.3).max() > 1e-2

    def test_breakpoint_rejected(self, planar):
        sys_, table = planar
        with pytest.raises(DomainError, match="breakpoint"):
            transition_residual(sys_, table, [1.0], 0.3)


class TestSingularFactors:
    # A = 0, A0 = diag(-2, -0.5): E(s, t_k) = diag(1 - 2(s - t_k), 1 - 0.5(s - t_k)) is singular
    # at mid-interval while E(t_{k+1}, t_k) = diag(-1, 0.5) is not
    @pytest.fixture
    def table(self):
        sys_ = LinearSystem.build([["0", "0"], ["0", "0"]], [["-2", "0"], ["0", "-0.5"]], builtin_family("floor"))
        return FlowTable(sys_, -1, 2)

    def test_nodes_factor(self, table):
        assert np.allclose(table.fwd[1], np.diag([-1.0, 0.5]))

    def test_transition_from_singular_time(self, table):
        with pytest.raises(SingularFactorError):
            table.z(1.5, 0.5)

    def test_origin_map_from_singular_time(self, table):
        with pytest.raises(SingularFactorError):
            table.z_to_origin([0.25, 0.5])


def test_table_matches_direct_matrices():
    sys_ = make_scalar()
    table = FlowTable(sys_, 0, 3)
    assert table.phi(2.0, 1.0)[0, 0] == pytest.approx(math.exp(-1), rel=1e-9)
    assert table.e(1.0, 0.0)[0, 0] == pytest.approx(STEP_FACTOR, abs=1e-8)


def test_table_window_is_enforced():
    table = FlowTable(make_scalar(), -1, 2)
    with pytest.raises(WindowExceededError):
        table.z(5.0, 0.0)


def test_fundamental_matrix():
    assert fundamental_matrix(make_scalar(), 2.0, 1.0)[0, 0] == pytest.approx(math.exp(-1), rel=1e-9)


def test_j_matrix():
    assert j_matrix(make_scalar(), 1.0, 0.0)[0, 0] == pytest.approx(1 + 0.1 * (math.e - 1), abs=1e-8)


def test_e_matrix():
    assert e_matrix(make_scalar(), 1.0, 0.0)[0, 0] == pytest.approx(STEP_FACTOR, abs=1e-8)


@pytest.mark.parametrize("fn", [j_matrix, e_matrix])
def test_same_interval_required(fn):
    with pytest.raises(DomainError, match="one grid interval"):
        fn(make_scalar(), 1.5, 0.5)


def test_singular_factor():
    # x1' = -x1([t]) sends the first component to zero at the next breakpoint
    sys_ = LinearSystem.build([["0", "0"], ["0", "0"]], [["-1", "0"], ["0", "-0.5"]], builtin_family("floor"))
    with pytest.raises(SingularFactorError):
        FlowTable(sys_, -1, 1)


class TestConditionC:
    def test_values(self):
        report = check_condition_c(make_scalar(), -3, 3)
        assert report.rho_A == pytest.approx(math.e, rel=1e-9)
        assert report.nu_plus == pytest.approx(0.0, abs=1e-12)
        assert report.nu_minus == pytest.approx(0.1 * math.e, rel=1e-9)
        assert report.satisfied
        assert len(report.per_interval) == 7

    def test_violation(self):
        report = check_condition_c(make_scalar(b="0.5"), -1, 1)
        assert report.nu_minus == pytest.approx(0.5 * math.e, rel=1e-9)
        assert not report.satisfied

    def test_split_interval(self):
        report = check_condition_c(make_scalar(family="floor_half"), 0, 0)
        row = report.per_interval[0]
        assert row.rho_plus_A == pytest.approx(math.exp(0.5), rel=1e-9)
        assert row.rho_minus_A == pytest.approx(math.exp(0.5), rel=1e-9)
        assert report.nu_plus == pytest.approx(math.exp(0.5) * 0.05, rel=1e-9)

    def test_empty_window(self):
        with pytest.raises(DomainError):
            check_condition_c(make_scalar(), 2, 1)


@pytest.mark.parametrize("a, b, regime", [
    ("-1", "0.1", Regime.GENERAL),
    ("-1", "0", Regime.ODE_LIMIT),
    ("0", "-0.5", Regime.PURE_PCA),
])
def test_classify_regime(a, b, regime):
    assert classify_regime(make_scalar(a=a, b=b)) == regime
