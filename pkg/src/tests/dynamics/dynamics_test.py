import math

import numpy as np
import pytest

from depcag.engine.dynamics import (
    continuity_envelope_check, evaluate_conditions, gronwall_bound, integrate_depcag, integrate_span, rates,
)
from depcag.engine.error import DomainError, InapplicableBoundError
from depcag.engine.flow import transition_matrix
from depcag.model.bounds import CertifiedBound
from depcag.model.dichotomy import DichotomySpec
from depcag.model.grid import builtin_family
from depcag.model.reports import Regime
from depcag.model.system import LinearSystem, Nonlinearity

RANGES = {"t": (-50.0, 50.0), "x": (-2.0, 2.0), "y": (-2.0, 2.0)}


def make_system(a="-1", b="0.1", family="floor_half"):
    return LinearSystem.build([[a]], [[b]], builtin_family(family))


def make_nonlinearity(src="0.01*tanh(x1)", mu=0.01, ell1=0.01, ell2=0.0):
    return Nonlinearity.certify([src], RANGES, 1000, 1.1, mu=CertifiedBound.analytic(mu),
                                ell1=CertifiedBound.analytic(ell1), ell2=CertifiedBound.analytic(ell2))


class TestTrajectory:
    @pytest.mark.parametrize("tau, t_end", [(0.3, 3.7), (0.3, -2.2), (0.8, 4.0), (-1.0, 0.5)])
    def test_linear_solution_follows_transition_matrix(self, tau, t_end):
        sys_ = make_system()
        traj = integrate_depcag(sys_, None, tau, [1.0], t_end)
        x = traj.at([t_end])[0, 0, 0]
        assert x == pytest.approx(transition_matrix(sys_, t_end, tau)[0, 0], rel=1e-7)

    def test_starts_at_initial_state(self):
        traj = integrate_depcag(make_system(), make_nonlinearity(), 0.3, [0.7], 2.0)
        assert traj.at([0.3])[0, 0, 0] == pytest.approx(0.7, abs=1e-12)

    def test_frozen_value_is_state_at_zeta(self):
        traj = integrate_depcag(make_system(), make_nonlinearity(), 0.0, [1.0], 3.0)
        for k in (0, 1, 2):
            assert np.allclose(traj.frozen(k), traj.at([k + 0.5])[:, 0], atol=1e-10)
        with pytest.raises(DomainError):
            traj.frozen(7)

    def test_batch(self):
        sys_ = LinearSystem.build([[-1.0, 0.0], [0.0, 1.0]], [[0.1, 0.0], [0.0, 0.1]], builtin_family("floor"))
        xi = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, -0.5]])
        traj = integrate_span(sys_, None, 0.0, xi, -1.0, 2.0)
        assert traj.batch == 3
        assert traj.dim == 2
        assert traj.at([0.5, 1.5]).shape == (3, 2, 2)
        # linear in the initial state
        assert np.allclose(traj.at([1.5])[2], 0.5 * traj.at([1.5])[0] - 0.5 * traj.at([1.5])[1])

    def test_samples_share_breakpoints_once(self):
        traj = integrate_depcag(make_system(family="floor"), None, 0.0, [1.0], 3.0)
        ts, xs = traj.samples()
        assert np.all(np.diff(ts) > 0)
        assert xs.shape == (1, len(ts), 1)

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError, match="dimension"):
            integrate_depcag(make_system(), None, 0.0, [1.0, 2.0], 1.0)

    def test_tau_outside_span(self):
        with pytest.raises(DomainError):
            integrate_span(make_system(), None, 3.0, [1.0], 0.0, 2.0)

    def test_outside_span_query(self):
        traj = integrate_depcag(make_system(), None, 0.0, [1.0], 1.0)
        with pytest.raises(DomainError, match="outside trajectory span"):
            traj.at([5.0])


class TestGronwall:
    def test_without_delay_term_is_exponential(self):
        b = gronwall_bound(0.7, 0.0, 2.0, builtin_family("floor"), 0.0, 3.0)
        assert b == pytest.approx(2.0 * math.exp(2.1), rel=1e-9)

    def test_advanced_term(self):
        # w = 1/2 on floor_half, so the delay integral is doubled
        b = gronwall_bound(0.0, 1.0, 1.0, builtin_family("floor_half"), 0.0, 2.0)
        assert b == pytest.approx(math.exp(4.0), rel=1e-9)

    def test_callable_rates(self):
        b = gronwall_bound(lambda s: 0.5 + 0 * s, 0.0, 1.0, builtin_family("floor"), 1.0, 3.0)
        assert b == pytest.approx(math.e, rel=1e-9)

    def test_inapplicable(self):
        with pytest.raises(InapplicableBoundError, match="w ="):
            gronwall_bound(0.0, 3.0, 1.0, builtin_family("floor_half"), 0.0, 2.0)

    def test_reversed_interval(self):
        with pytest.raises(DomainError):
            gronwall_bound(1.0, 0.0, 1.0, builtin_family("floor"), 2.0, 1.0)

    def test_trivial_interval(self):
        assert gronwall_bound(1.0, 1.0, 3.5, builtin_family("floor"), 1.0, 1.0) == 3.5

    def test_bounds_a_solution(self):
        # |x(t)| <= |xi| exp(...) with eta1 = M + l1 and eta2 = M0 + l2
        sys_, f = make_system(), make_nonlinearity()
        traj = integrate_depcag(sys_, f, 0.0, [1.5], 4.0)
        bound = gronwall_bound(1.01, 0.1, 1.5 + 4.0 * 0.01, sys_.grid, 0.0, 4.0)
        assert abs(traj.at([4.0])[0, 0, 0]) <= bound


class TestRates:
    def test_reference_values(self):
        r = rates(1.0, 0.1, 0.0, 0.0, 1.0)
        assert r.F1 == pytest.approx(math.e - 1)
        assert r.v == pytest.approx(0.1 * (math.e - 1))
        assert r.v == pytest.approx(0.171828, abs=1e-6)
        assert r.p1 == pytest.approx(1 + 0.1 * math.e / (1 - 0.1 * (math.e - 1)))
        assert r.p1 == pytest.approx(1.32823, abs=1e-5)
        assert r.p2 == pytest.approx(r.p1)

    def test_zero_rate_limit(self):
        r = rates(0.0, 0.5, 0.0, 0.0, 1.0)
        assert r.F1 == 1.0
        assert r.v == pytest.approx(0.5)
        assert r.p2_tilde == pytest.approx(1.0)

    def test_undefined_rates(self):
        r = rates(1.0, 0.7, 0.0, 0.0, 1.0)
        assert r.v >= 1
        assert r.p1 is None
        assert r.p2 is None


class TestConditions:
    def test_general_regime(self):
        sys_ = make_system(family="floor")
        dicho = DichotomySpec(P=[[1.0]], K=1.2, alpha=0.5)
        report = evaluate_conditions(sys_, make_nonlinearity(), dicho, math.e)
        assert report.regime == Regime.GENERAL
        assert report.rho_star == pytest.approx(math.exp(1.5))
        assert report.fpt_lhs == pytest.approx(2 * 0.01 * 1.2 * math.exp(1.5))
        assert report.gamma_star == pytest.approx(report.fpt_lhs / 0.5)
        assert report.flags == {"fpt": True, "schema0": True, "schema0B": True, "alfa": True}
        assert report.strong_ok and report.holder_ok

    def test_large_lipschitz_breaks_fixed_point(self):
        dicho = DichotomySpec(P=[[1.0]], K=1.0, alpha=0.5)
        report = evaluate_conditions(make_system(family="floor"), make_nonlinearity(ell1=0.5), dicho, math.e)
        assert not report.flags["fpt"]
        assert not report.strong_ok

    def test_delay_budget(self):
        dicho = DichotomySpec(P=[[1.0]], K=1.0, alpha=0.1)
        report = evaluate_conditions(make_system(b="0.7", family="floor"), None, dicho, math.e)
        assert not report.flags["schema0"]
        assert report.alpha_upper is None

    def test_ode_limit(self):
        dicho = DichotomySpec(P=[[1.0]], K=1.0, alpha=0.5)
        report = evaluate_conditions(make_system(b="0", family="floor"), make_nonlinearity(), dicho, math.e)
        assert report.regime == Regime.ODE_LIMIT
        assert report.flags["alfa"]  # alpha < M
        assert report.v0 == pytest.approx(0.0)

    def test_pure_pca(self):
        dicho = DichotomySpec(P=[[1.0]], K=1.0, alpha=0.5)
        f = make_nonlinearity("0.01*tanh(y1)", ell1=0.0, ell2=0.01)
        report = evaluate_conditions(make_system(a="0", b="-0.5", family="floor"), f, dicho, 1.0)
        assert report.regime == Regime.PURE_PCA
        assert report.p1_applicable == report.p1_tilde
        assert report.u_tilde0 == pytest.approx(0.51)


class TestEnvelope:
    def test_nonlinear_envelope(self):
        pairs = [([0.5], [0.6]), ([-1.0], [-0.9]), ([0.0], [0.01])]
        report = continuity_envelope_check(make_system(), make_nonlinearity(), pairs, 0.0, [-2.0, 0.5, 3.0])
        assert report.p_name == "p1"
        assert report.passed
        assert len(report.rows) == 9
        assert all(r.margin >= 0 for r in report.rows)

    def test_linear_envelope(self):
        report = continuity_envelope_check(make_system(), None, [([1.0], [2.0])], 0.5, [2.5])
        assert report.p_name == "p2"
        assert report.passed

    def test_pure_pca_uses_tilde_rate(self):
        f = make_nonlinearity("0.01*tanh(y1)", ell1=0.0, ell2=0.01)
        report = continuity_envelope_check(make_system(a="0", b="-0.5", family="floor"), f,
                                           [([1.0], [1.1])], 0.0, [2.0])
        assert report.p_name == "p1_tilde"
        assert report.passed

    def test_undefined_rate(self):
        with pytest.raises(InapplicableBoundError, match="p2"):
            continuity_envelope_check(make_system(b="0.7", family="floor"), None, [([1.0], [2.0])], 0.0, [1.0])
