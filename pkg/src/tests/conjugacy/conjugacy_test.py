import math

import numpy as np
import pytest

from depcag.engine.conjugacy import (
    ConjugacyEngine, certify_inverse, certify_solution_mapping, holder_certify, holder_constants,
    tolerance_scaling, uniform_continuity_certify,
)
from depcag.engine.error import ConditionViolationError, DomainError
from depcag.model.bounds import CertifiedBound
from depcag.model.dichotomy import DichotomySpec
from depcag.model.grid import builtin_family
from depcag.model.system import LinearSystem, Nonlinearity

RANGES = {"t": (-50.0, 50.0), "x": (-2.0, 2.0), "y": (-2.0, 2.0)}

pytestmark = pytest.mark.timeout(300)


def make_system(a="-1", b="0.1"):
    return LinearSystem.build([[a]], [[b]], builtin_family("floor"))


def make_nonlinearity(ell1=0.01):
    bound = CertifiedBound.analytic
    return Nonlinearity.certify([f"{ell1}*tanh(x1)"], RANGES, 1000, 1.1, mu=bound(ell1),
                                ell1=bound(ell1), ell2=bound(0.0))


def make_engine(f=None, K=1.2, K_auto=False):
    dicho = DichotomySpec(P=[[1.0]], K=K, alpha=0.5, K_auto=K_auto)
    return ConjugacyEngine.build(make_system(), f or make_nonlinearity(), dicho, (-1.0, 1.0), horizon_T=20.0)


@pytest.fixture(scope="module")
def engine():
    return make_engine()


class TestBuild:
    def test_constants(self, engine):
        rho_star = math.e * math.exp(0.5)
        assert engine.ctx.rho_star == pytest.approx(rho_star, rel=1e-9)
        assert engine.cond.gamma_star == pytest.approx(2 * 0.01 * 1.2 * rho_star / 0.5, rel=1e-9)
        assert engine.proximity_bound == pytest.approx(2 * 0.01 * 1.2 * rho_star / 0.5, rel=1e-9)
        assert engine.policy.horizon_T == 20.0

    def test_uncertified_K(self):
        with pytest.raises(ConditionViolationError, match="ED1"):
            make_engine(K_auto=True)

    def test_contraction_required(self):
        with pytest.raises(ConditionViolationError, match="FPT"):
            make_engine(f=make_nonlinearity(ell1=0.5))

    def test_picard_tol_must_be_positive(self, engine):
        with pytest.raises(DomainError):
            engine.with_picard_tol(0.0)


class TestMaps:
    @pytest.mark.parametrize("xi", [0.5, -1.0, 0.0])
    def test_H_stays_near_identity(self, engine, xi):
        v = engine.H_map(0.0, [xi])
        assert v.map == "H"
        assert abs(v.value[0] - xi) <= engine.proximity_bound + v.error_bar

    def test_H_fixes_the_origin(self, engine):
        # f(t, 0, 0) = 0, so x = 0 is a solution and chi vanishes along it
        assert engine.H_map(0.5, [0.0]).value[0] == pytest.approx(0.0, abs=1e-12)

    def test_L_stays_near_identity(self, engine):
        v = engine.L_map(0.0, [0.8])
        assert abs(v.value[0] - 0.8) <= engine.proximity_bound + v.error_bar
        assert v.iterations >= 1
        assert v.increments[-1] < engine.picard_tol

    def test_picard_increments_shrink(self, engine):
        v = engine.L_map(0.3, [1.0])
        assert len(v.increments) == v.iterations
        assert v.increments[-1] < v.increments[0]

    def test_H_is_identity_plus_chi(self, engine):
        chi = engine.chi(0.0, [0.5], 0.0)
        assert chi.map == "chi"
        assert engine.H_map(0.0, [0.5]).value[0] == pytest.approx(0.5 + chi.value[0], rel=1e-12)
        assert abs(chi.value[0]) <= engine.proximity_bound + chi.error_bar

    def test_L_is_identity_plus_vartheta(self, engine):
        theta = engine.vartheta(0.0, [0.8], 0.0)
        assert theta.map == "vartheta"
        assert engine.L_map(0.0, [0.8]).value[0] == pytest.approx(0.8 + theta.value[0], rel=1e-12)

    def test_batch_matches_single(self, engine):
        batch = engine.H_batch(0.0, [[0.5], [-1.0]])
        single = engine.H_map(0.0, [-1.0])
        assert batch.values[1][0] == pytest.approx(single.value[0], rel=1e-12)

    def test_dimension_checked(self, engine):
        with pytest.raises(DomainError, match="dimension"):
            engine.H_batch(0.0, [[1.0, 2.0]])

    def test_zero_nonlinearity_gives_identity(self):
        eng = make_engine(f=Nonlinearity.zero(1))
        assert eng.H_map(0.0, [0.7]).value == [0.7]
        assert eng.L_map(0.0, [0.7]).value == [0.7]
        assert eng.H_map(0.0, [0.7]).error_bar == 0.0


class TestConstantForcing:
    # x' = -x + mu0 with P = 1: G(t, s) = e^{-(t - s)} for s < t, so int G mu0 = mu0
    MU0 = 0.05

    @pytest.fixture(scope="class")
    def forced(self):
        bound = CertifiedBound.analytic
        f = Nonlinearity.certify([str(self.MU0)], RANGES, 1000, 1.1, mu=bound(self.MU0),
                                 ell1=bound(0.0), ell2=bound(0.0))
        dicho = DichotomySpec(P=[[1.0]], K=1.2, alpha=0.5)
        return ConjugacyEngine.build(make_system(b="0"), f, dicho, (-1.0, 1.0), horizon_T=20.0)

    @pytest.mark.parametrize("xi", [0.8, -1.5])
    def test_chi(self, forced, xi):
        assert forced.chi(0.0, [xi], 0.0).value[0] == pytest.approx(-self.MU0, abs=1e-6)

    @pytest.mark.parametrize("nu", [0.8, -1.5])
    def test_vartheta(self, forced, nu):
        v = forced.vartheta(0.5, [nu], 0.5)
        assert v.value[0] == pytest.approx(self.MU0, abs=1e-6)
        assert v.increments[-1] < forced.picard_tol

    def test_H(self, forced):
        assert forced.H_map(0.3, [0.4]).value[0] == pytest.approx(0.4 - self.MU0, abs=1e-6)

    def test_L(self, forced):
        assert forced.L_map(0.3, [0.4]).value[0] == pytest.approx(0.4 + self.MU0, abs=1e-6)


class TestCertification:
    def test_inverse(self, engine):
        report = certify_inverse(engine, [[0.5], [-1.0], [1.5]], 0.0)
        assert report.passed
        assert len(report.rows) == 3
        assert report.max_residual < 1e-3

    def test_solution_mapping(self, engine):
        report = certify_solution_mapping(engine, 0.0, [1.0], [-0.75, -0.25, 0.4, 0.9])
        assert report.passed
        assert report.max_residual <= report.residual_tolerance
        assert report.max_distance <= report.distance_bound + 1e-6

    def test_holder(self, engine):
        report = holder_certify(engine, 0.0, [1e-2, 1e-3], samples=3, seed=7)
        assert report.passed
        assert len(report.empirical) == 2 * 3 * 2
        e_H, C1, e_L, D1 = holder_constants(engine)
        assert report.exponent_H == pytest.approx(e_H)
        assert 0 < e_H < 1 and 0 < e_L < 1
        assert C1 > 1 and D1 > 1

    def test_holder_deltas_checked(self, engine):
        with pytest.raises(DomainError, match="deltas"):
            holder_certify(engine, 0.0, [0.5, 1.5])

    def test_uniform_continuity_with_suggested_horizon(self, engine):
        report = uniform_continuity_certify(engine, 0.0, 1e-2, pairs=5)
        c = engine.cond
        expected_L = math.log(8 * c.K * c.mu * c.rho_star / (c.alpha * 1e-2)) / c.alpha
        assert report.suggested_L == pytest.approx(expected_L)
        assert report.L_param == pytest.approx(expected_L)
        assert report.passed
        assert report.max_change_H < 1e-2

    def test_uniform_continuity_with_given_horizon(self, engine):
        report = uniform_continuity_certify(engine, 0.0, 1e-2, L_param=2.0, pairs=5)
        assert report.L_param == 2.0
        assert report.passed

    def test_uniform_continuity_inputs_checked(self, engine):
        with pytest.raises(DomainError):
            uniform_continuity_certify(engine, 0.0, -1.0)

    def test_tolerance_scaling(self, engine):
        report = tolerance_scaling(engine, [[0.5], [-0.5]], 0.0)
        assert report.tolerances == (engine.picard_tol, engine.picard_tol * 0.5)
        assert len(report.residuals) == 2
        assert all(np.isfinite(report.error_bars))
        assert len(report.ladder) == len(report.picard_errors) >= 3
        assert report.ladder[0] == engine.picard_tol
        assert report.picard_errors[-1] >= report.picard_errors[0]
        assert 0.2 <= report.ratio <= 0.9

    def test_tolerance_scaling_without_nonlinearity(self):
        report = tolerance_scaling(make_engine(f=Nonlinearity.zero(1)), [[0.5]], 0.0)
        assert report.ladder == []
        assert report.ratio is None
