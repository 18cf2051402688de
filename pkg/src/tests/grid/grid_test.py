import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from depcag.engine.error import GridConstraintError, OutsideWindowError
from depcag.model.grid import IntervalKind, builtin_family, explicit_window


def make_window():
    # intervals [0,1), [1,2.5), [2.5,3) indexed from 4
    return explicit_window(t=[0.0, 1.0, 2.5, 3.0], zeta=[0.0, 2.0, 3.0], first_index=4)


@pytest.mark.parametrize("name, params, t_k, zeta_k, theta", [
    ("floor", [], 3.0, 3.0, 1.0),
    ("floor_minus_j", [0], 3.0, 3.0, 1.0),
    ("floor_plus_j", [1], 3.0, 4.0, 1.0),
    ("floor_half", [], 3.0, 3.5, 1.0),
    ("even_round", [], 6.0, 7.0, 2.0),
    ("alpha_h", [0.5, 0.4], 0.6, 0.6, 0.2),
    ("m_j", [3, 1], 8.0, 9.0, 3.0),
])
def test_family_breakpoints(name, params, t_k, zeta_k, theta):
    grid = builtin_family(name, params)
    assert grid.t(3) == pytest.approx(t_k)
    assert grid.zeta(3) == pytest.approx(zeta_k)
    assert grid.theta == pytest.approx(theta)


def test_floor_gamma_is_floor():
    grid = builtin_family("floor")
    ts = np.array([-2.5, -1.0, -0.25, 0.0, 0.999, 1.0, 7.3])
    assert np.array_equal(grid.gamma(ts), np.floor(ts))


def test_tie_belongs_to_next_interval():
    grid = builtin_family("floor_half")
    assert grid.interval_index(2.0) == 2
    assert grid.gamma(2.0) == pytest.approx(2.5)
    assert grid.interval_index(math.nextafter(2.0, 0.0)) == 1


@pytest.mark.parametrize("name, params", [
    ("floor_minus_j", [1]),
    ("floor_minus_j", [3]),
    ("floor_plus_j", [2]),
    ("m_j", [1, 1]),
    ("m_j", [1, 2]),
    ("m_j", [2, 0]),
    ("alpha_h", [0.0, 1.0]),
])
def test_b1_violations_rejected(name, params):
    with pytest.raises(GridConstraintError):
        builtin_family(name, params)


def test_unknown_family():
    with pytest.raises(GridConstraintError, match="unknown family"):
        builtin_family("ceiling")


def test_wrong_param_count():
    with pytest.raises(GridConstraintError, match="takes 1 parameter"):
        builtin_family("floor_plus_j", [])


def test_non_integer_j():
    with pytest.raises(GridConstraintError, match="non-negative integer"):
        builtin_family("floor_plus_j", [0.5])


@pytest.mark.parametrize("name, params, kind", [
    ("floor", [], IntervalKind.DELAYED),
    ("floor_plus_j", [1], IntervalKind.ADVANCED),
    ("floor_half", [], IntervalKind.MIXED),
    ("even_round", [], IntervalKind.MIXED),
])
def test_classify(name, params, kind):
    assert builtin_family(name, params).classify(0) == kind


@pytest.mark.parametrize("name, params", [
    ("floor", []), ("floor_half", []), ("even_round", []), ("m_j", [5, 2]), ("alpha_h", [2.0, 0.25]),
])
def test_builtin_families_satisfy_conditions(name, params):
    verdict = builtin_family(name, params).verify_conditions(-20, 20)
    assert verdict == {"B1": True, "B2": True, "B3": True, "B4": True}


def test_count_breakpoints_is_strict():
    grid = builtin_family("floor")
    assert grid.count_breakpoints(0.5, 3.5) == 3
    assert grid.count_breakpoints(0.0, 3.0) == 2
    assert grid.count_breakpoints(0.2, 0.8) == 0


def test_count_breakpoints_rejects_reversed_interval():
    with pytest.raises(GridConstraintError):
        builtin_family("floor").count_breakpoints(2.0, 1.0)


class TestExplicitWindow:
    def test_indices_and_gamma(self):
        grid = make_window()
        assert grid.index_range() == (4, 6)
        assert grid.interval_index(1.0) == 5
        assert grid.gamma(1.7) == pytest.approx(2.0)
        assert grid.t(7) == pytest.approx(3.0)
        assert grid.theta == pytest.approx(1.5)

    def test_classify(self):
        grid = make_window()
        assert grid.classify(4) == IntervalKind.DELAYED
        assert grid.classify(5) == IntervalKind.MIXED
        assert grid.classify(6) == IntervalKind.ADVANCED

    def test_verify_conditions(self):
        assert all(make_window().verify_conditions(4, 6).values())

    @pytest.mark.parametrize("t", [-0.1, 3.0, 10.0])
    def test_time_outside_window(self, t):
        with pytest.raises(OutsideWindowError):
            make_window().interval_index(t)

    def test_index_outside_window(self):
        with pytest.raises(OutsideWindowError):
            make_window().zeta(7)
        with pytest.raises(OutsideWindowError):
            make_window().verify_conditions(3, 6)

    def test_zeta_outside_interval_rejected(self):
        with pytest.raises(GridConstraintError, match="fails at index 1"):
            explicit_window(t=[0.0, 1.0, 2.0], zeta=[0.5, 2.5])

    def test_non_increasing_rejected(self):
        with pytest.raises(GridConstraintError, match="strictly increasing"):
            explicit_window(t=[0.0, 1.0, 1.0], zeta=[0.0, 1.0])

    def test_length_mismatch_rejected(self):
        with pytest.raises(GridConstraintError, match="len\\(t\\) = len\\(zeta\\) \\+ 1"):
            explicit_window(t=[0.0, 1.0, 2.0], zeta=[0.0])

    def test_theta_too_small_rejected(self):
        with pytest.raises(GridConstraintError, match="B4"):
            explicit_window(t=[0.0, 1.0, 3.0], zeta=[0.0, 1.0], theta=1.0)


@settings(max_examples=200, deadline=None)
@given(
    family=st.sampled_from([("floor", []), ("floor_half", []), ("even_round", []),
                            ("floor_plus_j", [1]), ("m_j", [3, 1]), ("alpha_h", [0.7, 0.3])]),
    t=st.floats(min_value=-1e4, max_value=1e4, allow_nan=False),
)
def test_interval_membership_property(family, t):
    grid = builtin_family(*family)
    k = grid.interval_index(t)
    assert grid.t(k) <= t < grid.t(k + 1)
    assert grid.t(k) <= grid.gamma(t) <= grid.t(k + 1)
