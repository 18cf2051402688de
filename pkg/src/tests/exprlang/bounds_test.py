import math

import pytest

from depcag.engine.error import DomainError
from depcag.exprlang import bound_abs, bound_matrix_norm, lipschitz_estimate, parse
from depcag.model.bounds import BoundMethod


def test_bound_abs_sine():
    b = bound_abs(parse("sin(t)"), {"t": (0.0, 3.141592653589793)}, 1001, 1.0)
    assert b.value == pytest.approx(1.0, abs=1e-9)
    assert b.method == BoundMethod.GRID_SAMPLE
    assert b.samples == 1001


def test_inflation_is_applied():
    plain = bound_abs(parse("2*t"), {"t": (-1.0, 1.0)}, 200, 1.0)
    inflated = bound_abs(parse("2*t"), {"t": (-1.0, 1.0)}, 200, 1.25)
    assert plain.value == pytest.approx(2.0)
    assert inflated.value == pytest.approx(2.5)


def test_vector_bound_uses_euclidean_norm():
    assert bound_abs([parse("3"), parse("4")], {}, 100, 1.0).value == pytest.approx(5.0)


def test_block_range_covers_indexed_variables():
    b = bound_abs(parse("x1 + x2"), {"x": (-1.0, 1.0)}, 400, 1.0)
    assert b.value == pytest.approx(2.0)


def test_lipschitz_of_scaled_tanh():
    b = lipschitz_estimate(parse("0.01*tanh(x1)"), "x", {"x": (-2.0, 2.0)}, 1000, 1.0)
    assert 0.0099 < b.value <= 0.01


def test_lipschitz_in_absent_block_is_zero():
    b = lipschitz_estimate(parse("0.01*tanh(x1)"), "y", {"x": (-2.0, 2.0)}, 1000, 1.0)
    assert b.value == 0.0


def test_lipschitz_of_linear_map_in_two_variables():
    # ||(x1 + x2)|| has Lipschitz constant sqrt(2) in the Euclidean norm
    b = lipschitz_estimate(parse("x1 + x2"), "x", {"x": (-1.0, 1.0)}, 400, 1.0)
    assert b.value == pytest.approx(2 ** 0.5, rel=1e-9)


def test_matrix_norm():
    entries = [[parse("cos(t)"), parse("0")], [parse("0"), parse("2")]]
    assert bound_matrix_norm(entries, (0.0, 1.0), 200, 1.0).value == pytest.approx(2.0)


@pytest.mark.parametrize("samples, inflation", [(50, 1.0), (1000, 0.9)])
def test_budget_is_checked(samples, inflation):
    with pytest.raises(DomainError):
        bound_abs(parse("t"), {"t": (0.0, 1.0)}, samples, inflation)


def test_missing_range():
    with pytest.raises(DomainError, match="no sampling range for variable 'y1'"):
        bound_abs(parse("y1"), {"x": (0.0, 1.0)}, 100, 1.0)


def test_unknown_block():
    with pytest.raises(DomainError, match="'x' or 'y'"):
        lipschitz_estimate(parse("t"), "t", {"t": (0.0, 1.0)}, 100, 1.0)


def test_lipschitz_block_sampled_at_full_density():
    # an even split of 1000 samples over t, x1, y1 would leave 10 points along x1
    e = parse("tanh(10*x1) + 0.1*sin(t)*y1")
    ranges = {"t": (-1.0, 1.0), "x": (-2.0, 2.0), "y": (-1.0, 1.0)}
    assert 9.9 < lipschitz_estimate(e, "x", ranges, 1000, 1.0).value <= 10.0
    assert lipschitz_estimate(e, "y", ranges, 1000, 1.0).value == pytest.approx(0.1 * math.sin(1.0), rel=1e-9)
