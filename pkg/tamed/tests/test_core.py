from hypothesis import given
from hypothesis.strategies import floats
import numpy as np
import pytest

from tamed._core import (
    LineFit,
    atomic_write,
    format_float,
    frozen_array,
    trapezoid_error,
)


@given(
    slope=floats(min_value=-100, max_value=100),
    intercept=floats(min_value=-100, max_value=100),
)
def test_line_fit_recovers_an_exact_line(slope, intercept):
    x = np.linspace(0, 1, 7)
    fit = LineFit.through(x, slope * x + intercept)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
    assert fit.intercept == pytest.approx(intercept, abs=1e-9)


def test_line_fit_r_squared():
    x = np.arange(6.0)
    exact = LineFit.through(x, 3 * x - 1)
    noisy = LineFit.through(x, [0.0, 2.0, 1.0, 4.0, 3.0, 5.0])
    assert exact.r_squared == pytest.approx(1.0)
    assert 0 < noisy.r_squared < 1


def test_line_fit_of_a_constant_explains_nothing():
    fit = LineFit.through(np.arange(4.0), np.full(4, 2.5))
    assert fit.slope == 0
    assert fit.r_squared == 0


def test_trapezoid_error_vanishes_for_lines():
    times = np.linspace(0, 1, 11)
    assert trapezoid_error(times, 2 * times + 1, 0.1) == pytest.approx(
        0,
        abs=1e-12,
    )


def test_trapezoid_error_bounds_the_rule_on_a_parabola():
    times = np.linspace(0, 1, 11)
    rule = np.trapezoid(times**2, times)
    estimate = trapezoid_error(times, times**2, 0.1)
    assert abs(rule - 1 / 3) == pytest.approx(estimate)


def test_trapezoid_error_needs_three_points():
    assert trapezoid_error(np.array([0.0, 1.0]), np.array([0.0, 5.0]), 1) == 0


def test_frozen_array_is_a_readonly_copy():
    original = np.zeros(3)
    frozen = frozen_array(original)
    original[0] = 1
    assert frozen[0] == 0
    with pytest.raises(ValueError):
        frozen[0] = 2


@pytest.mark.parametrize("value", [0.1, 1e-300, -2.5, 3.0])
def test_format_float_round_trips(value):
    assert float(format_float(value)) == value


def test_atomic_write_leaves_no_temporary_files(tmp_path):
    path = tmp_path / "nested" / "out.txt"
    atomic_write(path, "first")
    atomic_write(path, b"second")
    assert path.read_text() == "second"
    assert [each.name for each in path.parent.iterdir()] == ["out.txt"]
