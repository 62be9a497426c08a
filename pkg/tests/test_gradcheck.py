"""The finite-difference checker itself, on functions with known gradients."""

import numpy as np
import pytest

from tofdepth.gradcheck import (
    GradCheckReport,
    check_gradients,
    max_relative_error,
    numerical_gradient,
)


def test_numerical_gradient_quadratic():
    x = np.array([1.0, -2.0, 3.0])

    def f():
        return float(np.sum(x * x))

    np.testing.assert_allclose(numerical_gradient(f, x), 2 * x, rtol=1e-9)


def test_numerical_gradient_restores_input():
    x = np.array([0.5, 0.25])
    before = x.copy()
    numerical_gradient(lambda: float(x.sum()), x)
    np.testing.assert_array_equal(x, before)


def test_max_relative_error_floor():
    # both gradients tiny: difference is FD noise, error must not blow up
    assert max_relative_error(np.array([1e-12]), np.array([3e-12])) < 1e-5
    # large disagreement is caught
    assert max_relative_error(np.array([1.0]), np.array([2.0])) == pytest.approx(0.5)


def test_check_gradients_passes_correct_gradient():
    x = np.array([0.3, -0.7, 1.1])
    params = {"x": x}

    def loss():
        return float(np.sum(np.sin(x)))

    report = check_gradients(loss, params, {"x": np.cos(x)})
    assert report.passed
    assert report.max_rel_error < 1e-6
    assert "PASS" in str(report)


def test_check_gradients_catches_wrong_gradient():
    x = np.array([0.3, -0.7, 1.1])

    def loss():
        return float(np.sum(np.sin(x)))

    report = check_gradients(loss, {"x": x}, {"x": 1.5 * np.cos(x)})
    assert not report.passed
    assert "FAIL" in str(report)


def test_check_gradients_requires_float64():
    x = np.array([1.0], dtype=np.float32)
    with pytest.raises(TypeError, match="float64"):
        check_gradients(lambda: float(x[0]), {"x": x}, {"x": np.ones(1)})


def test_report_tracks_per_param():
    report = GradCheckReport(tolerance=1e-4)
    assert report.passed  # vacuous pass before any parameter is checked
