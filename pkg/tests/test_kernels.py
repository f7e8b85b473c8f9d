import math

import numpy as np
import pytest

from kernels import (
    GridSpec,
    UnknownKernelError,
    eval_kernel,
    get_kernel,
    kernel_integral,
    kernel_l2_norm,
    tabulated_kernel,
    verify_condition_c,
)
from numerics import DomainError


class TestEvaluation:
    def test_gaussian_peak(self):
        assert eval_kernel(get_kernel("gaussian"), 0.0) == pytest.approx(0.3989423, abs=1e-7)

    def test_epanechnikov_value(self):
        assert eval_kernel(get_kernel("epanechnikov"), 0.5) == pytest.approx(0.5625)

    def test_compact_supports(self):
        assert eval_kernel(get_kernel("epanechnikov"), 1.2) == 0.0
        assert eval_kernel(get_kernel("uniform"), 0.6) == 0.0
        assert eval_kernel(get_kernel("uniform"), 0.4) == 1.0

    def test_vectorised(self):
        values = eval_kernel(get_kernel("gaussian"), np.array([-1.0, 1.0]))
        assert values[0] == values[1]

    def test_unknown_name(self):
        with pytest.raises(UnknownKernelError, match="sinc"):
            get_kernel("sinc")

    @pytest.mark.parametrize("name", ["gaussian", "epanechnikov", "uniform"])
    def test_unit_mass(self, name):
        assert kernel_integral(get_kernel(name)).value == pytest.approx(1.0, abs=1e-9)


class TestL2Norm:
    @pytest.mark.parametrize("name,expected", [
        ("gaussian", 1.0 / (2.0 * math.sqrt(math.pi))),
        ("epanechnikov", 0.6),
        ("uniform", 1.0),
    ])
    def test_closed_form_matches_quadrature(self, name, expected):
        kernel = get_kernel(name)
        assert kernel_l2_norm(kernel) == pytest.approx(expected, abs=1e-12)
        assert kernel_l2_norm(kernel, use_quadrature=True) == pytest.approx(expected, abs=1e-9)

    def test_gaussian_reference_value(self):
        assert kernel_l2_norm(get_kernel("gaussian")) == pytest.approx(0.2820948, abs=1e-7)


class TestConditionC:
    def test_gaussian_satisfies_all(self):
        report = verify_condition_c(get_kernel("gaussian"))
        assert report.as_tuple() == (True, True, True)
        assert report.integral == pytest.approx(1.0, abs=1e-9)

    def test_epanechnikov_fails_c3_at_support_edge(self):
        report = verify_condition_c(get_kernel("epanechnikov"))
        assert report.as_tuple() == (True, True, False)
        assert abs(abs(report.first_violation["C3"]) - 1.0) < 0.02

    def test_uniform_has_unbounded_derivative(self):
        report = verify_condition_c(get_kernel("uniform"))
        assert report.c1 is True
        assert report.c3 is False
        assert "derivative unbounded" in report.reasons["C3"]
        assert abs(abs(report.first_violation["C3"]) - 0.5) < 0.02

    def test_verdicts_agree_with_declared_flags(self):
        for name in ("gaussian", "epanechnikov", "uniform"):
            kernel = get_kernel(name)
            assert verify_condition_c(kernel).verdict == kernel.condition_c

    def test_only_gaussian_has_bounded_derivative(self):
        assert get_kernel("gaussian").has_bounded_derivative
        assert not get_kernel("epanechnikov").has_bounded_derivative
        assert not get_kernel("uniform").has_bounded_derivative

    def test_grid_too_coarse(self):
        with pytest.raises(DomainError):
            verify_condition_c(get_kernel("gaussian"), GridSpec(half_width=10.0))
        with pytest.raises(DomainError):
            verify_condition_c(get_kernel("gaussian"), GridSpec(n_points=101))


class TestTabulatedKernel:
    def test_renormalised_and_symmetric(self):
        kernel = tabulated_kernel("table", [0.0, 0.5, 1.0], [2.0, 1.5, 0.0])
        assert kernel_integral(kernel).value == pytest.approx(1.0, abs=1e-8)
        assert float(kernel(0.3)) == pytest.approx(float(kernel(-0.3)))
        assert float(kernel(1.5)) == 0.0
        assert kernel.condition_c.c1

    @pytest.mark.parametrize("knots,values", [
        ([0.0, 1.0], [1.0, 0.0]),
        ([0.5, 1.0, 2.0], [1.0, 0.5, 0.0]),
        ([0.0, 1.0, 0.5], [1.0, 0.5, 0.0]),
        ([0.0, 0.5, 1.0], [1.0, -0.5, 0.0]),
    ])
    def test_rejects_bad_tables(self, knots, values):
        with pytest.raises(DomainError):
            tabulated_kernel("bad", knots, values)
