import math
import unittest

import numpy as np
from pydantic import ValidationError

from src.entity.models import KernelFamily
from src.exceptions.exceptions import ParameterError
from src.schemas.schemas import KernelSpec
from src.services.kernels import (eval_kernel, eval_regularized, kernel_approx_error, kernel_derivatives,
                                  kernel_fourier_coefficients, regularize, taylor_coefficients, two_point_taylor)


class TestEvalKernel(unittest.TestCase):

    def test_gaussian_at_width(self):
        self.assertAlmostEqual(eval_kernel(KernelSpec(sigma=3.5), 3.5), math.exp(-1.0), places=15)

    def test_values_at_origin(self):
        self.assertEqual(eval_kernel(KernelSpec(sigma=2.0), 0.0), 1.0)
        self.assertEqual(eval_kernel(KernelSpec(family=KernelFamily.laplacian_rbf, sigma=2.0), 0.0), 1.0)
        self.assertAlmostEqual(eval_kernel(KernelSpec(family=KernelFamily.multiquadric, c=0.5), 0.0), 0.5)
        self.assertAlmostEqual(eval_kernel(KernelSpec(family=KernelFamily.inverse_multiquadric, c=0.5), 0.0), 2.0)

    def test_multiquadric(self):
        self.assertAlmostEqual(eval_kernel(KernelSpec(family=KernelFamily.multiquadric, c=3.0), 4.0), 5.0)
        self.assertAlmostEqual(eval_kernel(KernelSpec(family=KernelFamily.inverse_multiquadric, c=3.0), 4.0), 0.2)

    def test_array_input_keeps_shape(self):
        values = eval_kernel(KernelSpec(sigma=1.0), np.zeros((2, 3)))
        self.assertEqual(values.shape, (2, 3))

    def test_negative_radius(self):
        with self.assertRaises(ParameterError):
            eval_kernel(KernelSpec(sigma=1.0), -0.1)

    def test_shape_parameter_required(self):
        with self.assertRaises(ValidationError):
            KernelSpec(family=KernelFamily.gaussian)
        with self.assertRaises(ValidationError):
            KernelSpec(family=KernelFamily.multiquadric, sigma=1.0)
        with self.assertRaises(ValidationError):
            KernelSpec(sigma=0.0)


class TestTaylor(unittest.TestCase):

    def test_gaussian_derivatives_at_origin(self):
        derivatives = kernel_derivatives(KernelSpec(sigma=1.0), 0.0, 4)
        np.testing.assert_allclose(derivatives, [1.0, 0.0, -2.0, 0.0, 12.0], atol=1e-12)

    def test_coefficients_reproduce_kernel(self):
        for spec in (KernelSpec(sigma=0.7), KernelSpec(family=KernelFamily.laplacian_rbf, sigma=0.4),
                     KernelSpec(family=KernelFamily.multiquadric, c=0.3),
                     KernelSpec(family=KernelFamily.inverse_multiquadric, c=0.3)):
            with self.subTest(family=spec.family):
                coefficients = taylor_coefficients(spec, 0.3, 12)
                h = 0.01
                approx = sum(coefficient * h ** i for i, coefficient in enumerate(coefficients))
                self.assertAlmostEqual(approx, eval_kernel(spec, 0.31), places=12)

    def test_two_point_taylor_p1_is_constant(self):
        spec = KernelSpec(sigma=1.0)
        blend = two_point_taylor(spec, 0.125, 1)
        self.assertAlmostEqual(blend(0.375), eval_kernel(spec, 0.375), places=13)
        self.assertAlmostEqual(blend(0.5), eval_kernel(spec, 0.375), places=13)

    def test_two_point_taylor_endpoint_conditions(self):
        spec = KernelSpec(sigma=1.0)
        for p in (2, 4, 6):
            with self.subTest(p=p):
                blend = two_point_taylor(spec, 0.125, p)
                r0 = 0.375
                derivatives = kernel_derivatives(spec, r0, p - 1)
                for order in range(p):
                    self.assertAlmostEqual(blend.deriv(order)(r0) if order else blend(r0), derivatives[order],
                                           delta=1e-8 * max(1.0, abs(derivatives[order])))
                for order in range(1, p + 1):
                    self.assertAlmostEqual(blend.deriv(order)(0.5), 0.0, places=6)

    def test_two_point_taylor_invalid(self):
        spec = KernelSpec(sigma=1.0)
        with self.assertRaises(ParameterError):
            two_point_taylor(spec, 0.0, 2)
        with self.assertRaises(ParameterError):
            two_point_taylor(spec, 0.1, 9)


class TestRegularizedKernel(unittest.TestCase):

    def test_truncation_without_boundary_region(self):
        spec = KernelSpec(sigma=1.0)
        kr = regularize(spec, 0.0, 3)
        self.assertAlmostEqual(eval_regularized(kr, np.array([0.3, 0.0])), eval_kernel(spec, 0.3))
        self.assertAlmostEqual(eval_regularized(kr, np.array([0.4, 0.4])), eval_kernel(spec, 0.5))

    def test_regularized_is_continuous(self):
        spec = KernelSpec(family=KernelFamily.laplacian_rbf, sigma=0.3)
        kr = regularize(spec, 0.1, 4)
        r = np.array([0.4 - 1e-9, 0.4 + 1e-9, 0.5 - 1e-9, 0.5 + 1e-9])
        values = kr.radial(r)
        self.assertAlmostEqual(values[0], values[1], places=7)
        self.assertAlmostEqual(values[2], values[3], places=7)

    def test_invalid_width(self):
        with self.assertRaises(ParameterError):
            regularize(KernelSpec(sigma=1.0), 0.5, 2)


class TestFourierCoefficients(unittest.TestCase):

    def test_coefficients_are_real_and_symmetric(self):
        coefficients = kernel_fourier_coefficients(regularize(KernelSpec(sigma=0.2), 0.0625, 4), 16, 2)
        values = coefficients.values
        self.assertEqual(values.shape, (16, 16))
        self.assertLess(np.max(np.abs(values.imag)), 1e-14)
        np.testing.assert_allclose(values[1:, 1:], values[1:, 1:][::-1, ::-1], atol=1e-14)
        self.assertFalse(values.flags.writeable)

    def test_interpolates_on_grid(self):
        kr = regularize(KernelSpec(sigma=0.3), 0.125, 3)
        coefficients = kernel_fourier_coefficients(kr, 16, 1)
        points = np.arange(-8, 8)[:, None] / 16
        error = kernel_approx_error(KernelSpec(sigma=0.3), coefficients, points=points[np.abs(points[:, 0]) <= 0.375])
        self.assertLess(error, 1e-12)

    def test_error_decreases_with_bandwidth(self):
        spec = KernelSpec(sigma=0.15)
        errors = []
        for N in (16, 32, 64):
            kr = regularize(spec, 4 / N, 4)
            errors.append(kernel_approx_error(spec, kernel_fourier_coefficients(kr, N, 2), sample_count=300))
        self.assertGreater(errors[0], errors[1])
        self.assertGreater(errors[1], errors[2])

    def test_error_is_deterministic(self):
        spec = KernelSpec(sigma=0.2)
        coefficients = kernel_fourier_coefficients(regularize(spec, 0.125, 2), 16, 2)
        self.assertEqual(kernel_approx_error(spec, coefficients, 200, seed=4),
                         kernel_approx_error(spec, coefficients, 200, seed=4))

    def test_sample_count_invalid(self):
        spec = KernelSpec(sigma=0.2)
        coefficients = kernel_fourier_coefficients(regularize(spec, 0.125, 2), 8, 1)
        with self.assertRaises(ParameterError):
            kernel_approx_error(spec, coefficients, 0)


if __name__ == '__main__':
    unittest.main()
