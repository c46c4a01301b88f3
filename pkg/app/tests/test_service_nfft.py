import unittest
from unittest.mock import patch

import numpy as np

from src.conf.config import settings
from src.exceptions.exceptions import ParameterError, RangeError, ShapeError
from src.services.nfft import (FrequencyIndexSet, NfftPlan, direct_adjoint_ndft, direct_ndft, nfft_adjoint,
                               nfft_forward, nfft_forward_real, plan_nfft)


def random_nodes(rng, n, d):
    return rng.random((n, d)) - 0.5


def random_coefficients(rng, N, d):
    shape = (N,) * d
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


class TestFrequencyIndexSet(unittest.TestCase):

    def test_frequencies_lexicographic(self):
        index_set = FrequencyIndexSet(2, 4)
        frequencies = index_set.frequencies()
        self.assertEqual(frequencies.shape, (16, 2))
        np.testing.assert_array_equal(frequencies[0], [-2, -2])
        np.testing.assert_array_equal(frequencies[1], [-2, -1])
        np.testing.assert_array_equal(frequencies[-1], [1, 1])

    def test_rejects_odd_bandwidth(self):
        with self.assertRaises(ParameterError):
            FrequencyIndexSet(1, 5)

    def test_rejects_dimension(self):
        with self.assertRaises(ParameterError):
            FrequencyIndexSet(4, 8)


class TestNfft(unittest.TestCase):

    def setUp(self):
        self.rng = np.random.default_rng(11)

    def test_forward_matches_direct_sum(self):
        for d, N, n in [(1, 16, 256), (2, 16, 200), (3, 8, 150)]:
            with self.subTest(d=d):
                nodes = random_nodes(self.rng, n, d)
                fhat = random_coefficients(self.rng, N, d)
                plan = plan_nfft(d, N, 8, nodes)
                error = np.max(np.abs(nfft_forward(plan, fhat) - direct_ndft(nodes, fhat)))
                self.assertLessEqual(error, 1e-12 * np.sum(np.abs(fhat)))

    def test_adjoint_matches_direct_sum(self):
        for d, N, n in [(1, 16, 256), (2, 12, 200), (3, 8, 150)]:
            with self.subTest(d=d):
                nodes = random_nodes(self.rng, n, d)
                x = self.rng.standard_normal(n) + 1j * self.rng.standard_normal(n)
                plan = plan_nfft(d, N, 8, nodes)
                error = np.max(np.abs(nfft_adjoint(plan, x) - direct_adjoint_ndft(nodes, x, N)))
                self.assertLessEqual(error, 1e-12 * np.sum(np.abs(x)))

    def test_adjoint_pair_inner_products(self):
        nodes = random_nodes(self.rng, 120, 2)
        plan = NfftPlan(2, 16, 8, nodes)
        fhat = random_coefficients(self.rng, 16, 2)
        x = self.rng.standard_normal(120) + 1j * self.rng.standard_normal(120)
        left = np.vdot(x, plan.forward(fhat))
        right = np.vdot(plan.adjoint(x), fhat)
        self.assertLessEqual(abs(left - right), 1e-10 * abs(left))

    def test_zero_input(self):
        nodes = random_nodes(self.rng, 10, 1)
        plan = plan_nfft(1, 8, 4, nodes)
        np.testing.assert_array_equal(plan.forward(np.zeros(8)), np.zeros(10))

    def test_constant_coefficient(self):
        nodes = random_nodes(self.rng, 30, 2)
        fhat = np.zeros((8, 8), dtype=complex)
        fhat[4, 4] = 2.5
        values = plan_nfft(2, 8, 6, nodes).forward(fhat)
        np.testing.assert_allclose(values, 2.5, atol=1e-12)

    def test_node_at_upper_boundary_rejected(self):
        with self.assertRaises(RangeError):
            plan_nfft(1, 8, 4, np.array([0.1, 0.5]))

    def test_node_at_lower_boundary_accepted(self):
        nodes = np.array([[-0.5], [0.25]])
        fhat = random_coefficients(self.rng, 8, 1)
        values = plan_nfft(1, 8, 8, nodes).forward(fhat)
        np.testing.assert_allclose(values, direct_ndft(nodes, fhat), atol=1e-12 * np.sum(np.abs(fhat)))

    def test_shape_mismatch(self):
        plan = plan_nfft(1, 8, 4, random_nodes(self.rng, 10, 1))
        with self.assertRaises(ShapeError):
            plan.forward(np.zeros(6))
        with self.assertRaises(ShapeError):
            plan.adjoint(np.zeros(9))

    def test_invalid_cutoff(self):
        with self.assertRaises(ParameterError):
            NfftPlan(1, 8, 0, random_nodes(self.rng, 4, 1))

    def test_threaded_chunks_match_serial(self):
        nodes = random_nodes(self.rng, 500, 2)
        fhat = random_coefficients(self.rng, 16, 2)
        x = self.rng.standard_normal(500)
        with patch.object(settings, "nfft_chunk_size", 64):
            serial = NfftPlan(2, 16, 6, nodes, workers=1)
            threaded = NfftPlan(2, 16, 6, nodes, workers=4)
        np.testing.assert_allclose(threaded.forward(fhat), serial.forward(fhat), rtol=0, atol=1e-13)
        np.testing.assert_array_equal(threaded.adjoint(x), serial.adjoint(x))

    def test_forward_real_for_hermitian_coefficients(self):
        nodes = random_nodes(self.rng, 50, 1)
        fhat = np.zeros(8, dtype=complex)
        fhat[4 + 1], fhat[4 - 1] = 1 + 2j, 1 - 2j
        with patch.object(settings, "debug_checks", True):
            values = nfft_forward_real(plan_nfft(1, 8, 6, nodes), fhat)
        expected = 2 * np.cos(2 * np.pi * nodes[:, 0]) - 4 * np.sin(2 * np.pi * nodes[:, 0])
        np.testing.assert_allclose(values, expected, atol=1e-11)


if __name__ == '__main__':
    unittest.main()
