import unittest

import numpy as np
import pytest

from src.entity.models import EstimateMode
from src.exceptions.exceptions import DegreePositivityError, ParameterError, ShapeError
from src.repository.datasets import gen_spiral
from src.schemas.schemas import FastsumParams, KernelSpec
from src.services.fastsum import kernel_block
from src.services.graphop import (apply_normalized, apply_sym_laplacian, build_adjacency_operator,
                                  estimate_eta_epsilon, propagation_bound)


def dense_adjacency(nodes, kernel):
    W = kernel_block(kernel, nodes, nodes)
    np.fill_diagonal(W, 0.0)
    inv_sqrt = 1.0 / np.sqrt(W.sum(axis=1))
    return inv_sqrt[:, None] * W * inv_sqrt[None, :]


def normalize(W):
    inv_sqrt = 1.0 / np.sqrt(W.sum(axis=1))
    return inv_sqrt[:, None] * W * inv_sqrt[None, :]


class TestAdjacencyOperator(unittest.TestCase):

    def setUp(self):
        self.cloud = gen_spiral(classes=5, per_class=40, seed=2)
        self.kernel = KernelSpec(sigma=3.5)
        self.x = np.random.default_rng(4).standard_normal(self.cloud.n)

    def test_exact_operator_matches_dense(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, exact=True)
        A = dense_adjacency(self.cloud.coordinates, self.kernel)
        np.testing.assert_allclose(apply_normalized(op, self.x), A @ self.x, atol=1e-12)
        np.testing.assert_allclose(apply_sym_laplacian(op, self.x), self.x - A @ self.x, atol=1e-12)

    def test_fast_operator_close_to_dense(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, FastsumParams.setup(3))
        A = dense_adjacency(self.cloud.coordinates, self.kernel)
        self.assertLess(np.max(np.abs(op.apply_normalized(self.x) - A @ self.x)), 1e-9 * np.sum(np.abs(self.x)))

    def test_perron_vector(self):
        for exact, tolerance in ((True, 1e-13), (False, 1e-8)):
            with self.subTest(exact=exact):
                op = build_adjacency_operator(self.cloud.coordinates, self.kernel, FastsumParams.setup(3), exact)
                v = op.perron_vector()
                self.assertLess(np.linalg.norm(op.apply_normalized(v) - v) / np.linalg.norm(v), tolerance)

    def test_operator_is_symmetric(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, FastsumParams.setup(2))
        y = np.random.default_rng(5).standard_normal(self.cloud.n)
        self.assertAlmostEqual(y @ op.apply_normalized(self.x), self.x @ op.apply_normalized(y), places=8)

    def test_degrees_are_read_only(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, exact=True)
        with self.assertRaises(ValueError):
            op.degrees[0] = 1.0

    def test_shape_mismatch(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, exact=True)
        with self.assertRaises(ShapeError):
            op.apply_normalized(np.ones(3))

    def test_isolated_node(self):
        nodes = np.array([[0.0, 0.0], [100.0, 0.0]])
        with self.assertRaises(DegreePositivityError) as context:
            build_adjacency_operator(nodes, KernelSpec(sigma=1.0), exact=True)
        self.assertEqual(context.exception.index, 0)

    def test_single_node(self):
        with self.assertRaises(ParameterError):
            build_adjacency_operator(np.zeros((1, 2)), KernelSpec(sigma=1.0), exact=True)

    def test_two_nodes(self):
        op = build_adjacency_operator(np.array([[0.0], [0.5]]), KernelSpec(sigma=1.0), exact=True)
        np.testing.assert_allclose(op.apply_normalized(np.array([1.0, 0.0])), [0.0, 1.0], atol=1e-15)


class TestPropagationBound(unittest.TestCase):

    def test_values(self):
        self.assertAlmostEqual(propagation_bound(0.5, 0.1), 0.75)
        self.assertEqual(propagation_bound(0.5, 0.0), 0.0)
        self.assertIsNone(propagation_bound(0.2, 0.2))
        self.assertIsNone(propagation_bound(0.2, 0.3))

    def test_invalid_eta(self):
        with self.assertRaises(ParameterError):
            propagation_bound(0.0, 0.1)

    def test_bound_holds_on_random_instances(self):
        rng = np.random.default_rng(2024)
        margins = []
        for _ in range(100):
            n = int(rng.integers(5, 60))
            W = rng.random((n, n))
            W = (W + W.T) / 2
            np.fill_diagonal(W, 0.0)
            E = rng.standard_normal((n, n)) * 10.0 ** rng.uniform(-6, -2)
            E = (E + E.T) / 2
            np.fill_diagonal(E, 0.0)
            norm_w = np.max(W.sum(axis=1))
            eta = np.min(W.sum(axis=1)) / norm_w
            eps = np.max(np.abs(E).sum(axis=1)) / norm_w
            if eps >= eta or np.any((W + E).sum(axis=1) <= 0):
                continue
            bound = propagation_bound(eta, eps)
            deviation = np.max(np.abs(normalize(W) - normalize(W + E)).sum(axis=1))
            self.assertLessEqual(deviation, bound)
            margins.append(bound - deviation)
        self.assertGreater(len(margins), 50)
        self.assertGreater(min(margins), 0.0)


class TestEstimates(unittest.TestCase):

    def setUp(self):
        self.cloud = gen_spiral(classes=5, per_class=30, seed=6)
        self.kernel = KernelSpec(sigma=3.5)

    def test_exact_estimate_of_exact_operator(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, exact=True)
        estimate = estimate_eta_epsilon(op, EstimateMode.exact)
        self.assertEqual(estimate.epsilon, 0.0)
        self.assertEqual(estimate.bound, 0.0)
        self.assertTrue(0.0 < estimate.eta <= 1.0)

    def test_sampled_estimate_improves_with_setup(self):
        coarse = estimate_eta_epsilon(build_adjacency_operator(self.cloud.coordinates, self.kernel,
                                                               FastsumParams.setup(1)), sample_count=300)
        fine = estimate_eta_epsilon(build_adjacency_operator(self.cloud.coordinates, self.kernel,
                                                             FastsumParams.setup(3)), sample_count=300)
        self.assertLess(fine.epsilon, coarse.epsilon)
        self.assertTrue(fine.valid)

    def test_exact_estimate_of_fast_operator(self):
        op = build_adjacency_operator(self.cloud.coordinates, self.kernel, FastsumParams.setup(2))
        estimate = estimate_eta_epsilon(op, EstimateMode.exact)
        self.assertEqual(estimate.mode, EstimateMode.exact)
        self.assertGreater(estimate.epsilon, 0.0)
        self.assertIsNotNone(estimate.bound)


@pytest.mark.slow
def test_perron_identity_setup_3(spiral_2000, gaussian):
    op = build_adjacency_operator(spiral_2000.coordinates, gaussian, FastsumParams.setup(3))
    v = op.perron_vector()
    assert np.linalg.norm(op.apply_normalized(v) - v) / np.linalg.norm(v) <= 1e-8
