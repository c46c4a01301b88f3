import unittest
from unittest.mock import patch

import numpy as np
import pytest

from src.conf.config import settings
from src.entity.models import EigenMethod
from src.exceptions.exceptions import ParameterError, ResourceError
from src.repository.datasets import gen_blobs, gen_spiral
from src.schemas.schemas import CGOptions, FastsumParams, KernelSpec
from src.services.bench import BenchmarkHarness, matvec_scaling, run_bench, run_scaling, summarize
from src.services.pipelines import compute_eigenpairs, run_cluster, run_eigs, run_krr, run_segment, timed


def spiral_factory(n):
    return gen_spiral(classes=5, per_class=n // 5, seed=1)


class TestRunEigs(unittest.TestCase):

    def setUp(self):
        self.cloud = gen_spiral(classes=5, per_class=40, seed=2)
        self.kernel = KernelSpec(sigma=3.5)

    def test_report_fields(self):
        report, pairs = run_eigs(self.cloud, self.kernel, FastsumParams.setup(3), EigenMethod.nfft_lanczos, 4,
                                 seed=1, with_reference=True, parameters={"k": 4})
        self.assertEqual((report.command, report.method, report.n, report.seed), ("eigs", "nfft-lanczos", 200, 1))
        self.assertEqual(report.parameters, {"k": 4})
        self.assertEqual(len(report.eigenvalues), 4)
        self.assertEqual(len(report.residual_norms), 4)
        self.assertLess(report.max_eigenvalue_error, 1e-8)
        self.assertLess(report.max_residual_norm, 1e-8)
        self.assertIn("operator", report.timings)
        self.assertIn("reference", report.timings)
        self.assertTrue(report.propagation["valid"])
        self.assertEqual(pairs.vectors.shape, (200, 4))

    def test_without_reference(self):
        report, _ = run_eigs(self.cloud, self.kernel, FastsumParams.setup(1), EigenMethod.nfft_lanczos, 3)
        self.assertIsNone(report.max_eigenvalue_error)
        self.assertIsNone(report.residual_norms)

    def test_methods(self):
        for method in EigenMethod:
            with self.subTest(method=method):
                run = compute_eigenpairs(self.cloud.coordinates, self.kernel, FastsumParams.setup(2), method, 3,
                                         L=40, M=5, seed=0)
                self.assertEqual(run.pairs.k, 3)
                self.assertIn("eigensolver", run.timings)
                self.assertEqual(run.operator is None, method is EigenMethod.nystrom)

    def test_direct_matches_fast(self):
        fast, _ = run_eigs(self.cloud, self.kernel, FastsumParams.setup(3), EigenMethod.nfft_lanczos, 3)
        direct, _ = run_eigs(self.cloud, self.kernel, FastsumParams.setup(3), EigenMethod.direct, 3)
        np.testing.assert_allclose(fast.eigenvalues, direct.eigenvalues, atol=1e-9)
        self.assertEqual(direct.propagation["epsilon"], 0.0)

    def test_timed_accumulates(self):
        timings = {}
        with timed(timings, "phase"):
            pass
        with timed(timings, "phase"):
            pass
        self.assertGreaterEqual(timings["phase"], 0.0)
        self.assertEqual(list(timings), ["phase"])


class TestRunCluster(unittest.TestCase):

    def test_blobs(self):
        cloud = gen_blobs(np.array([[-3.0, 0.0], [3.0, 0.0]]), per_class=200, scale=0.5, seed=3)
        report, labels = run_cluster(cloud, KernelSpec(sigma=1.0), FastsumParams.setup(2), EigenMethod.nfft_lanczos,
                                     2, 2)
        self.assertEqual(report.misclassification_rate, 0.0)
        self.assertEqual(report.classification_rate, 1.0)
        self.assertEqual(labels.shape, (400,))
        self.assertIn("kmeans", report.timings)


class TestRunSegment(unittest.TestCase):

    def test_two_colors(self):
        pixels = np.full((6, 8, 3), 60.0)
        pixels[:, 4:] = 120.0
        pixels += np.random.default_rng(0).normal(0.0, 3.0, pixels.shape)
        report, labels, reference = run_segment(pixels, KernelSpec(sigma=90.0),
                                                FastsumParams(N=16, m=2, p=2, eps_b=0.125), 2, with_reference=True)
        self.assertEqual(report.command, "segment")
        self.assertEqual(labels.shape, (48,))
        self.assertEqual(report.misclassification_rate, 0.0)
        self.assertEqual(len(np.unique(labels[:4])), 1)
        self.assertNotEqual(labels[0], labels[7])
        self.assertEqual(reference.shape, (48,))


class TestRunKrr(unittest.TestCase):

    def setUp(self):
        self.cloud = gen_blobs(np.array([[-2.0, 0.0], [2.0, 0.0]]), per_class=40, scale=0.5, seed=4)

    def test_accuracy_and_grid(self):
        report, grid = run_krr(self.cloud, KernelSpec(sigma=1.0), FastsumParams.setup(3), 1e-3,
                               CGOptions(tol=1e-8, max_iter=2000), exact=True, grid_resolution=5)
        self.assertGreaterEqual(report.classification_rate, 0.98)
        self.assertEqual(report.method, "exact")
        xs, ys, values = grid
        self.assertEqual(values.shape, (5, 5))
        self.assertLess(xs[0], self.cloud.coordinates[:, 0].min())

    def test_needs_two_classes(self):
        cloud = gen_blobs(np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0]]), per_class=5, scale=0.1)
        with self.assertRaises(ParameterError):
            run_krr(cloud, KernelSpec(sigma=1.0), FastsumParams.setup(1), 1e-3, CGOptions())


class TestBench(unittest.TestCase):

    def setUp(self):
        self.kernel = KernelSpec(sigma=3.5)

    def test_summarize(self):
        self.assertIsNone(summarize([]))
        summary = summarize([1.0, 3.0, 2.0])
        self.assertEqual((summary.min, summary.avg, summary.max), (1.0, 2.0, 3.0))

    def test_cells_for(self):
        harness = BenchmarkHarness(spiral_factory, self.kernel)
        self.assertEqual(harness.cells_for(EigenMethod.nfft_lanczos, [1, 2], [20]), [(1, None), (2, None)])
        self.assertEqual(harness.cells_for(EigenMethod.nystrom_gauss_nfft, [2], [20, 50]), [(2, 20), (2, 50)])
        self.assertEqual(harness.cells_for(EigenMethod.nystrom, [1, 2], [20]), [(None, 20)])
        self.assertEqual(harness.cells_for(EigenMethod.direct, [1, 2], [20]), [(None, None)])

    def test_run_bench(self):
        report = run_bench(spiral_factory, self.kernel, [200], [EigenMethod.nfft_lanczos, EigenMethod.nystrom],
                           [1, 3], [40], [0, 1], k=3, with_reference=True)
        self.assertEqual(report.command, "bench")
        self.assertEqual(len(report.bench), 3)
        lanczos_1, lanczos_3, nystrom = report.bench
        self.assertEqual((lanczos_1.setup, lanczos_3.setup, nystrom.L), (1, 3, 40))
        self.assertLess(lanczos_3.eigenvalue_error.max, lanczos_1.eigenvalue_error.max)
        self.assertEqual(nystrom.seeds, [0, 1])
        self.assertLessEqual(nystrom.wall_time.min, nystrom.wall_time.max)

    def test_reference_over_budget(self):
        with patch.object(settings, "dense_budget", 100):
            with self.assertRaises(ResourceError):
                run_bench(spiral_factory, self.kernel, [200], [EigenMethod.nfft_lanczos], [1], [40], [0], k=2,
                          with_reference=True)

    def test_scaling_report(self):
        report = run_scaling(spiral_factory, self.kernel, [100, 200], FastsumParams.setup(1), repeats=2)
        self.assertEqual([cell.n for cell in report.scaling], [100, 200])
        self.assertGreater(report.scaling_ratio, 0.0)
        self.assertEqual(report.method, "scaling")


@pytest.mark.slow
def test_matvec_scaling_is_linear(gaussian):
    cells, ratio = matvec_scaling(spiral_factory, [8000, 16000, 32000, 64000], gaussian, FastsumParams.setup(2))
    assert [cell.n for cell in cells] == [8000, 16000, 32000, 64000]
    assert ratio <= 12


@pytest.mark.slow
def test_thumbnail_segmentation_matches_dense_eigenvectors():
    rows, cols = np.mgrid[0:64, 0:96]
    pixels = np.empty((64, 96, 3))
    pixels[:] = [235.0, 235.0, 225.0]
    pixels[(rows < 32) & (cols < 48)] = [20.0, 20.0, 30.0]
    pixels[(rows >= 32) & (cols < rows + 16)] = [210.0, 40.0, 40.0]
    pixels[(rows - 20) ** 2 + (cols - 72) ** 2 < 144] = [40.0, 70.0, 200.0]
    pixels += 15.0 * (cols / 95.0 - 0.5)[..., None]
    pixels += np.random.default_rng(0).normal(0.0, 8.0, pixels.shape)
    pixels = np.clip(pixels, 0.0, 255.0)
    report, labels, reference = run_segment(pixels, KernelSpec(sigma=90.0),
                                            FastsumParams(N=16, m=2, p=2, eps_b=0.125), 4, with_reference=True)
    assert labels.shape == reference.shape == (64 * 96,)
    assert len(np.unique(labels)) == 4
    assert report.misclassification_rate <= 0.01
