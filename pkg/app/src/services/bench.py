import logging
import time
from typing import Callable

import numpy as np
import uvicorn.logging
from threadpoolctl import threadpool_limits

from src.conf.config import settings
from src.entity.models import EigenMethod, PointCloud
from src.exceptions.exceptions import RETURN_MSG, ResourceError
from src.schemas.schemas import BenchCell, FastsumParams, KernelSpec, MetricSummary, Report, ScalingCell
from src.services.fastsum import fastsum_setup
from src.services.pipelines import compute_eigenpairs, eigen_errors, timed
from src.services.spectral import dense_reference_eig

logger = logging.getLogger(uvicorn.logging.__name__)

CloudFactory = Callable[[int], PointCloud]


def summarize(values: list[float]) -> MetricSummary | None:
    if not values:
        return None
    return MetricSummary(min=float(np.min(values)), avg=float(np.mean(values)), max=float(np.max(values)))


class BenchmarkHarness:
    """
    Sweeps eigensolver methods over problem sizes and seeds.

    The dataset for a size is generated once; seeds drive the randomness of the methods (Lanczos start
    vector, Nystrom samples). Eigenvalue errors are always measured against the dense reference and residual
    norms always use exact products with A, so both metrics are only reported with a reference.
    """

    def __init__(self, factory: CloudFactory, kernel: KernelSpec, k: int = 10, eps_b: float = 0.0) -> None:
        self.factory = factory
        self.kernel = kernel
        self.k = k
        self.eps_b = eps_b

    def cells_for(self, method: EigenMethod, setups: list[int], Ls: list[int]) -> list[tuple[int | None, int | None]]:
        match method:
            case EigenMethod.nfft_lanczos:
                return [(setup, None) for setup in setups]
            case EigenMethod.nystrom_gauss_nfft:
                return [(setup, L) for setup in setups for L in Ls]
            case EigenMethod.nystrom:
                return [(None, L) for L in Ls]
            case _:
                return [(None, None)]

    def run(self, sizes: list[int], methods: list[EigenMethod], setups: list[int], Ls: list[int], seeds: list[int],
            M: int | None = None, with_reference: bool = False) -> list[BenchCell]:
        cells = []
        for n in sizes:
            cloud = self.factory(n)
            reference = None
            if with_reference:
                if cloud.n > settings.dense_budget:
                    raise ResourceError(RETURN_MSG.dense_budget.format(n=cloud.n, budget=settings.dense_budget))
                reference = dense_reference_eig(cloud.coordinates, self.kernel, self.k)
            for method in methods:
                for setup, L in self.cells_for(method, setups, Ls):
                    cells.append(self._cell(cloud, method, setup, L, seeds, M, reference))
        return cells

    def _cell(self, cloud: PointCloud, method: EigenMethod, setup: int | None, L: int | None, seeds: list[int],
              M: int | None, reference) -> BenchCell:
        params = FastsumParams.setup(setup or 2, self.eps_b)
        errors, residuals, times = [], [], []
        for seed in seeds:
            run = compute_eigenpairs(cloud.coordinates, self.kernel, params, method, self.k, L or 50, M, seed)
            times.append(sum(run.timings.values()))
            if reference is not None:
                metrics = eigen_errors(run.pairs, cloud.coordinates, self.kernel, reference)
                errors.append(metrics["max_eigenvalue_error"])
                residuals.append(metrics["max_residual_norm"])
        logger.info(f"bench {method.value} n={cloud.n} setup={setup} L={L}: "
                    f"median error {np.median(errors) if errors else float('nan'):.3e}")
        return BenchCell(method=method, n=cloud.n, setup=setup, L=L, seeds=seeds,
                         eigenvalue_error=summarize(errors), residual_norm=summarize(residuals),
                         wall_time=summarize(times))


def matvec_scaling(factory: CloudFactory, sizes: list[int], kernel: KernelSpec, params: FastsumParams,
                   repeats: int = 5, seed: int = 0) -> tuple[list[ScalingCell], float]:
    """
    Wall time of plan setup and of one fast summation product per size, restricted to one thread.

    Returns:
        tuple: cells in the order of `sizes` and the ratio of the median product time at the largest size over the
        smallest.
    """
    rng = np.random.default_rng(seed)
    cells = []
    with threadpool_limits(limits=1):
        for n in sizes:
            nodes = factory(n).coordinates
            timings: dict[str, float] = {}
            with timed(timings, "setup"):
                plan = fastsum_setup(nodes, kernel, params)
            plan.plan.workers = 1
            x = rng.standard_normal(nodes.shape[0])
            plan.apply(x)
            samples = []
            for _ in range(repeats):
                start = time.perf_counter()
                plan.apply(x)
                samples.append(time.perf_counter() - start)
            cells.append(ScalingCell(n=nodes.shape[0], setup_time=timings["setup"], matvec_time=float(np.median(samples))))
            logger.info(f"scaling n={nodes.shape[0]}: matvec {cells[-1].matvec_time:.4f}s")
    ordered = sorted(cells, key=lambda cell: cell.n)
    ratio = ordered[-1].matvec_time / ordered[0].matvec_time
    return cells, ratio


def run_bench(factory: CloudFactory, kernel: KernelSpec, sizes: list[int], methods: list[EigenMethod],
              setups: list[int], Ls: list[int], seeds: list[int], k: int = 10, M: int | None = None,
              eps_b: float = 0.0, with_reference: bool = False, parameters: dict | None = None) -> Report:
    harness = BenchmarkHarness(factory, kernel, k, eps_b)
    timings: dict[str, float] = {}
    with timed(timings, "total"):
        cells = harness.run(sizes, methods, setups, Ls, seeds, M, with_reference)
    return Report(command="bench", method=",".join(method.value for method in methods), parameters=parameters or {},
                  bench=cells, timings=timings)


def run_scaling(factory: CloudFactory, kernel: KernelSpec, sizes: list[int], params: FastsumParams,
                repeats: int = 5, seed: int = 0, parameters: dict | None = None) -> Report:
    cells, ratio = matvec_scaling(factory, sizes, kernel, params, repeats, seed)
    return Report(command="bench", method="scaling", seed=seed, parameters=parameters or {}, scaling=cells,
                  scaling_ratio=ratio, timings={"matvec": sum(cell.matvec_time for cell in cells)})
