import logging
from abc import ABC, abstractmethod

import numpy as np
import uvicorn.logging
from scipy.sparse.linalg import LinearOperator
from scipy.spatial.distance import cdist

from src.entity.models import KernelFamily
from src.exceptions.exceptions import RETURN_MSG, ParameterError, ShapeError
from src.schemas.schemas import FastsumParams, KernelSpec
from src.services.kernels import (KernelCoefficients, eval_kernel, kernel_approx_error,
                                  kernel_fourier_coefficients, regularize)
from src.services.nfft import NfftPlan, as_nodes, nfft_forward_real

logger = logging.getLogger(uvicorn.logging.__name__)

BLOCK_ENTRIES = 1 << 22


class KernelMatVec(ABC):
    """
    Product with the full kernel matrix W~ (W~_ji = K(v_j - v_i), diagonal K(0) included).
    """

    def __init__(self, nodes: np.ndarray, kernel: KernelSpec) -> None:
        nodes = as_nodes(nodes)
        if nodes.shape[0] == 0:
            raise ParameterError(RETURN_MSG.nodes_empty)
        if nodes.shape[1] not in (1, 2, 3):
            raise ParameterError(RETURN_MSG.dimension_invalid.format(d=nodes.shape[1]))
        self.nodes = nodes
        self.kernel = kernel
        self.k0 = float(eval_kernel(kernel, 0.0))

    @property
    def n(self) -> int:
        return self.nodes.shape[0]

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=self.n, actual=x.size))
        return x

    @abstractmethod
    def apply(self, x: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def kernel_error(self, sample_count: int = 1000, seed: int = 0) -> float:
        """Estimate of ||K_ERR||_inf for this backend (0 for exact products)."""

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.apply, rmatvec=self.apply, dtype=float)


def kernel_block(kernel: KernelSpec, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return eval_kernel(kernel, cdist(rows, cols))


class DirectKernelSum(KernelMatVec):
    """
    Exact O(n^2) product, evaluated in row blocks without storing W~.
    """

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        out = np.empty(self.n)
        step = max(1, BLOCK_ENTRIES // self.n)
        for start in range(0, self.n, step):
            rows = slice(start, min(start + step, self.n))
            out[rows] = kernel_block(self.kernel, self.nodes[rows], self.nodes) @ x
        return out

    def column(self, i: int) -> np.ndarray:
        return kernel_block(self.kernel, self.nodes, self.nodes[i:i + 1])[:, 0]

    def kernel_error(self, sample_count: int = 1000, seed: int = 0) -> float:
        return 0.0


def node_scaling(nodes: np.ndarray, eps_b: float) -> float:
    """
    Correction factor rho placing all nodes in the ball of radius 1/4 - eps_B/2; never upscales.
    """
    radius = 0.25 - eps_b / 2.0
    largest = float(np.max(np.linalg.norm(nodes, axis=1)))
    if largest <= radius:
        return 1.0
    rho = radius / largest
    # round down until the scaled bound holds in floating point
    while np.max(np.linalg.norm(nodes * rho, axis=1)) > radius:
        rho = np.nextafter(rho, 0.0)
    return float(rho)


def adjust_kernel(kernel: KernelSpec, rho: float) -> tuple[KernelSpec, float]:
    """
    Kernel on scaled nodes and the factor restoring outputs on the original nodes.

    Returns:
        tuple: (adjusted kernel, output scale). Exponential kernels scale sigma by rho; multiquadrics scale c
        by rho and need output factors 1/rho (multiquadric) and rho (inverse multiquadric).
    """
    if rho == 1.0:
        return kernel, 1.0
    adjusted = kernel.with_shape(kernel.shape * rho)
    match kernel.family:
        case KernelFamily.multiquadric:
            return adjusted, 1.0 / rho
        case KernelFamily.inverse_multiquadric:
            return adjusted, rho
        case _:
            return adjusted, 1.0


class FastsumPlan(KernelMatVec):
    """
    NFFT-based fast summation: adjoint NFFT, multiplication by b_l, forward NFFT.

    Args:
        nodes: (n, d) nodes, any scale.
        kernel: radial kernel.
        params: bandwidth, cut-off and regularization controls.
    """

    def __init__(self, nodes: np.ndarray, kernel: KernelSpec, params: FastsumParams) -> None:
        super().__init__(nodes, kernel)
        self.params = params
        self.rho = node_scaling(self.nodes, params.eps_b)
        self.adjusted_kernel, self.output_scale = adjust_kernel(kernel, self.rho)
        regularized = regularize(self.adjusted_kernel, params.eps_b, params.p)
        self.coefficients: KernelCoefficients = kernel_fourier_coefficients(regularized, params.N, self.nodes.shape[1])
        self.scaled_nodes = self.nodes * self.rho
        self.plan = NfftPlan(self.nodes.shape[1], params.N, params.m, self.scaled_nodes)
        logger.info(f"Fast summation plan: n={self.n} d={self.nodes.shape[1]} N={params.N} m={params.m} "
                    f"p={params.p} eps_B={params.eps_b:g} rho={self.rho:.4g}")

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        spectrum = self.plan.adjoint(x.astype(complex)) * self.coefficients.values
        return nfft_forward_real(self.plan, spectrum) * self.output_scale

    def kernel_error(self, sample_count: int = 1000, seed: int = 0) -> float:
        error = kernel_approx_error(self.adjusted_kernel, self.coefficients, sample_count, seed)
        return error * self.output_scale


def fastsum_setup(nodes: np.ndarray, kernel: KernelSpec, params: FastsumParams) -> FastsumPlan:
    return FastsumPlan(nodes, kernel, params)


def fastsum_apply(plan: KernelMatVec, x: np.ndarray) -> np.ndarray:
    return plan.apply(x)


def direct_apply(nodes: np.ndarray, kernel: KernelSpec, x: np.ndarray) -> np.ndarray:
    return DirectKernelSum(nodes, kernel).apply(x)


def error_matrix_norm(plan: KernelMatVec, nodes: np.ndarray | None = None, kernel: KernelSpec | None = None) -> float:
    """
    ||E||_inf for E = product - W~, accumulated one column at a time.

    Args:
        plan: the product to assess.
        nodes: node set (defaults to the plan's).
        kernel: exact kernel (defaults to the plan's).
    Returns:
        float: maximum absolute row sum of E.
    """
    exact = DirectKernelSum(plan.nodes if nodes is None else nodes, plan.kernel if kernel is None else kernel)
    row_sums = np.zeros(exact.n)
    unit = np.zeros(exact.n)
    for i in range(exact.n):
        unit[i] = 1.0
        row_sums += np.abs(plan.apply(unit) - exact.column(i))
        unit[i] = 0.0
    return float(np.max(row_sums))
