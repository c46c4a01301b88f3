import logging

import numpy as np
import uvicorn.logging
from scipy.sparse.linalg import LinearOperator

from src.entity.models import EstimateMode, PropagationEstimate
from src.exceptions.exceptions import RETURN_MSG, DegreePositivityError, ParameterError, ShapeError
from src.schemas.schemas import FastsumParams, KernelSpec
from src.services.fastsum import DirectKernelSum, FastsumPlan, KernelMatVec, error_matrix_norm

logger = logging.getLogger(uvicorn.logging.__name__)


class AdjacencyOperator:
    """
    Matrix-free normalized adjacency A = D^-1/2 W D^-1/2 with W = W~ - K(0) I.

    Degrees are computed once from the product applied to the all-ones vector.

    Args:
        product: fast summation plan or exact product over the graph nodes.
    Raises:
        ParameterError: fewer than two nodes.
        DegreePositivityError: a computed degree is not positive.
    """

    def __init__(self, product: KernelMatVec) -> None:
        if product.n < 2:
            raise ParameterError(RETURN_MSG.operator_too_small)
        self.product = product
        self.k0 = product.k0
        degrees = product.apply(np.ones(product.n)) - self.k0
        bad = np.flatnonzero(~(degrees > 0))
        if bad.size:
            index = int(bad[0])
            raise DegreePositivityError(RETURN_MSG.degree_not_positive.format(index=index, value=degrees[index]),
                                        index=index)
        self.degrees = degrees
        self.inv_sqrt_degrees = 1.0 / np.sqrt(degrees)
        for array in (self.degrees, self.inv_sqrt_degrees):
            array.flags.writeable = False
        logger.info(f"Adjacency operator: n={self.n} degrees in [{degrees.min():.4g}, {degrees.max():.4g}]")

    @property
    def n(self) -> int:
        return self.product.n

    @property
    def plan(self) -> KernelMatVec:
        return self.product

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=self.n, actual=x.size))
        return x

    def apply_normalized(self, x: np.ndarray) -> np.ndarray:
        z = self.inv_sqrt_degrees * self._check(x)
        return self.inv_sqrt_degrees * (self.product.apply(z) - self.k0 * z)

    def apply_sym_laplacian(self, x: np.ndarray) -> np.ndarray:
        x = self._check(x)
        return x - self.apply_normalized(x)

    def perron_vector(self) -> np.ndarray:
        """D^1/2 1, the eigenvector of A for eigenvalue 1."""
        return np.sqrt(self.degrees)

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.apply_normalized, rmatvec=self.apply_normalized,
                              dtype=float)

    def laplacian_operator(self) -> LinearOperator:
        return LinearOperator((self.n, self.n), matvec=self.apply_sym_laplacian,
                              rmatvec=self.apply_sym_laplacian, dtype=float)


def build_adjacency_operator(nodes: np.ndarray, kernel: KernelSpec, params: FastsumParams | None = None,
                             exact: bool = False) -> AdjacencyOperator:
    """
    Build A over a node set.

    Args:
        nodes: (n, d) data vectors, n >= 2.
        kernel: radial kernel.
        params: fast summation controls; ignored in exact mode.
        exact: use the O(n^2) direct product instead of fast summation.
    Returns:
        AdjacencyOperator: operator with cached degrees.
    """
    if exact:
        product = DirectKernelSum(nodes, kernel)
    else:
        product = FastsumPlan(nodes, kernel, params if params is not None else FastsumParams())
    return AdjacencyOperator(product)


def apply_normalized(op: AdjacencyOperator, x: np.ndarray) -> np.ndarray:
    return op.apply_normalized(x)


def apply_sym_laplacian(op: AdjacencyOperator, x: np.ndarray) -> np.ndarray:
    return op.apply_sym_laplacian(x)


def propagation_bound(eta: float, eps: float) -> float | None:
    """
    Bound eps(1 + eta) / (eta (eta - eps)) on ||A - A_E||_inf, or None when eps >= eta.

    Raises:
        ParameterError: eta <= 0.
    """
    if eta <= 0:
        raise ParameterError(RETURN_MSG.eta_invalid.format(eta=eta))
    if eps >= eta:
        return None
    return eps * (1.0 + eta) / (eta * (eta - eps))


def estimate_eta_epsilon(op: AdjacencyOperator, mode: EstimateMode = EstimateMode.sampled,
                         sample_count: int = 1000, seed: int = 0) -> PropagationEstimate:
    """
    Monitor the quantities of the error propagation bound.

    In sampled mode eps ~ n ||K_ERR||_inf / ||W||_inf with ||K_ERR||_inf sampled and ||W||_inf, d_min taken
    from the approximate degrees. In exact mode degrees and ||E||_inf are computed with O(n^2) work.

    Args:
        op: adjacency operator.
        mode: sampled or exact.
        sample_count: kernel error samples (sampled mode).
        seed: RNG seed (sampled mode).
    Returns:
        PropagationEstimate: eta, eps and the bound (None when eps >= eta).
    """
    product = op.product
    if mode is EstimateMode.exact:
        direct = DirectKernelSum(product.nodes, product.kernel)
        degrees = direct.apply(np.ones(op.n)) - op.k0
        error = 0.0 if isinstance(product, DirectKernelSum) else error_matrix_norm(product)
    else:
        degrees = np.asarray(op.degrees)
        error = op.n * product.kernel_error(sample_count, seed)
    norm_w = float(np.max(degrees))
    eta = float(np.min(degrees)) / norm_w
    eps = error / norm_w
    bound = propagation_bound(eta, eps)
    if bound is None:
        logger.warning(f"Perturbation eps={eps:.3e} >= eta={eta:.3e}: normalization error is not controlled")
    return PropagationEstimate(eta=eta, epsilon=eps, bound=bound, mode=mode)
