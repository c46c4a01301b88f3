import logging
from typing import Callable

import numpy as np
import scipy.linalg
import uvicorn.logging
from scipy.sparse.linalg import LinearOperator, aslinearoperator

from src.conf.config import settings
from src.entity.models import CGResult, EigenPairs, LanczosState
from src.exceptions.exceptions import (RETURN_MSG, ComplexNormalizationError, DegreePositivityError,
                                       IllConditionedSampleError, IndefiniteOperatorError, ParameterError,
                                       RankDeficiencyError, ResourceError, ShapeError)
from src.schemas.schemas import CGOptions, KernelSpec, LanczosOptions, NystromOptions
from src.services.fastsum import kernel_block
from src.services.graphop import AdjacencyOperator, build_adjacency_operator
from src.services.nfft import as_nodes

logger = logging.getLogger(uvicorn.logging.__name__)

MAX_SAMPLE_CONDITION = 1e14
BREAKDOWN_TOL = 1e-12

Operator = LinearOperator | AdjacencyOperator | np.ndarray | Callable[[np.ndarray], np.ndarray]


def as_operator(op: Operator, n: int | None = None) -> LinearOperator:
    """
    Wrap any supported operator form as a symmetric scipy LinearOperator.

    Args:
        op: LinearOperator, AdjacencyOperator, dense matrix, or a callable (then n is required).
        n: dimension for callables.
    """
    if isinstance(op, AdjacencyOperator):
        return op.as_linear_operator()
    if isinstance(op, (LinearOperator, np.ndarray)):
        return aslinearoperator(op)
    if callable(op):
        if n is None:
            raise ParameterError(RETURN_MSG.operator_dimension)
        return LinearOperator((n, n), matvec=op, rmatvec=op, dtype=float)
    raise ParameterError(RETURN_MSG.operator_type.format(name=type(op).__name__))


def normalize_signs(vectors: np.ndarray) -> np.ndarray:
    """Flip columns so that each column's largest-magnitude entry is positive."""
    if vectors.size == 0:
        return vectors
    pivots = vectors[np.argmax(np.abs(vectors), axis=0), np.arange(vectors.shape[1])]
    return vectors * np.where(pivots < 0, -1.0, 1.0)


def _descending(values: np.ndarray, vectors: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(values, kind="stable")[::-1][:k]
    return values[order], normalize_signs(vectors[:, order])


class LanczosProcess:
    """
    Lanczos tridiagonalization with full reorthogonalization (classical Gram-Schmidt, applied twice).

    On breakdown (an invariant Krylov subspace) the process restarts from a random vector orthogonal to
    the current basis and records a zero coupling, so the tridiagonal matrix becomes block diagonal.
    """

    def __init__(self, op: LinearOperator, max_steps: int, rng: np.random.Generator) -> None:
        self.op = op
        self.n = op.shape[0]
        self.rng = rng
        self.basis = np.zeros((self.n, max_steps + 1))
        self.alpha: list[float] = []
        self.beta: list[float] = []
        self.restarts = 0
        self.size = 1
        self.basis[:, 0] = self._random_unit(0)

    def _random_unit(self, columns: int) -> np.ndarray:
        q = self.rng.uniform(-1.0, 1.0, self.n)
        Q = self.basis[:, :columns]
        for _ in range(2):
            q -= Q @ (Q.T @ q)
        return q / np.linalg.norm(q)

    @property
    def steps(self) -> int:
        return len(self.alpha)

    def state(self) -> LanczosState:
        return LanczosState(basis=self.basis[:, :self.steps], alpha=np.array(self.alpha),
                            beta=np.array(self.beta), iterations=self.steps)

    def step(self) -> bool:
        """
        One Lanczos step. Returns False once the basis spans the whole space.
        """
        j = self.size - 1
        q = self.basis[:, j]
        w = self.op.matvec(q).ravel()
        scale = np.linalg.norm(w)
        alpha = float(q @ w)
        w -= alpha * q
        if j > 0:
            w -= self.beta[j - 1] * self.basis[:, j - 1]
        Q = self.basis[:, :self.size]
        for _ in range(2):
            h = Q.T @ w
            w -= Q @ h
            alpha += h[j]
        self.alpha.append(alpha)
        if self.size == self.n:
            self.beta.append(0.0)
            return False
        beta = float(np.linalg.norm(w))
        if beta <= BREAKDOWN_TOL * max(scale, np.finfo(float).tiny):
            logger.debug(f"Lanczos breakdown at step {self.steps}, restarting")
            self.restarts += 1
            beta, w = 0.0, self._random_unit(self.size)
        else:
            w /= beta
        self.beta.append(beta)
        self.basis[:, self.size] = w
        self.size += 1
        return True


def lanczos_largest(op: Operator, k: int, opts: LanczosOptions | None = None) -> EigenPairs:
    """
    k largest eigenpairs of a symmetric operator by the Lanczos method.

    Convergence is declared when |beta_{j+1} w_j| <= tol |theta| for all k wanted Ritz pairs, where w_j is the
    last component of the Ritz vector in the Krylov basis.

    Args:
        op: symmetric operator.
        k: number of pairs, 1 <= k <= n.
        opts: max_iter, tol and seed.
    Returns:
        EigenPairs: Ritz pairs, descending, with iteration count and residual estimates.
    Raises:
        ParameterError: k outside 1..n.
    """
    opts = opts or LanczosOptions(k=k)
    A = as_operator(op)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(RETURN_MSG.k_invalid.format(k=k, n=n))
    max_iter = min(n, opts.max_iter or max(3 * k + 50, 100))
    max_iter = max(max_iter, k)
    process = LanczosProcess(A, max_iter, np.random.default_rng(opts.seed))

    converged = False
    while True:
        more = process.step()
        m = process.steps
        exhausted = not more or m >= max_iter
        if m < k or (more and process.beta[-1] == 0.0 and not exhausted):
            continue
        theta, S = scipy.linalg.eigh_tridiagonal(np.array(process.alpha), np.array(process.beta[:m - 1]))
        order = np.argsort(theta, kind="stable")[::-1][:k]
        coupling = process.beta[-1] if more else 0.0
        estimates = np.abs(coupling * S[m - 1, order])
        converged = bool(np.all(estimates <= opts.tol * np.maximum(np.abs(theta[order]), np.finfo(float).tiny)))
        logger.debug(f"Lanczos step {m}: max residual estimate {estimates.max():.3e}")
        if converged or exhausted:
            break

    if not converged:
        logger.warning(f"Lanczos stopped after {m} steps without reaching tol={opts.tol:g}")
    vectors = process.basis[:, :m] @ S[:, order]
    values, vectors = theta[order], normalize_signs(vectors)
    logger.info(f"Lanczos: {k} pairs after {m} steps (converged={converged}, restarts={process.restarts})")
    return EigenPairs(values=values, vectors=vectors, iterations=m, converged=converged,
                      residual_estimates=estimates)


def residual_norms(reference_apply: Operator, pairs: EigenPairs) -> tuple[np.ndarray, float]:
    """
    ||A v_j - lambda_j v_j||_2 for every pair against a reference operator, and their maximum (0 for k = 0).
    """
    if pairs.k == 0:
        return np.zeros(0), 0.0
    A = as_operator(reference_apply, pairs.vectors.shape[0])
    if A.shape[0] != pairs.vectors.shape[0]:
        raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=A.shape[0], actual=pairs.vectors.shape[0]))
    residual = np.asarray(A.matmat(pairs.vectors)) - pairs.vectors * pairs.values
    norms = np.linalg.norm(residual, axis=0)
    return norms, float(norms.max())


def nystrom_from_columns(columns: np.ndarray, sample: np.ndarray, k: int) -> EigenPairs:
    """
    Nystrom eigendecomposition of D_E^-1/2 W_E D_E^-1/2 with W_E = C W_XX^-1 C^T.

    Args:
        columns: C, the (n, L) sampled columns of W.
        sample: row indices of C forming W_XX.
        k: number of pairs to return.
    Raises:
        IllConditionedSampleError: cond(W_XX) > 1e14.
        ComplexNormalizationError: a Nystrom degree is not positive.
    """
    block = columns[sample]
    condition = np.linalg.cond(block)
    if not np.isfinite(condition) or condition > MAX_SAMPLE_CONDITION:
        raise IllConditionedSampleError(RETURN_MSG.sample_ill_conditioned.format(cond=condition))
    degrees = columns @ scipy.linalg.solve(block, columns.sum(axis=0), assume_a="sym")
    bad = np.flatnonzero(~(degrees > 0))
    if bad.size:
        raise ComplexNormalizationError(RETURN_MSG.negative_nystrom_degree.format(index=int(bad[0]),
                                                                                 value=degrees[bad[0]]))
    Q, R = scipy.linalg.qr(columns / np.sqrt(degrees)[:, None], mode="economic")
    core = R @ scipy.linalg.solve(block, R.T, assume_a="sym")
    values, U = scipy.linalg.eigh((core + core.T) / 2.0)
    values, vectors = _descending(values, Q @ U, k)
    return EigenPairs(values=values, vectors=vectors)


def nystrom_traditional(nodes: np.ndarray, kernel: KernelSpec, opts: NystromOptions) -> EigenPairs:
    """
    Traditional Nystrom extension from L uniformly sampled nodes; O(nL) kernel evaluations.
    """
    nodes = as_nodes(nodes)
    n = nodes.shape[0]
    if opts.L > n or opts.k > opts.L:
        raise ParameterError(RETURN_MSG.nystrom_sizes.format(k=opts.k, M=opts.M, L=opts.L, n=n))
    sample = np.random.default_rng(opts.seed).choice(n, size=opts.L, replace=False)
    columns = kernel_block(kernel, nodes, nodes[sample])
    columns[sample, np.arange(opts.L)] = 0.0
    pairs = nystrom_from_columns(columns, sample, opts.k)
    logger.info(f"Nystrom: L={opts.L}, leading eigenvalue {pairs.values[0]:.6f}")
    return pairs


def nystrom_gaussian_nfft(op: Operator, opts: NystromOptions) -> EigenPairs:
    """
    Nystrom method with a Gaussian sketch whose operator products use fast summation.

    Steps: Y = A G, Q = orth(Y), B1 = A Q, B2 = sym(Q^T B1), top-M positive eigenpairs (S_M, U_M) of B2,
    QR of B1 U_M, eigendecomposition of R S_M^-1 R^T. Uses 2L operator applications.

    Args:
        op: symmetric operator, usually an AdjacencyOperator.
        opts: k <= M <= L and the seed of the Gaussian sketch.
    Raises:
        RankDeficiencyError: fewer than M positive eigenvalues in B2.
    """
    A = as_operator(op)
    n = A.shape[0]
    M = opts.M
    if opts.L > n:
        raise ParameterError(RETURN_MSG.nystrom_sizes.format(k=opts.k, M=M, L=opts.L, n=n))
    sketch = np.random.default_rng(opts.seed).standard_normal((n, opts.L))
    Q, _ = scipy.linalg.qr(np.asarray(A.matmat(sketch)), mode="economic")
    B1 = np.asarray(A.matmat(Q))
    B2 = Q.T @ B1
    theta, U = scipy.linalg.eigh((B2 + B2.T) / 2.0)
    order = np.argsort(theta, kind="stable")[::-1]
    theta, U = theta[order], U[:, order]
    threshold = opts.L * np.finfo(float).eps * max(np.abs(theta).max(), np.finfo(float).tiny)
    found = int(np.sum(theta > threshold))
    if found < M:
        raise RankDeficiencyError(RETURN_MSG.rank_deficient.format(found=found, M=M))
    Qh, Rh = scipy.linalg.qr(B1 @ U[:, :M], mode="economic")
    core = (Rh / theta[:M]) @ Rh.T
    values, Uh = scipy.linalg.eigh((core + core.T) / 2.0)
    values, vectors = _descending(values, Qh @ Uh, opts.k)
    logger.info(f"Nystrom-Gaussian: L={opts.L} M={M}, leading eigenvalue {values[0]:.6f}")
    return EigenPairs(values=values, vectors=vectors, iterations=2 * opts.L)


def cg_solve(op_apply: Operator, b: np.ndarray, tol: float | None = None, max_iter: int | None = None,
             x0: np.ndarray | None = None) -> CGResult:
    """
    Conjugate gradients for a symmetric positive definite operator.

    Args:
        op_apply: operator or callable x -> Ax.
        b: right-hand side.
        tol: relative residual target ||b - Ax|| <= tol ||b||.
        max_iter: iteration cap.
        x0: initial guess (zero by default).
    Returns:
        CGResult: solution, iterations, convergence flag and final relative residual.
    Raises:
        IndefiniteOperatorError: p^T A p <= 0; the error carries the current iterate.
    """
    defaults = CGOptions()
    tol = defaults.tol if tol is None else tol
    max_iter = defaults.max_iter if max_iter is None else max_iter
    b = np.asarray(b, dtype=float)
    A = as_operator(op_apply, b.shape[0])
    b_norm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if b_norm == 0:
        return CGResult(x=np.zeros_like(b), iterations=0, converged=True, relative_residual=0.0)
    r = b - A.matvec(x) if x0 is not None else b.copy()
    p = r.copy()
    rs = r @ r
    iterations, converged = 0, np.sqrt(rs) <= tol * b_norm
    while not converged and iterations < max_iter:
        iterations += 1
        Ap = A.matvec(p).ravel()
        curvature = p @ Ap
        if curvature <= 0:
            raise IndefiniteOperatorError(
                RETURN_MSG.indefinite_operator.format(value=curvature, iteration=iterations),
                iterate=x, iterations=iterations, curvature=float(curvature))
        step = rs / curvature
        x += step * p
        r -= step * Ap
        rs_new = r @ r
        converged = np.sqrt(rs_new) <= tol * b_norm
        p = r + (rs_new / rs) * p
        rs = rs_new
    relative = float(np.sqrt(rs) / b_norm)
    if not converged:
        logger.warning(f"CG reached max_iter={max_iter} with relative residual {relative:.3e}")
    else:
        logger.debug(f"CG converged in {iterations} iterations, relative residual {relative:.3e}")
    return CGResult(x=x, iterations=iterations, converged=bool(converged), relative_residual=relative)


def dense_adjacency_matrix(nodes: np.ndarray, kernel: KernelSpec, budget: int | None = None) -> np.ndarray:
    """
    Dense A = D^-1/2 W D^-1/2 with zero-diagonal W.

    Raises:
        ResourceError: n exceeds the dense budget.
        DegreePositivityError: a node has no positive-weight neighbour.
    """
    nodes = as_nodes(nodes)
    n = nodes.shape[0]
    budget = settings.dense_budget if budget is None else budget
    if n > budget:
        raise ResourceError(RETURN_MSG.dense_budget.format(n=n, budget=budget))
    W = kernel_block(kernel, nodes, nodes)
    np.fill_diagonal(W, 0.0)
    degrees = W.sum(axis=1)
    bad = np.flatnonzero(~(degrees > 0))
    if bad.size:
        index = int(bad[0])
        raise DegreePositivityError(RETURN_MSG.degree_isolated.format(index=index, value=degrees[index]), index=index)
    scale = 1.0 / np.sqrt(degrees)
    return W * scale[:, None] * scale[None, :]


def dense_reference_apply(nodes: np.ndarray, kernel: KernelSpec, store: bool = True,
                          budget: int | None = None) -> LinearOperator:
    """
    Exact A as an operator: stored densely (O(n^2) memory) or recomputed row-blockwise per apply.
    """
    if store:
        return aslinearoperator(dense_adjacency_matrix(nodes, kernel, budget))
    return build_adjacency_operator(nodes, kernel, exact=True).as_linear_operator()


def dense_reference_eig(nodes: np.ndarray, kernel: KernelSpec, k: int, budget: int | None = None) -> EigenPairs:
    """Ground-truth k largest eigenpairs of A from a dense symmetric eigensolver."""
    A = dense_adjacency_matrix(nodes, kernel, budget)
    n = A.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(RETURN_MSG.k_invalid.format(k=k, n=n))
    values, vectors = scipy.linalg.eigh(A, subset_by_index=[n - k, n - 1])
    values, vectors = _descending(values, vectors, k)
    return EigenPairs(values=values, vectors=vectors)
