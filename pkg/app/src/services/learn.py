import logging

import numpy as np
import uvicorn.logging
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from sklearn.cluster import kmeans_plusplus
from sklearn.metrics import confusion_matrix

from src.entity.models import CGResult, EigenPairs, KMeansResult, PhaseFieldResult, RidgeModel, TrainingSelection
from src.exceptions.exceptions import (RETURN_MSG, DivergenceError, IndefiniteOperatorError, ParameterError,
                                       ShapeError)
from src.schemas.schemas import AllenCahnParams, CGOptions, FastsumParams, KernelSpec, KMeansOptions
from src.services.fastsum import BLOCK_ENTRIES, DirectKernelSum, FastsumPlan, kernel_block
from src.services.graphop import AdjacencyOperator
from src.services.nfft import as_nodes
from src.services.spectral import cg_solve

logger = logging.getLogger(uvicorn.logging.__name__)


def _lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int) -> KMeansResult:
    n, k = points.shape[0], centroids.shape[0]
    labels = None
    for _ in range(max_iter):
        distances = cdist(points, centroids, "sqeuclidean")
        assignment = np.argmin(distances, axis=1)
        counts = np.bincount(assignment, minlength=k)
        for empty in np.flatnonzero(counts == 0):
            # re-seed at the farthest point whose cluster keeps at least one member
            spread = np.where(counts[assignment] > 1, distances[np.arange(n), assignment], -1.0)
            far = int(np.argmax(spread))
            if spread[far] < 0:
                break
            counts[assignment[far]] -= 1
            assignment[far] = empty
            counts[empty] = 1
            centroids[empty] = points[far]
            distances[far] = 0.0
        if labels is not None and np.array_equal(assignment, labels):
            break
        labels = assignment
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        centroids = np.divide(sums, counts[:, None], out=centroids.copy(), where=counts[:, None] > 0)
    wcss = float(np.sum((points - centroids[labels]) ** 2))
    return KMeansResult(labels=labels, centroids=centroids, wcss=wcss)


def kmeans(points: np.ndarray, k: int, opts: KMeansOptions | None = None) -> KMeansResult:
    """
    Lloyd's k-means from k-means++ seeds, best of opts.restarts runs by within-cluster sum of squares.

    Args:
        points: (n, d) data.
        k: number of clusters, 1 <= k <= n.
        opts: restarts, iteration cap and seed.
    Returns:
        KMeansResult: labels in 0..k-1, centroids and wcss.
    Raises:
        ParameterError: k outside 1..n.
    """
    opts = opts or KMeansOptions()
    points = as_nodes(points) if np.ndim(points) == 1 else np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k <= n:
        raise ParameterError(RETURN_MSG.k_invalid.format(k=k, n=n))
    rng = np.random.default_rng(opts.seed)
    best = None
    for _ in range(opts.restarts):
        seeds, _ = kmeans_plusplus(points, n_clusters=k, random_state=int(rng.integers(2 ** 31 - 1)))
        result = _lloyd(points, seeds.astype(float), opts.max_iter)
        if best is None or result.wcss < best.wcss:
            best = result
    return best


def spectral_cluster(pairs: EigenPairs, k_clusters: int, kmeans_opts: KMeansOptions | None = None) -> np.ndarray:
    """
    Cluster the row-normalized leading eigenvectors with k-means. Zero rows stay zero.

    Raises:
        ParameterError: fewer eigenvectors than clusters.
    """
    if pairs.k < k_clusters:
        raise ParameterError(RETURN_MSG.too_few_vectors.format(needed=k_clusters, available=pairs.k))
    rows = pairs.vectors[:, :k_clusters]
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    embedded = np.divide(rows, norms, out=np.zeros_like(rows), where=norms > 0)
    return kmeans(embedded, k_clusters, kmeans_opts).labels


def laplacian_pairs(pairs: EigenPairs) -> EigenPairs:
    """Eigenpairs of L_s = I - A from those of A: eigenvalues 1 - lambda, ascending."""
    return EigenPairs(values=1.0 - pairs.values, vectors=pairs.vectors, iterations=pairs.iterations,
                      converged=pairs.converged)


def select_training(labels: np.ndarray, samples_per_class: int, seed: int = 0, omega0: float = 1.0) -> TrainingSelection:
    """
    Draw up to samples_per_class known nodes from each class.
    """
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    classes = np.unique(labels)
    indices = []
    for label in classes:
        members = np.flatnonzero(labels == label)
        indices.append(np.sort(rng.choice(members, size=min(samples_per_class, members.size), replace=False)))
    return TrainingSelection(indices=indices, classes=classes, n=labels.shape[0], omega0=omega0)


def _fidelity_channels(selection: TrainingSelection) -> np.ndarray:
    if len(selection.indices) <= 2:
        return selection.fidelity[:, None]
    return np.column_stack([selection.channel_fidelity(c) for c in range(len(selection.indices))])


def _labels_from_channels(u: np.ndarray, classes: np.ndarray) -> np.ndarray:
    if u.shape[1] == 1:
        return np.where(u[:, 0] > 0, classes[-1], classes[0])
    return classes[np.argmax(u, axis=1)]


def _implicit_fidelity_system(vectors: np.ndarray, eigenvalues: np.ndarray, omega: np.ndarray,
                              params: AllenCahnParams) -> tuple:
    # (1/tau + c_psi + eps Lambda + V^T Omega V), Cholesky-factored once per solve
    c_psi = max(params.c - params.omega0, 0.0)
    matrix = vectors.T @ (omega[:, None] * vectors)
    matrix[np.diag_indices_from(matrix)] += 1.0 / params.tau + c_psi + params.eps_ac * eigenvalues
    return cho_factor(matrix)


def allen_cahn_step(coefficients: np.ndarray, u: np.ndarray, vectors: np.ndarray, eigenvalues: np.ndarray,
                    fidelity: np.ndarray, omega: np.ndarray, params: AllenCahnParams,
                    nonlinear: bool = True, system: tuple | None = None) -> np.ndarray:
    """
    One convexity-splitting step in spectral coordinates; returns the new coefficients.

    With explicit fidelity:
    a_j <- [a_j/tau - (1/eps) v_j^T psi'(u) + c a_j + v_j^T Omega (f - u)] / (1/tau + eps lambda_j + c)
    with psi'(u) = 4 u (u^2 - 1).

    With implicit fidelity the Omega term moves into the left-hand side and only the double-well share
    c_psi = c - omega0 of the convexity constant remains:
    (1/tau + c_psi + eps Lambda + V^T Omega V) a = (1/tau + c_psi) a_old - (1/eps) V^T psi'(u) + V^T Omega f

    Args:
        system: Cholesky factor of the implicit matrix, reused across steps; built on demand.
    """
    nonlinear_term = vectors.T @ (4.0 * u * (u * u - 1.0)) / params.eps_ac if nonlinear else 0.0
    if params.implicit_fidelity:
        system = system or _implicit_fidelity_system(vectors, eigenvalues, omega, params)
        c_psi = max(params.c - params.omega0, 0.0)
        rhs = (1.0 / params.tau + c_psi) * coefficients - nonlinear_term + vectors.T @ (omega[:, None] * fidelity)
        return cho_solve(system, rhs)
    rhs = coefficients / params.tau + params.c * coefficients + vectors.T @ (omega[:, None] * (fidelity - u))
    rhs = rhs - nonlinear_term
    denominator = 1.0 / params.tau + params.eps_ac * eigenvalues + params.c
    return rhs / denominator[:, None]


def allen_cahn_ssl(pairs: EigenPairs, selection: TrainingSelection, params: AllenCahnParams | None = None,
                   n_classes: int | None = None) -> PhaseFieldResult:
    """
    Phase-field semi-supervised classification on the span of the k smallest eigenvectors of L_s.

    Two classes use one channel labeled by sign; more classes use one-vs-rest channels labeled by argmax.

    Args:
        pairs: eigenpairs of L_s (eigenvalues ascending).
        selection: known labels; the fidelity weight is params.omega0.
        params: time step, interface width, fidelity strength, convexity constant, stopping rule.
        n_classes: expected number of classes (checked against the selection).
    Returns:
        PhaseFieldResult: labels, final u, steps and convergence flag.
    Raises:
        DivergenceError: non-finite iterate.
    """
    params = params or AllenCahnParams()
    if n_classes is not None and n_classes != len(selection.indices):
        raise ParameterError(RETURN_MSG.class_count.format(found=len(selection.indices), expected=n_classes))
    vectors, eigenvalues = pairs.vectors, np.asarray(pairs.values)
    fidelity = _fidelity_channels(selection)
    omega = np.zeros(selection.n)
    omega[selection.training_indices] = params.omega0
    system = _implicit_fidelity_system(vectors, eigenvalues, omega, params) if params.implicit_fidelity else None
    u = fidelity.copy()
    coefficients = vectors.T @ u
    converged, step = False, 0
    while step < params.max_steps:
        step += 1
        coefficients = allen_cahn_step(coefficients, u, vectors, eigenvalues, fidelity, omega, params, system=system)
        updated = vectors @ coefficients
        if not np.all(np.isfinite(updated)):
            raise DivergenceError(RETURN_MSG.diverged.format(step=step), step=step)
        change = np.sum((updated - u) ** 2) / max(np.sum(updated ** 2), np.finfo(float).tiny)
        u = updated
        logger.debug(f"Allen-Cahn step {step}: squared relative change {change:.3e}")
        if change <= params.tol:
            converged = True
            break
    logger.info(f"Allen-Cahn: {step} steps, converged={converged}")
    return PhaseFieldResult(labels=_labels_from_channels(u, selection.classes), u=u, steps=step, converged=converged)


def kernel_ssl_solve(op: AdjacencyOperator, f: np.ndarray, beta: float, cg_opts: CGOptions | None = None) -> CGResult:
    """
    Solve (I + beta L_s) u = f with CG.

    Raises:
        ParameterError: beta < 0.
    """
    if beta < 0:
        raise ParameterError(RETURN_MSG.beta_negative.format(beta=beta))
    f = np.asarray(f, dtype=float)
    if beta == 0:
        return CGResult(x=f.copy(), iterations=0, converged=True, relative_residual=0.0)
    cg_opts = cg_opts or CGOptions()
    result = cg_solve(lambda x: x + beta * op.apply_sym_laplacian(x), f, cg_opts.tol, cg_opts.max_iter)
    logger.info(f"Kernel SSL: CG {result.iterations} iterations, converged={result.converged}")
    return result


def kernel_ssl_truncated(pairs: EigenPairs, f: np.ndarray, beta: float) -> np.ndarray:
    """
    Closed-form solution of (I + beta (I - V diag(lambda) V^T)) u = f for orthonormal V.
    """
    f = np.asarray(f, dtype=float)
    V = pairs.vectors
    projection = V.T @ f
    inside = V @ (projection / (1.0 + beta * (1.0 - pairs.values)))
    return inside + (f - V @ projection) / (1.0 + beta)


def kernel_ssl_classify(source: AdjacencyOperator | EigenPairs, selection: TrainingSelection, beta: float,
                        cg_opts: CGOptions | None = None) -> tuple[np.ndarray, list[CGResult]]:
    """
    Labels from kernel SSL, solved by CG on the operator or in closed form on truncated eigenpairs.

    Returns:
        tuple: labels and the CG results per channel (empty for the truncated variant).
    """
    fidelity = _fidelity_channels(selection)
    solutions, results = [], []
    for channel in fidelity.T:
        if isinstance(source, EigenPairs):
            solutions.append(kernel_ssl_truncated(source, channel, beta))
        else:
            result = kernel_ssl_solve(source, channel, beta, cg_opts)
            results.append(result)
            solutions.append(result.x)
    return _labels_from_channels(np.column_stack(solutions), selection.classes), results


def krr_fit(train_nodes: np.ndarray, kernel: KernelSpec, beta: float, f: np.ndarray,
            cg_opts: CGOptions | None = None, params: FastsumParams | None = None, exact: bool = False) -> RidgeModel:
    """
    Kernel ridge regression: solve (K + beta I) alpha = f with CG, K applied by fast summation.

    Args:
        train_nodes: (n, d) training inputs.
        kernel: radial kernel; the Gram matrix keeps its diagonal K(0).
        beta: regularization, > 0.
        f: training targets.
        cg_opts: CG tolerance and cap.
        params: fast summation controls (setup 3 by default).
        exact: use the direct O(n^2) product.
    Returns:
        RidgeModel: dual coefficients and the solve record.
    Raises:
        IndefiniteOperatorError: K + beta I is not positive definite (e.g. multiquadric kernels).
    """
    if beta <= 0:
        raise ParameterError(RETURN_MSG.beta_not_positive.format(beta=beta))
    nodes = as_nodes(train_nodes)
    f = np.asarray(f, dtype=float)
    if f.shape != (nodes.shape[0],):
        raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=nodes.shape[0], actual=f.size))
    params = params or FastsumParams.setup(3)
    product = DirectKernelSum(nodes, kernel) if exact else FastsumPlan(nodes, kernel, params)
    cg_opts = cg_opts or CGOptions()
    try:
        result = cg_solve(lambda x: product.apply(x) + beta * x, f, cg_opts.tol, cg_opts.max_iter)
    except IndefiniteOperatorError as error:
        raise IndefiniteOperatorError(RETURN_MSG.krr_indefinite.format(value=error.curvature), iterate=error.iterate,
                                      iterations=error.iterations, curvature=error.curvature) from error
    logger.info(f"KRR fit: n={nodes.shape[0]}, CG {result.iterations} iterations, converged={result.converged}")
    return RidgeModel(kernel=kernel, nodes=nodes, alpha=result.x, beta=beta, params=params, exact=exact,
                      solve=result)


def krr_predict(model: RidgeModel, query_nodes: np.ndarray) -> np.ndarray:
    """
    F(x) = sum_i alpha_i K(x_i, x) at the query nodes.

    The fast path builds one plan over train + query nodes and applies it to alpha padded with zeros.
    """
    query = as_nodes(query_nodes, model.nodes.shape[1])
    if model.exact:
        step = max(1, BLOCK_ENTRIES // model.nodes.shape[0])
        return np.concatenate([kernel_block(model.kernel, query[start:start + step], model.nodes) @ model.alpha
                               for start in range(0, query.shape[0], step)])
    union = np.vstack([model.nodes, query])
    plan = FastsumPlan(union, model.kernel, model.params or FastsumParams.setup(3))
    padded = np.concatenate([model.alpha, np.zeros(query.shape[0])])
    return plan.apply(padded)[model.nodes.shape[0]:]


def krr_predict_grid(model: RidgeModel, bounds: tuple[float, float, float, float],
                     resolution: int = 100) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Predictions on a regular 2-D grid for contour plots of the decision boundary.

    Args:
        model: fitted two-dimensional model.
        bounds: (xmin, xmax, ymin, ymax).
        resolution: grid points per axis.
    Returns:
        tuple: x axis, y axis and the (resolution, resolution) prediction grid indexed [y, x].
    """
    xs = np.linspace(bounds[0], bounds[1], resolution)
    ys = np.linspace(bounds[2], bounds[3], resolution)
    gx, gy = np.meshgrid(xs, ys)
    values = krr_predict(model, np.column_stack([gx.ravel(), gy.ravel()]))
    return xs, ys, values.reshape(gy.shape)


def misclassification_rate(predicted_labels: np.ndarray, true_labels: np.ndarray, permute: bool = False) -> float:
    """
    Fraction of mismatched labels; with permute=True minimized over relabelings of the predictions.

    Raises:
        ShapeError: length mismatch.
    """
    predicted, truth = np.asarray(predicted_labels), np.asarray(true_labels)
    if predicted.shape != truth.shape:
        raise ShapeError(RETURN_MSG.labels_length.format(a=predicted.size, b=truth.size))
    if predicted.size == 0:
        return 0.0
    if not permute:
        return float(np.mean(predicted != truth))
    classes = np.union1d(predicted, truth)
    confusion = confusion_matrix(truth, predicted, labels=classes)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    return float(1.0 - confusion[rows, cols].sum() / predicted.size)


def align_labels(predicted_labels: np.ndarray, reference_labels: np.ndarray) -> np.ndarray:
    """
    Relabel predictions by the permutation that best matches the reference labeling.
    """
    predicted, reference = np.asarray(predicted_labels), np.asarray(reference_labels)
    if predicted.shape != reference.shape:
        raise ShapeError(RETURN_MSG.labels_length.format(a=predicted.size, b=reference.size))
    classes = np.union1d(predicted, reference)
    confusion = confusion_matrix(reference, predicted, labels=classes)
    rows, cols = linear_sum_assignment(confusion, maximize=True)
    mapping = dict(zip(classes[cols], classes[rows]))
    return np.array([mapping.get(label, label) for label in predicted])
