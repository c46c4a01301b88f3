"""
End-to-end runs shared by the command line and the HTTP routes. Each run returns a Report plus the arrays
the caller may want to persist.
"""
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np
import uvicorn.logging

from src.conf.config import settings
from src.entity.models import EigenMethod, EigenPairs, EstimateMode, PointCloud
from src.exceptions.exceptions import RETURN_MSG, ParameterError
from src.schemas.schemas import (AllenCahnParams, CGOptions, FastsumParams, KernelSpec, KMeansOptions,
                                 LanczosOptions, NystromOptions, Report)
from src.services.graphop import AdjacencyOperator, build_adjacency_operator, estimate_eta_epsilon
from src.services.learn import (allen_cahn_ssl, kernel_ssl_classify, krr_fit, krr_predict, krr_predict_grid,
                                laplacian_pairs, misclassification_rate, select_training, spectral_cluster)
from src.services.spectral import (dense_reference_apply, dense_reference_eig, lanczos_largest,
                                   nystrom_gaussian_nfft, nystrom_traditional, residual_norms)

logger = logging.getLogger(uvicorn.logging.__name__)


@contextmanager
def timed(timings: dict[str, float], phase: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[phase] = timings.get(phase, 0.0) + time.perf_counter() - start


@dataclass
class EigenRun:
    pairs: EigenPairs
    operator: AdjacencyOperator | None
    timings: dict[str, float] = field(default_factory=dict)


def compute_eigenpairs(nodes: np.ndarray, kernel: KernelSpec, params: FastsumParams, method: EigenMethod, k: int,
                       L: int = 50, M: int | None = None, seed: int = 0, tol: float | None = None) -> EigenRun:
    """
    Leading eigenpairs of A with the chosen method.

    nfft-lanczos and nystrom-gauss-nfft use the fast operator, direct runs Lanczos on exact products, nystrom
    is the traditional sampled extension.
    """
    timings: dict[str, float] = {}
    operator = None
    if method in (EigenMethod.nfft_lanczos, EigenMethod.nystrom_gauss_nfft, EigenMethod.direct):
        with timed(timings, "operator"):
            operator = build_adjacency_operator(nodes, kernel, params, exact=method is EigenMethod.direct)
    with timed(timings, "eigensolver"):
        match method:
            case EigenMethod.nfft_lanczos | EigenMethod.direct:
                options = LanczosOptions(k=k, seed=seed) if tol is None else LanczosOptions(k=k, seed=seed, tol=tol)
                pairs = lanczos_largest(operator, k, options)
            case EigenMethod.nystrom:
                pairs = nystrom_traditional(nodes, kernel, NystromOptions(k=k, L=L, seed=seed))
            case EigenMethod.nystrom_gauss_nfft:
                pairs = nystrom_gaussian_nfft(operator, NystromOptions(k=k, L=L, M=M or k, seed=seed))
    return EigenRun(pairs=pairs, operator=operator, timings=timings)


def eigen_errors(pairs: EigenPairs, nodes: np.ndarray, kernel: KernelSpec,
                 reference: EigenPairs | None = None) -> dict:
    """
    Eigenvalue error against a dense reference and residual norms with A applied exactly.
    """
    exact = dense_reference_apply(nodes, kernel, store=nodes.shape[0] <= settings.dense_budget)
    norms, largest = residual_norms(exact, pairs)
    result = {"residual_norms": norms.tolist(), "max_residual_norm": largest}
    if reference is not None:
        k = min(pairs.k, reference.k)
        result["reference_eigenvalues"] = reference.values[:k].tolist()
        result["max_eigenvalue_error"] = float(np.max(np.abs(pairs.values[:k] - reference.values[:k])))
    return result


def propagation_summary(operator: AdjacencyOperator | None, seed: int = 0) -> dict | None:
    if operator is None:
        return None
    estimate = estimate_eta_epsilon(operator, EstimateMode.sampled, seed=seed)
    return {"mode": estimate.mode.value, "eta": estimate.eta, "epsilon": estimate.epsilon, "bound": estimate.bound,
            "valid": estimate.valid}


def run_eigs(cloud: PointCloud, kernel: KernelSpec, params: FastsumParams, method: EigenMethod, k: int,
             L: int = 50, M: int | None = None, seed: int = 0, with_reference: bool = False,
             parameters: dict | None = None) -> tuple[Report, EigenPairs]:
    run = compute_eigenpairs(cloud.coordinates, kernel, params, method, k, L, M, seed)
    report = Report(command="eigs", method=method.value, seed=seed, n=cloud.n, parameters=parameters or {},
                    eigenvalues=run.pairs.values.tolist(), iterations=run.pairs.iterations,
                    converged=run.pairs.converged, timings=run.timings,
                    propagation=propagation_summary(run.operator, seed))
    if with_reference:
        with timed(report.timings, "reference"):
            reference = dense_reference_eig(cloud.coordinates, kernel, k)
            errors = eigen_errors(run.pairs, cloud.coordinates, kernel, reference)
        report = report.model_copy(update=errors)
    return report, run.pairs


def run_cluster(cloud: PointCloud, kernel: KernelSpec, params: FastsumParams, method: EigenMethod, k: int,
                clusters: int, seed: int = 0, L: int = 50, parameters: dict | None = None) -> tuple[Report, np.ndarray]:
    run = compute_eigenpairs(cloud.coordinates, kernel, params, method, k, L, seed=seed)
    with timed(run.timings, "kmeans"):
        labels = spectral_cluster(run.pairs, clusters, KMeansOptions(seed=seed))
    report = Report(command="cluster", method=method.value, seed=seed, n=cloud.n, parameters=parameters or {},
                    eigenvalues=run.pairs.values.tolist(), iterations=run.pairs.iterations,
                    converged=run.pairs.converged, timings=run.timings)
    if cloud.labels is not None:
        rate = misclassification_rate(labels, cloud.labels, permute=True)
        report = report.model_copy(update={"misclassification_rate": rate, "classification_rate": 1.0 - rate})
    return report, labels


def run_segment(pixels: np.ndarray, kernel: KernelSpec, params: FastsumParams, k: int, seed: int = 0,
                with_reference: bool = False, parameters: dict | None = None) -> tuple[Report, np.ndarray, np.ndarray | None]:
    """
    Image segmentation by spectral clustering of pixel colors; with a reference, the labels of dense
    eigenvectors are computed too and the fraction of differing pixels is reported.
    """
    nodes = pixels.reshape(-1, 3).astype(float)
    cloud = PointCloud(nodes, provenance="image")
    report, labels = run_cluster(cloud, kernel, params, EigenMethod.nfft_lanczos, k, k, seed, parameters=parameters)
    report = report.model_copy(update={"command": "segment"})
    reference_labels = None
    if with_reference:
        with timed(report.timings, "reference"):
            reference = dense_reference_eig(nodes, kernel, k)
            reference_labels = spectral_cluster(reference, k, KMeansOptions(seed=seed))
        difference = misclassification_rate(labels, reference_labels, permute=True)
        report = report.model_copy(update={
            "reference_eigenvalues": reference.values.tolist(),
            "max_eigenvalue_error": float(np.max(np.abs(np.array(report.eigenvalues) - reference.values))),
            "misclassification_rate": difference,
            "diagnostic": f"{difference:.4%} of pixels differ from the dense-eigenvector segmentation",
        })
    return report, labels, reference_labels


def run_ssl_pf(cloud: PointCloud, kernel: KernelSpec, params: FastsumParams, k: int, samples_per_class: int,
               ac_params: AllenCahnParams, seed: int = 0, method: EigenMethod = EigenMethod.nfft_lanczos,
               L: int = 50, parameters: dict | None = None) -> tuple[Report, np.ndarray]:
    if cloud.labels is None:
        raise ParameterError(RETURN_MSG.labels_required.format(task="Phase-field SSL"))
    run = compute_eigenpairs(cloud.coordinates, kernel, params, method, k, L, seed=seed)
    selection = select_training(cloud.labels, samples_per_class, seed, ac_params.omega0)
    with timed(run.timings, "allen_cahn"):
        result = allen_cahn_ssl(laplacian_pairs(run.pairs), selection, ac_params)
    rate = misclassification_rate(result.labels, cloud.labels)
    report = Report(command="ssl-pf", method=method.value, seed=seed, n=cloud.n, parameters=parameters or {},
                    eigenvalues=run.pairs.values.tolist(), iterations=result.steps, converged=result.converged,
                    classification_rate=1.0 - rate, misclassification_rate=rate, timings=run.timings)
    return report, result.labels


def run_ssl_kernel(cloud: PointCloud, kernel: KernelSpec, params: FastsumParams, samples_per_class: int,
                   beta: float, cg: CGOptions, seed: int = 0, truncated_k: int | None = None,
                   method: EigenMethod = EigenMethod.nfft_lanczos, L: int = 50,
                   parameters: dict | None = None) -> tuple[Report, np.ndarray]:
    """
    Kernel SSL by CG on (I + beta L_s) u = f, or, with truncated_k, in closed form on k eigenpairs of A
    computed by `method`.
    """
    if cloud.labels is None:
        raise ParameterError(RETURN_MSG.labels_required.format(task="Kernel SSL"))
    selection = select_training(cloud.labels, samples_per_class, seed)
    timings: dict[str, float] = {}
    if truncated_k:
        run = compute_eigenpairs(cloud.coordinates, kernel, params, method, truncated_k, L, seed=seed)
        timings.update(run.timings)
        with timed(timings, "solve"):
            labels, results = kernel_ssl_classify(run.pairs, selection, beta)
        iterations, converged, method_id = None, True, f"truncated-{method.value}"
    else:
        with timed(timings, "operator"):
            operator = build_adjacency_operator(cloud.coordinates, kernel, params)
        with timed(timings, "solve"):
            labels, results = kernel_ssl_classify(operator, selection, beta, cg)
        iterations = max(result.iterations for result in results)
        converged = all(result.converged for result in results)
        method_id = "cg"
    rate = misclassification_rate(labels, cloud.labels)
    report = Report(command="ssl-kernel", method=method_id, seed=seed, n=cloud.n, parameters=parameters or {},
                    iterations=iterations, converged=converged, classification_rate=1.0 - rate,
                    misclassification_rate=rate, timings=timings)
    return report, labels


def run_krr(cloud: PointCloud, kernel: KernelSpec, params: FastsumParams, beta: float, cg: CGOptions,
            exact: bool = False, grid_resolution: int = 0,
            parameters: dict | None = None) -> tuple[Report, tuple[np.ndarray, np.ndarray, np.ndarray] | None]:
    """
    Two-class kernel ridge regression on +-1 targets; training accuracy by the sign of the fitted function.
    A positive grid_resolution also returns decision-function values on a grid covering the data (2-D only).
    """
    if cloud.labels is None:
        raise ParameterError(RETURN_MSG.labels_required.format(task="Kernel ridge regression"))
    classes = np.unique(cloud.labels)
    if classes.size != 2:
        raise ParameterError(RETURN_MSG.krr_two_classes.format(count=classes.size))
    targets = np.where(cloud.labels == classes[1], 1.0, -1.0)
    timings: dict[str, float] = {}
    with timed(timings, "fit"):
        model = krr_fit(cloud.coordinates, kernel, beta, targets, cg, params, exact)
    with timed(timings, "predict"):
        fitted = krr_predict(model, cloud.coordinates)
    predicted = np.where(fitted > 0, classes[1], classes[0])
    rate = misclassification_rate(predicted, cloud.labels)
    grid = None
    if grid_resolution and cloud.d == 2:
        low, high = cloud.coordinates.min(axis=0), cloud.coordinates.max(axis=0)
        margin = 0.05 * (high - low)
        with timed(timings, "grid"):
            grid = krr_predict_grid(model, (low[0] - margin[0], high[0] + margin[0], low[1] - margin[1],
                                            high[1] + margin[1]), grid_resolution)
    report = Report(command="krr", method="exact" if exact else "fastsum", n=cloud.n, parameters=parameters or {},
                    iterations=model.solve.iterations, converged=model.solve.converged,
                    classification_rate=1.0 - rate, misclassification_rate=rate, timings=timings)
    return report, grid
