from dataclasses import dataclass

import numpy as np


class GraphToolkitError(Exception):
    pass


class ParameterError(GraphToolkitError, ValueError):
    pass


class RangeError(GraphToolkitError, ValueError):
    pass


class ShapeError(GraphToolkitError, ValueError):
    pass


class ParseError(GraphToolkitError, ValueError):
    def __init__(self, message: str, line: int | None = None) -> None:
        super().__init__(message)
        self.line = line


class FormatError(GraphToolkitError, ValueError):
    pass


class ResourceError(GraphToolkitError, MemoryError):
    pass


class NumericalError(GraphToolkitError, ArithmeticError):
    """Failure of a numerical method on otherwise valid input."""


class ConditioningError(NumericalError):
    pass


class DegreePositivityError(NumericalError):
    def __init__(self, message: str, index: int) -> None:
        super().__init__(message)
        self.index = index


class IllConditionedSampleError(NumericalError):
    pass


class ComplexNormalizationError(NumericalError):
    pass


class RankDeficiencyError(NumericalError):
    pass


class IndefiniteOperatorError(NumericalError):
    def __init__(self, message: str, iterate: np.ndarray | None = None, iterations: int = 0,
                 curvature: float = 0.0) -> None:
        super().__init__(message)
        self.iterate = iterate
        self.iterations = iterations
        self.curvature = curvature


class DivergenceError(NumericalError):
    def __init__(self, message: str, step: int) -> None:
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class ReturnMessages:
    dimension_invalid: str = "Dimension must be 1, 2 or 3, got {d}"
    bandwidth_invalid: str = "Bandwidth N must be even and >= 2, got {N}"
    cutoff_invalid: str = "Window cut-off m must be >= 1, got {m}"
    oversampling_invalid: str = "Oversampling factor must be >= 1, got {sigma}"
    node_out_of_range: str = "Node {index} lies outside [-1/2, 1/2)^d"
    shape_mismatch: str = "Expected {expected} entries, got {actual}"
    nodes_shape: str = "Nodes must be an (n, d) array, got shape {shape}"
    nodes_empty: str = "Node set is empty"
    radius_negative: str = "Kernel argument must be nonnegative"
    kernel_param_missing: str = "Kernel {family} requires a positive '{name}' parameter"
    eps_b_invalid: str = "Regularization width eps_B must satisfy 0 <= eps_B < 1/2, got {eps_b}"
    smoothness_invalid: str = "Smoothness order p must be in 1..8, got {p}"
    taylor_ill_conditioned: str = "Two-point Taylor system is ill-conditioned (cond={cond:.3e})"
    sample_count_invalid: str = "Sample count must be >= 1"
    operator_too_small: str = "Graph needs at least two nodes"
    degree_not_positive: str = ("Degree of node {index} is {value:.3e} <= 0; the kernel product is too inaccurate "
                                "for this graph, increase N or m, or the kernel width")
    eta_invalid: str = "eta must be positive, got {eta}"
    k_invalid: str = "Requested {k} eigenpairs from an operator of dimension {n}"
    nystrom_sizes: str = "Need k <= M <= L <= n, got k={k}, M={M}, L={L}, n={n}"
    sample_ill_conditioned: str = "Sampled block W_XX is ill-conditioned (cond={cond:.3e}); choose another seed or smaller L"
    negative_nystrom_degree: str = "Nystrom degree of node {index} is {value:.3e} <= 0; normalization would be complex"
    rank_deficient: str = "Only {found} positive eigenvalues in the sketch, {M} required; increase L"
    indefinite_operator: str = "Operator is not positive definite (p^T A p = {value:.3e}) at CG iteration {iteration}"
    krr_indefinite: str = ("Gram operator is not positive definite (p^T A p = {value:.3e}); the kernel is not positive "
                           "definite, solve the regularized normal equations (K^2 + beta K) alpha = K f instead")
    diverged: str = "Allen-Cahn iteration produced non-finite values at step {step}"
    too_few_vectors: str = "Need at least {needed} eigenvectors, got {available}"
    labels_length: str = "Label vectors differ in length: {a} vs {b}"
    dense_budget: str = "Dense reference for n={n} exceeds the budget of {budget} nodes"
    csv_empty: str = "CSV file is empty"
    csv_ragged: str = "Row has {actual} cells, expected {expected}"
    csv_not_numeric: str = "Cell '{cell}' is not numeric"
    csv_line: str = "line {line}: {detail}"
    image_format: str = "Unsupported image format: {detail}"
    labels_image_size: str = "Expected width*height={expected} labels, got {actual}"
    ppm_truncated: str = "PPM body holds {actual} bytes, the header promises {expected}"
    dataset_sizes: str = "classes and per_class must be >= 1"
    crescent_size: str = "crescent-fullmoon needs n >= 4"
    labels_required: str = "{task} needs labeled points"
    krr_two_classes: str = "Kernel ridge regression expects two classes, got {count}"
    operator_dimension: str = "Dimension is required for a callable operator"
    operator_type: str = "Unsupported operator type {name}"
    class_count: str = "Selection has {found} classes, expected {expected}"
    beta_negative: str = "beta must be nonnegative, got {beta}"
    beta_not_positive: str = "beta must be positive, got {beta}"
    bandwidth_odd: str = "Bandwidth N must be even, got {N}"
    setup_unknown: str = "Unknown setup {number}, expected one of {known}"
    nystrom_order: str = "Need k <= M <= L, got k={k}, M={M}, L={L}"
    coordinates_invalid: str = "coordinates must be a finite (n, d) array"
    labels_per_point: str = "labels must have one entry per point"
    values_per_point: str = "values must have one entry per training point"
    labels_missing: str = "labels are required"
    degree_isolated: str = "Node {index} has no neighbours in the dense reference (degree {value:.3e})"
    dataset_choice: str = "choose exactly one of --spiral, --crescent and --spiral-clusters"
    option_requires: str = "{option} needs {required}"

    healthy: str = "Service is healthy and running"
    unhealthy: str = "Fast summation self-check failed"


RETURN_MSG = ReturnMessages()


def http_status_for(error: GraphToolkitError | ValueError) -> int:
    """Maps errors to HTTP status codes: 413 over budget, 422 numerical failure, 400 invalid input."""
    if isinstance(error, ResourceError):
        return 413
    if isinstance(error, NumericalError):
        return 422
    return 400
