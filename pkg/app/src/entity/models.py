import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from src.exceptions.exceptions import RETURN_MSG

if TYPE_CHECKING:
    from src.schemas.schemas import FastsumParams, KernelSpec


class KernelFamily(str, enum.Enum):
    gaussian = "gaussian"
    laplacian_rbf = "laplacian-rbf"
    multiquadric = "multiquadric"
    inverse_multiquadric = "inv-multiquadric"


class EigenMethod(str, enum.Enum):
    """Eigensolver choices."""
    nfft_lanczos = "nfft-lanczos"
    nystrom = "nystrom"
    nystrom_gauss_nfft = "nystrom-gauss-nfft"
    direct = "direct"


class EstimateMode(str, enum.Enum):
    sampled = "sampled"
    exact = "exact"


@dataclass
class PointCloud:
    """
    Vertices of a kernel graph: n data vectors in R^d with optional integer labels.

    Attributes:
        coordinates: (n, d) float array.
        labels: optional (n,) integer array.
        provenance: generator name and seed, or the source file path.
    """
    coordinates: np.ndarray
    labels: np.ndarray | None = None
    provenance: str = ""

    def __post_init__(self):
        coordinates = np.asarray(self.coordinates, dtype=float)
        if coordinates.ndim == 1:
            coordinates = coordinates[:, None]
        if coordinates.ndim != 2 or not np.all(np.isfinite(coordinates)):
            raise ValueError(RETURN_MSG.coordinates_invalid)
        self.coordinates = coordinates
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (coordinates.shape[0],):
                raise ValueError(RETURN_MSG.labels_per_point)
            self.labels = labels

    @property
    def n(self) -> int:
        return self.coordinates.shape[0]

    @property
    def d(self) -> int:
        return self.coordinates.shape[1]


@dataclass
class EigenPairs:
    """
    Eigenvalues in descending order with orthonormal eigenvector columns.

    Solver metadata (iterations, convergence, residual estimates) is attached when available.
    """
    values: np.ndarray
    vectors: np.ndarray
    iterations: int = 0
    converged: bool = True
    residual_estimates: np.ndarray | None = None

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def truncated(self, k: int) -> "EigenPairs":
        return EigenPairs(values=self.values[:k], vectors=self.vectors[:, :k], iterations=self.iterations,
                          converged=self.converged,
                          residual_estimates=None if self.residual_estimates is None else self.residual_estimates[:k])


@dataclass
class LanczosState:
    basis: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    iterations: int = 0


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool
    relative_residual: float


@dataclass
class KMeansResult:
    labels: np.ndarray
    centroids: np.ndarray
    wcss: float


@dataclass
class PropagationEstimate:
    eta: float
    epsilon: float
    bound: float | None
    mode: EstimateMode

    @property
    def valid(self) -> bool:
        return self.bound is not None


@dataclass
class TrainingSelection:
    """
    Known labels for semi-supervised learning.

    Attributes:
        indices: one index array per class, disjoint.
        classes: class label values in the order of `indices`.
        n: number of graph nodes.
        omega0: fidelity strength on training nodes.
    """
    indices: list[np.ndarray]
    classes: np.ndarray
    n: int
    omega0: float = 1.0

    @property
    def training_indices(self) -> np.ndarray:
        return np.concatenate(self.indices) if self.indices else np.empty(0, dtype=int)

    @property
    def mask(self) -> np.ndarray:
        omega = np.zeros(self.n)
        omega[self.training_indices] = self.omega0
        return omega

    def channel_fidelity(self, channel: int) -> np.ndarray:
        """One-vs-rest fidelity: +1 on the channel's training nodes, -1 on other training nodes, 0 elsewhere."""
        f = np.zeros(self.n)
        for position, idx in enumerate(self.indices):
            f[idx] = 1.0 if position == channel else -1.0
        return f

    @property
    def fidelity(self) -> np.ndarray:
        """Two-class fidelity vector: -1 for the first class, +1 for the second."""
        return self.channel_fidelity(len(self.indices) - 1)


@dataclass
class RidgeModel:
    kernel: "KernelSpec"
    nodes: np.ndarray
    alpha: np.ndarray
    beta: float
    params: "FastsumParams | None" = None
    exact: bool = False
    solve: CGResult | None = field(default=None, repr=False)


@dataclass
class PhaseFieldResult:
    labels: np.ndarray
    u: np.ndarray
    steps: int
    converged: bool
