from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.conf.config import settings
from src.entity.models import EigenMethod, KernelFamily
from src.exceptions.exceptions import RETURN_MSG

SETUPS: dict[int, tuple[int, int]] = {1: (16, 2), 2: (32, 4), 3: (64, 7)}


class KernelSpec(BaseModel):
    """
    Radial kernel K(y) = k(||y||) with its shape parameter.

    Gaussian and Laplacian RBF kernels use `sigma`, the multiquadric kernels use `c`.
    """
    family: KernelFamily = KernelFamily.gaussian
    sigma: Optional[float] = Field(default=None, gt=0)
    c: Optional[float] = Field(default=None, gt=0)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def check_shape_parameter(self) -> "KernelSpec":
        name = self.shape_name
        if getattr(self, name) is None:
            raise ValueError(RETURN_MSG.kernel_param_missing.format(family=self.family.value, name=name))
        return self

    @property
    def shape_name(self) -> str:
        if self.family in (KernelFamily.gaussian, KernelFamily.laplacian_rbf):
            return "sigma"
        return "c"

    @property
    def shape(self) -> float:
        return getattr(self, self.shape_name)

    def with_shape(self, value: float) -> "KernelSpec":
        return self.model_copy(update={self.shape_name: value})


class FastsumParams(BaseModel):
    """
    Accuracy controls of the NFFT-based fast summation.

    Attributes:
        N: even trigonometric bandwidth per dimension.
        m: NFFT window cut-off.
        p: smoothness of the boundary regularization, defaults to m.
        eps_b: width of the boundary region, defaults to p/N.
    """
    N: int = Field(default=32, ge=2)
    m: int = Field(default=4, ge=1)
    p: Optional[int] = Field(default=None, ge=1, le=8)
    eps_b: Optional[float] = Field(default=None, ge=0, lt=0.5)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def fill_defaults(self) -> "FastsumParams":
        if self.N % 2:
            raise ValueError(RETURN_MSG.bandwidth_odd.format(N=self.N))
        p = self.p if self.p is not None else min(self.m, 8)
        eps_b = self.eps_b if self.eps_b is not None else min(p / self.N, 0.25)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "eps_b", eps_b)
        return self

    @classmethod
    def setup(cls, number: int, eps_b: float = 0.0) -> "FastsumParams":
        """
        Named accuracy presets.

        Args:
            number: 1 (N=16, m=2), 2 (N=32, m=4) or 3 (N=64, m=7).
            eps_b: regularization width chosen by the caller.
        Returns:
            FastsumParams: the preset with p = m.
        """
        if number not in SETUPS:
            raise ValueError(RETURN_MSG.setup_unknown.format(number=number, known=sorted(SETUPS)))
        N, m = SETUPS[number]
        return cls(N=N, m=m, p=m, eps_b=eps_b)


class LanczosOptions(BaseModel):
    k: int = Field(default=10, ge=1)
    max_iter: Optional[int] = Field(default=None, ge=1)
    tol: float = Field(default_factory=lambda: settings.lanczos_tol, gt=0)
    seed: int = 0


class NystromOptions(BaseModel):
    k: int = Field(default=10, ge=1)
    L: int = Field(default=50, ge=1)
    M: Optional[int] = Field(default=None, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def check_sizes(self) -> "NystromOptions":
        M = self.M if self.M is not None else self.k
        if not self.k <= M <= self.L:
            raise ValueError(RETURN_MSG.nystrom_order.format(k=self.k, M=M, L=self.L))
        self.M = M
        return self


class CGOptions(BaseModel):
    tol: float = Field(default_factory=lambda: settings.cg_tol, gt=0)
    max_iter: int = Field(default_factory=lambda: settings.cg_max_iter, ge=1)


class KMeansOptions(BaseModel):
    restarts: int = Field(default_factory=lambda: settings.kmeans_restarts, ge=1)
    max_iter: int = Field(default=300, ge=1)
    seed: int = 0


class AllenCahnParams(BaseModel):
    tau: float = Field(default=0.1, gt=0)
    eps_ac: float = Field(default=10.0, gt=0)
    omega0: float = Field(default=1e4, ge=0)
    c: Optional[float] = Field(default=None, gt=0)
    tol: float = Field(default=1e-10, gt=0)
    max_steps: int = Field(default=100, ge=1)
    # solve the fidelity term in the linear system instead of lagging it one step
    implicit_fidelity: bool = True

    @model_validator(mode="after")
    def default_convexity(self) -> "AllenCahnParams":
        if self.c is None:
            self.c = 2.0 / self.eps_ac + self.omega0
        return self


class MetricSummary(BaseModel):
    min: float
    avg: float
    max: float


class BenchCell(BaseModel):
    """Benchmark metrics of one method at one size, summarized over seeds."""
    method: EigenMethod
    n: int
    setup: Optional[int] = None
    L: Optional[int] = None
    seeds: list[int]
    # max_j |lambda_j - lambda_j(dense)| per seed
    eigenvalue_error: Optional[MetricSummary] = None
    # max_j ||A v_j - lambda_j v_j||_2 with A applied exactly, per seed
    residual_norm: Optional[MetricSummary] = None
    # seconds per eigensolver run
    wall_time: MetricSummary


class ScalingCell(BaseModel):
    n: int
    setup_time: float = Field(description="seconds to build the fast summation plan")
    matvec_time: float = Field(description="seconds per fast summation matrix-vector product (median)")


class Report(BaseModel):
    """
    Result record written by every command.
    """
    command: str
    method: Optional[str] = None
    status: Literal["ok", "failed"] = "ok"
    parameters: dict[str, Any] = Field(default_factory=dict, description="echo of all inputs needed to rerun")
    seed: Optional[int] = None
    n: Optional[int] = None
    eigenvalues: Optional[list[float]] = Field(default=None, description="computed eigenvalues, descending")
    reference_eigenvalues: Optional[list[float]] = Field(default=None, description="dense reference eigenvalues")
    max_eigenvalue_error: Optional[float] = Field(
        default=None, description="max_j |lambda_j - lambda_j(dense)| against the dense reference")
    residual_norms: Optional[list[float]] = Field(
        default=None, description="||A v_j - lambda_j v_j||_2 per pair with A applied exactly")
    max_residual_norm: Optional[float] = Field(default=None, description="max of residual_norms")
    iterations: Optional[int] = Field(default=None, description="solver iterations or time steps")
    converged: Optional[bool] = None
    classification_rate: Optional[float] = Field(default=None, description="fraction of correctly labeled nodes")
    misclassification_rate: Optional[float] = Field(default=None, description="fraction of mislabeled nodes")
    propagation: Optional[dict[str, Any]] = Field(
        default=None, description="eta = d_min/||W||_inf, epsilon = ||E||_inf/||W||_inf and the resulting bound")
    timings: dict[str, float] = Field(default_factory=dict, description="wall-clock seconds per phase")
    bench: Optional[list[BenchCell]] = None
    scaling: Optional[list[ScalingCell]] = None
    scaling_ratio: Optional[float] = Field(default=None, description="matvec time at the largest n over the smallest")
    outputs: dict[str, str] = Field(default_factory=dict, description="paths of files written besides the report")
    diagnostic: Optional[str] = None


class PointsModel(BaseModel):
    points: list[list[float]] = Field(min_length=1)
    labels: Optional[list[int]] = None


class EigsRequest(PointsModel):
    kernel: KernelSpec
    params: FastsumParams = FastsumParams.setup(2)
    method: EigenMethod = EigenMethod.nfft_lanczos
    k: int = Field(default=10, ge=1)
    L: int = Field(default=50, ge=1)
    M: Optional[int] = None
    seed: int = 0
    with_reference: bool = False


class SSLKernelRequest(PointsModel):
    kernel: KernelSpec
    params: FastsumParams = FastsumParams.setup(2)
    samples_per_class: int = Field(default=25, ge=1)
    beta: float = Field(default=1e4, gt=0)
    seed: int = 0
    cg: CGOptions = CGOptions()


class KRRRequest(BaseModel):
    train_points: list[list[float]] = Field(min_length=1)
    values: list[float] = Field(min_length=1)
    query_points: list[list[float]] = Field(min_length=1)
    kernel: KernelSpec
    params: FastsumParams = FastsumParams.setup(3)
    beta: float = Field(default=1e-3, gt=0)
    exact: bool = False
    cg: CGOptions = CGOptions(tol=1e-8)


class KRRResponse(BaseModel):
    predictions: list[float]
    iterations: int
    converged: bool
