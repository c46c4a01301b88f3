"""
Radial kernels, their boundary regularization and trigonometric approximation.

A kernel K(y) = k(||y||) is made 1-periodic by the regularized kernel

    K_R(y) = k(r)      r <= 1/2 - eps_B
           = T_B(r)    1/2 - eps_B < r <= 1/2
           = T_B(1/2)  r > 1/2

where T_B is the two-point Taylor polynomial of degree 2p - 1 matching k and its first p - 1 derivatives
at r0 = 1/2 - eps_B and having vanishing derivatives of orders 1..p at r = 1/2.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.linalg
import uvicorn.logging
from numpy.polynomial import Polynomial

from src.entity.models import KernelFamily
from src.exceptions.exceptions import RETURN_MSG, ConditioningError, ParameterError
from src.schemas.schemas import KernelSpec
from src.services.nfft import FrequencyIndexSet, direct_ndft

logger = logging.getLogger(uvicorn.logging.__name__)

MAX_SMOOTHNESS = 8
MAX_TAYLOR_CONDITION = 1e14


def eval_kernel(spec: KernelSpec, r: np.ndarray | float) -> np.ndarray | float:
    """
    Evaluate the radial profile k(r).

    Args:
        spec: kernel family and shape parameter.
        r: nonnegative distances (scalar or array).
    Returns:
        Kernel values with the shape of r.
    Raises:
        ParameterError: negative distance.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ParameterError(RETURN_MSG.radius_negative)
    match spec.family:
        case KernelFamily.gaussian:
            values = np.exp(-(r / spec.sigma) ** 2)
        case KernelFamily.laplacian_rbf:
            values = np.exp(-r / spec.sigma)
        case KernelFamily.multiquadric:
            values = np.sqrt(r * r + spec.c ** 2)
        case KernelFamily.inverse_multiquadric:
            values = 1.0 / np.sqrt(r * r + spec.c ** 2)
    return values[()] if values.ndim == 0 else values


def taylor_coefficients(spec: KernelSpec, r0: float, order: int) -> np.ndarray:
    """
    Taylor coefficients a_0..a_order of k around r0, k(r0 + h) = sum_k a_k h^k.

    Exponential kernels use the power-series recurrence of exp(v(h)), multiquadrics the one of u(h)^a
    with u(h) = (r0 + h)^2 + c^2.
    """
    a = np.zeros(order + 1)
    if spec.family in (KernelFamily.gaussian, KernelFamily.laplacian_rbf):
        if spec.family is KernelFamily.gaussian:
            v = np.array([-(r0 / spec.sigma) ** 2, -2.0 * r0 / spec.sigma ** 2, -1.0 / spec.sigma ** 2])
        else:
            v = np.array([-r0 / spec.sigma, -1.0 / spec.sigma])
        a[0] = math.exp(v[0])
        for k in range(1, order + 1):
            j = np.arange(1, min(k, len(v) - 1) + 1)
            a[k] = np.sum(j * v[j] * a[k - j]) / k
        return a

    power = 0.5 if spec.family is KernelFamily.multiquadric else -0.5
    u = np.array([r0 * r0 + spec.c ** 2, 2.0 * r0, 1.0])
    a[0] = u[0] ** power
    for k in range(1, order + 1):
        j = np.arange(1, min(k, 2) + 1)
        a[k] = np.sum(((power + 1.0) * j - k) * u[j] * a[k - j]) / (k * u[0])
    return a


def kernel_derivatives(spec: KernelSpec, r0: float, order: int) -> np.ndarray:
    """Radial derivatives k^(0..order)(r0)."""
    factorials = np.array([math.factorial(k) for k in range(order + 1)], dtype=float)
    return taylor_coefficients(spec, r0, order) * factorials


def two_point_taylor(spec: KernelSpec, eps_b: float, p: int) -> Polynomial:
    """
    Solve the 2p x 2p Hermite system for the boundary blend T_B.

    The polynomial is built in the variable s = (r - r_mid) / (eps_B / 2) on [-1, 1]; the returned
    numpy Polynomial carries that domain mapping, so it is evaluated and differentiated in r.

    Args:
        spec: kernel to blend.
        eps_b: boundary-region width, 0 < eps_B < 1/2.
        p: smoothness order, 1..8.
    Returns:
        Polynomial: T_B of degree <= 2p - 1.
    Raises:
        ParameterError: eps_b or p out of range.
        ConditioningError: interpolation matrix condition number above 1e14.
    """
    if not 0 < eps_b < 0.5:
        raise ParameterError(RETURN_MSG.eps_b_invalid.format(eps_b=eps_b))
    if not 1 <= p <= MAX_SMOOTHNESS:
        raise ParameterError(RETURN_MSG.smoothness_invalid.format(p=p))

    r0 = 0.5 - eps_b
    half_width = eps_b / 2.0
    size = 2 * p
    powers = np.arange(size)

    def row(s: float, order: int) -> np.ndarray:
        falling = np.array([math.perm(i, order) for i in powers], dtype=float)
        exponent = np.clip(powers - order, 0, None)
        return np.where(powers >= order, falling * s ** exponent, 0.0)

    derivatives = kernel_derivatives(spec, r0, p - 1)
    matrix = np.empty((size, size))
    rhs = np.zeros(size)
    for order in range(p):
        matrix[order] = row(-1.0, order)
        rhs[order] = derivatives[order] * half_width ** order
    for order in range(1, p + 1):
        matrix[p + order - 1] = row(1.0, order)

    condition = np.linalg.cond(matrix)
    if not np.isfinite(condition) or condition > MAX_TAYLOR_CONDITION:
        raise ConditioningError(RETURN_MSG.taylor_ill_conditioned.format(cond=condition))
    coefficients = scipy.linalg.solve(matrix, rhs)
    return Polynomial(coefficients, domain=[r0, 0.5], window=[-1.0, 1.0])


@dataclass(frozen=True)
class RegularizedKernel:
    """
    Periodizable kernel K_R. With eps_b == 0 the blend is the constant k(1/2), i.e. K truncated at r = 1/2.
    """
    base: KernelSpec
    eps_b: float
    p: int
    blend: Polynomial

    @property
    def r0(self) -> float:
        return 0.5 - self.eps_b

    @property
    def tail(self) -> float:
        return float(self.blend(0.5))

    def radial(self, r: np.ndarray | float) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        inner = r <= self.r0
        values = np.where(inner, eval_kernel(self.base, np.where(inner, r, 0.0)), 0.0)
        if self.eps_b > 0:
            middle = ~inner & (r <= 0.5)
            values = np.where(middle, self.blend(np.clip(r, self.r0, 0.5)), values)
            outer = r > 0.5
        else:
            outer = ~inner
        return np.where(outer, self.tail, values)

    def __call__(self, y: np.ndarray) -> np.ndarray:
        return self.radial(np.linalg.norm(np.atleast_1d(y), axis=-1))


def regularize(spec: KernelSpec, eps_b: float, p: int) -> RegularizedKernel:
    if not 0 <= eps_b < 0.5:
        raise ParameterError(RETURN_MSG.eps_b_invalid.format(eps_b=eps_b))
    if eps_b == 0:
        logger.debug("eps_B = 0: kernel truncated at r = 1/2 without smoothing")
        return RegularizedKernel(spec, 0.0, p, Polynomial([float(eval_kernel(spec, 0.5))]))
    return RegularizedKernel(spec, eps_b, p, two_point_taylor(spec, eps_b, p))


def eval_regularized(kr: RegularizedKernel, y: np.ndarray) -> np.ndarray | float:
    values = kr(y)
    return values[()] if np.ndim(values) == 0 else values


@dataclass(frozen=True)
class KernelCoefficients:
    """
    Fourier coefficients b_l of K_R on I_N, shaped (N,)*d in index-set order.
    """
    values: np.ndarray
    N: int
    d: int
    eps_b: float
    p: int

    @property
    def index_set(self) -> FrequencyIndexSet:
        return FrequencyIndexSet(self.d, self.N)


def kernel_fourier_coefficients(kr: RegularizedKernel, N: int, d: int) -> KernelCoefficients:
    """
    b_l = N^-d sum_{j in I_N} K_R(j/N) exp(-2 pi i j.l/N), one FFT of size N^d.

    Args:
        kr: regularized kernel.
        N: even bandwidth.
        d: dimension.
    Returns:
        KernelCoefficients: coefficients interpolating K_R on the grid I_N/N.
    """
    index_set = FrequencyIndexSet(d, N)
    axis = np.arange(-N // 2, N // 2) / N
    grids = np.meshgrid(*([axis] * d), indexing="ij")
    radius = np.sqrt(sum(g * g for g in grids))
    samples = kr.radial(radius)
    values = scipy.fft.fftshift(scipy.fft.fftn(scipy.fft.ifftshift(samples))) / index_set.size
    values.flags.writeable = False
    return KernelCoefficients(values=values, N=N, d=d, eps_b=kr.eps_b, p=kr.p)


def sample_ball(d: int, radius: float, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the closed d-ball of the given radius."""
    directions = rng.standard_normal((count, d))
    directions /= np.maximum(np.linalg.norm(directions, axis=1, keepdims=True), np.finfo(float).tiny)
    return directions * radius * rng.random((count, 1)) ** (1.0 / d)


def kernel_approx_error(spec: KernelSpec, coeffs: KernelCoefficients, sample_count: int = 1000,
                        seed: int = 0, points: np.ndarray | None = None) -> float:
    """
    Sampled estimate of the kernel approximation error max |K(y) - sum_l b_l exp(2 pi i l.y)|.

    Args:
        spec: the kernel the coefficients approximate.
        coeffs: Fourier coefficients of its regularization.
        sample_count: number of random points with ||y|| <= 1/2 - eps_B.
        seed: RNG seed.
        points: explicit sample points, overriding sample_count/seed.
    Returns:
        float: the largest deviation over the samples.
    Raises:
        ParameterError: sample_count < 1.
    """
    if points is None:
        if sample_count < 1:
            raise ParameterError(RETURN_MSG.sample_count_invalid)
        points = sample_ball(coeffs.d, 0.5 - coeffs.eps_b, sample_count, np.random.default_rng(seed))
    points = np.asarray(points, dtype=float).reshape(-1, coeffs.d)
    exact = eval_kernel(spec, np.linalg.norm(points, axis=1))
    approx = direct_ndft(points, coeffs.values)
    return float(np.max(np.abs(exact - approx)))
