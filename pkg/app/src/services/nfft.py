"""
Nonequispaced fast Fourier transforms on the torus [-1/2, 1/2)^d.

Forward transform:  f_j = sum_{l in I_N} fhat_l exp(+2 pi i l.v_j)
Adjoint transform:  h_l = sum_j x_j exp(-2 pi i l.v_j)

I_N = {-N/2, ..., N/2 - 1}^d, coefficient arrays are shaped (N,)*d and indexed in C order, so the flat
position of l is the row-major index of l + N/2.

The fast transforms grid onto an oversampled lattice of n = sigma*N points (rounded up to even) with the
Kaiser-Bessel window

    phi(x)     = sinh(b sqrt(m^2 - (n x)^2)) / (pi sqrt(m^2 - (n x)^2)),   |n x| <= m
    phi_hat(k) = I_0(m sqrt(b^2 - (2 pi k / n)^2)) / n,                     b = pi (2 - 1/sigma)

and divide by phi_hat on I_N. Error decays like exp(-b m).
"""
import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.fft
import uvicorn.logging
from scipy.special import i0

from src.conf.config import settings
from src.exceptions.exceptions import RETURN_MSG, ParameterError, RangeError, ShapeError

logger = logging.getLogger(uvicorn.logging.__name__)


class FrequencyIndexSet:
    """The index set I_N in d dimensions."""

    def __init__(self, d: int, N: int) -> None:
        if d not in (1, 2, 3):
            raise ParameterError(RETURN_MSG.dimension_invalid.format(d=d))
        if N < 2 or N % 2:
            raise ParameterError(RETURN_MSG.bandwidth_invalid.format(N=N))
        self.d = d
        self.N = N

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def size(self) -> int:
        return self.N ** self.d

    def frequencies(self) -> np.ndarray:
        """All l in I_N as an (N^d, d) integer array, lexicographic (last coordinate fastest)."""
        axis = np.arange(-self.N // 2, self.N // 2)
        grids = np.meshgrid(*([axis] * self.d), indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=1)

    def reshape(self, coefficients: np.ndarray) -> np.ndarray:
        coefficients = np.asarray(coefficients)
        if coefficients.size != self.size:
            raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=self.size, actual=coefficients.size))
        return coefficients.reshape(self.shape)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FrequencyIndexSet) and (self.d, self.N) == (other.d, other.N)

    def __repr__(self) -> str:
        return f"FrequencyIndexSet(d={self.d}, N={self.N})"


def as_nodes(nodes: np.ndarray, d: int | None = None) -> np.ndarray:
    """
    Coerce node input to a float (n, d) array.

    Args:
        nodes: (n, d) array, or (n,) for d = 1.
        d: expected dimension, if known.
    Returns:
        np.ndarray: (n, d) float array.
    Raises:
        ShapeError: wrong rank or dimension.
    """
    nodes = np.asarray(nodes, dtype=float)
    if nodes.ndim == 1 and d in (None, 1):
        nodes = nodes[:, None]
    if nodes.ndim != 2 or (d is not None and nodes.shape[1] != d):
        raise ShapeError(RETURN_MSG.nodes_shape.format(shape=nodes.shape))
    return nodes


def oversampled_size(N: int, sigma: float) -> int:
    n = int(np.ceil(sigma * N))
    return n + (n % 2)


def kaiser_bessel_shape(N: int, n: int) -> float:
    return np.pi * (2.0 - N / n)


def kaiser_bessel_window(delta: np.ndarray, m: int, b: float) -> np.ndarray:
    """
    Window values at offsets delta = n*x measured in grid cells; zero outside |delta| <= m.
    """
    arg = m * m - delta * delta
    inside = arg > 0
    root = np.sqrt(np.where(inside, arg, 1.0))
    values = np.where(inside, np.sinh(b * root) / (np.pi * root), 0.0)
    # limit at |delta| == m
    return np.where(arg == 0, b / np.pi, values)


def kaiser_bessel_hat(k: np.ndarray, m: int, b: float, n: int) -> np.ndarray:
    arg = b * b - (2.0 * np.pi * k / n) ** 2
    return i0(m * np.sqrt(np.maximum(arg, 0.0))) / n


class NfftPlan:
    """
    Precomputed NFFT for a fixed node set.

    Gridding tables (lattice indices and window values per node and dimension) are built once; the plan is
    immutable and can be applied from several threads with distinct input arrays.

    Args:
        d: dimension, 1..3.
        N: even bandwidth.
        m: window cut-off.
        nodes: (n, d) nodes in [-1/2, 1/2)^d.
        sigma: oversampling factor (defaults to settings.nfft_oversampling).
        workers: FFT/gridding threads (defaults to settings.effective_threads()).
    Raises:
        ParameterError: invalid d, N, m or sigma.
        RangeError: a node outside the half-open cube.
    """

    def __init__(self, d: int, N: int, m: int, nodes: np.ndarray, sigma: float | None = None,
                 workers: int | None = None) -> None:
        self.index_set = FrequencyIndexSet(d, N)
        if m < 1:
            raise ParameterError(RETURN_MSG.cutoff_invalid.format(m=m))
        sigma = settings.nfft_oversampling if sigma is None else sigma
        if sigma < 1:
            raise ParameterError(RETURN_MSG.oversampling_invalid.format(sigma=sigma))
        nodes = as_nodes(nodes, d)
        bad = np.flatnonzero(np.any((nodes < -0.5) | (nodes >= 0.5), axis=1))
        if bad.size:
            raise RangeError(RETURN_MSG.node_out_of_range.format(index=int(bad[0])))

        self.d, self.N, self.m = d, N, m
        self.n_nodes = nodes.shape[0]
        self.n_grid = oversampled_size(N, sigma)
        self.b = kaiser_bessel_shape(N, self.n_grid)
        self.workers = settings.effective_threads() if workers is None else workers
        self.chunk_size = max(1, settings.nfft_chunk_size)

        u = nodes * self.n_grid
        offsets = np.arange(2 * m + 2)
        base = np.floor(u).astype(np.int64) - m
        lattice = base[:, :, None] + offsets
        self._grid_index = np.mod(lattice, self.n_grid)
        self._window = kaiser_bessel_window(u[:, :, None] - lattice, m, self.b)

        k = np.arange(-N // 2, N // 2)
        hat = kaiser_bessel_hat(k, m, self.b, self.n_grid)
        deconvolution = hat
        for _ in range(d - 1):
            deconvolution = np.multiply.outer(deconvolution, hat)
        self._deconvolution = deconvolution
        self._lo = self.n_grid // 2 - N // 2

        for array in (self._grid_index, self._window, self._deconvolution):
            array.flags.writeable = False
        logger.debug(f"NFFT plan d={d} N={N} m={m} n={self.n_nodes} grid={self.n_grid}")

    @property
    def grid_shape(self) -> tuple[int, ...]:
        return (self.n_grid,) * self.d

    def _chunks(self):
        for start in range(0, self.n_nodes, self.chunk_size):
            yield slice(start, min(start + self.chunk_size, self.n_nodes))

    def _tensor_tables(self, chunk: slice) -> tuple[np.ndarray, np.ndarray]:
        """Flat lattice indices and tensor-product weights, each (chunk, (2m+2)^d)."""
        index = self._grid_index[chunk]
        window = self._window[chunk]
        flat = index[:, 0, :]
        weights = window[:, 0, :]
        for t in range(1, self.d):
            flat = (flat[:, :, None] * self.n_grid + index[:, t, None, :]).reshape(flat.shape[0], -1)
            weights = (weights[:, :, None] * window[:, t, None, :]).reshape(weights.shape[0], -1)
        return flat, weights

    def _map(self, function, chunks):
        if self.workers == 1 or self.n_nodes <= self.chunk_size:
            yield from map(function, chunks)
            return
        with ThreadPoolExecutor(max_workers=None if self.workers < 0 else self.workers) as pool:
            yield from pool.map(function, chunks)

    def forward(self, fhat: np.ndarray) -> np.ndarray:
        """
        Evaluate the trigonometric polynomial with coefficients fhat at all nodes.

        Args:
            fhat: N^d coefficients in index-set order.
        Returns:
            np.ndarray: complex values, length n.
        Raises:
            ShapeError: wrong number of coefficients.
        """
        fhat = self.index_set.reshape(fhat)
        spectrum = np.zeros(self.grid_shape, dtype=complex)
        block = (slice(self._lo, self._lo + self.N),) * self.d
        spectrum[block] = fhat / self._deconvolution
        grid = scipy.fft.ifftn(scipy.fft.ifftshift(spectrum), workers=self.workers).ravel()

        out = np.empty(self.n_nodes, dtype=complex)

        def interpolate(chunk: slice):
            flat, weights = self._tensor_tables(chunk)
            return chunk, np.einsum("ij,ij->i", grid[flat], weights)

        for chunk, values in self._map(interpolate, self._chunks()):
            out[chunk] = values
        return out

    def adjoint(self, x: np.ndarray) -> np.ndarray:
        """
        Adjoint transform of node values x.

        Args:
            x: length-n values.
        Returns:
            np.ndarray: complex coefficients shaped (N,)*d.
        Raises:
            ShapeError: wrong length.
        """
        x = np.asarray(x)
        if x.shape != (self.n_nodes,):
            raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=self.n_nodes, actual=x.size))
        x = x.astype(complex, copy=False)
        size = self.n_grid ** self.d

        def spread(chunk: slice):
            flat, weights = self._tensor_tables(chunk)
            flat = flat.ravel()
            real = np.bincount(flat, weights=(x[chunk].real[:, None] * weights).ravel(), minlength=size)
            imag = np.bincount(flat, weights=(x[chunk].imag[:, None] * weights).ravel(), minlength=size)
            return real + 1j * imag

        grid = np.zeros(size, dtype=complex)
        # partial grids are summed in chunk order
        for partial in self._map(spread, self._chunks()):
            grid += partial
        spectrum = scipy.fft.fftshift(scipy.fft.fftn(grid.reshape(self.grid_shape), workers=self.workers))
        block = (slice(self._lo, self._lo + self.N),) * self.d
        return spectrum[block] / (size * self._deconvolution)


def plan_nfft(d: int, N: int, m: int, nodes: np.ndarray) -> NfftPlan:
    return NfftPlan(d, N, m, nodes)


def nfft_forward(plan: NfftPlan, fhat: np.ndarray) -> np.ndarray:
    return plan.forward(fhat).ravel()


def nfft_adjoint(plan: NfftPlan, x: np.ndarray) -> np.ndarray:
    return plan.adjoint(x)


def nfft_forward_real(plan: NfftPlan, fhat: np.ndarray) -> np.ndarray:
    """
    Forward transform of coefficients whose symmetry makes the result real.

    The imaginary residue is checked against 1e-8 times the output scale when settings.debug_checks is on.
    """
    values = plan.forward(fhat)
    if settings.debug_checks:
        scale = max(np.max(np.abs(values.real), initial=0.0), np.finfo(float).tiny)
        residue = np.max(np.abs(values.imag), initial=0.0)
        if residue > 1e-8 * scale:
            raise AssertionError(f"imaginary residue {residue:.3e} exceeds 1e-8 x {scale:.3e}")
    return values.real


def _chunked_phases(nodes: np.ndarray, frequencies: np.ndarray, sign: float, chunk: int = 1024):
    for start in range(0, nodes.shape[0], chunk):
        stop = min(start + chunk, nodes.shape[0])
        yield slice(start, stop), np.exp(sign * 2j * np.pi * (nodes[start:stop] @ frequencies.T))


def direct_ndft(nodes: np.ndarray, fhat: np.ndarray) -> np.ndarray:
    """
    Exact O(n N^d) forward transform; fhat must be shaped (N,)*d.
    """
    fhat = np.asarray(fhat)
    index_set = FrequencyIndexSet(fhat.ndim, fhat.shape[0])
    nodes = as_nodes(nodes, index_set.d)
    coefficients = index_set.reshape(fhat).ravel()
    out = np.empty(nodes.shape[0], dtype=complex)
    for rows, phases in _chunked_phases(nodes, index_set.frequencies(), +1.0):
        out[rows] = phases @ coefficients
    return out


def direct_adjoint_ndft(nodes: np.ndarray, x: np.ndarray, N: int) -> np.ndarray:
    """
    Exact O(n N^d) adjoint transform, returned shaped (N,)*d.
    """
    nodes = as_nodes(nodes)
    x = np.asarray(x)
    if x.shape != (nodes.shape[0],):
        raise ShapeError(RETURN_MSG.shape_mismatch.format(expected=nodes.shape[0], actual=x.size))
    index_set = FrequencyIndexSet(nodes.shape[1], N)
    out = np.zeros(index_set.size, dtype=complex)
    for rows, phases in _chunked_phases(nodes, index_set.frequencies(), -1.0):
        out += x[rows] @ phases
    return out.reshape(index_set.shape)
