"""Low-level Fourier differential operators on uniform periodic grids.

Everything here works on raw numpy arrays.  A torus of complex dimension
``dim`` is sampled on ``(N,)*(2*dim)`` points over [0,1)^(2*dim); axis
``2*j`` is the real part x_j and axis ``2*j+1`` the imaginary part y_j of
the j-th complex coordinate z^j = x_j + i*y_j.  Arrays may carry extra
trailing axes (e.g. matrix indices, or a batch of base points for
fiberwise operators); the ``axes`` argument says which axes are the
periodic directions.

Derivatives are exact Fourier multipliers; there is no dealiasing.
"""

from __future__ import annotations

import numpy as np


def coordinates(dim: int, samples: int) -> list[np.ndarray]:
    """Broadcastable coordinate arrays (x_1, y_1, ..., x_dim, y_dim)."""
    ticks = np.arange(samples) / samples
    out = []
    for axis in range(2 * dim):
        shape = [1] * (2 * dim)
        shape[axis] = samples
        out.append(ticks.reshape(shape))
    return out


def _freq(samples: int) -> np.ndarray:
    # integer wave numbers 0, 1, ..., N/2-1, -N/2, ..., -1
    return np.fft.fftfreq(samples, d=1.0 / samples)


def _freq_along(shape_len: int, axis: int, samples: int) -> np.ndarray:
    shape = [1] * shape_len
    shape[axis] = samples
    return _freq(samples).reshape(shape)


def second_derivatives(values: np.ndarray, axes: tuple[int, ...]) -> dict:
    """All mixed second partials d^2/da db for a, b in ``axes`` (a <= b).

    Returns a dict keyed by (a, b).  Spectrally exact for band-limited
    data; real input gives real output.
    """
    samples = values.shape[axes[0]]
    spec = np.fft.fftn(values, axes=axes)
    out = {}
    mults = {a: 2j * np.pi * _freq_along(values.ndim, a, samples) for a in axes}
    for i, a in enumerate(axes):
        for b in axes[i:]:
            out[(a, b)] = np.fft.ifftn(spec * mults[a] * mults[b], axes=axes).real
    return out


def derivative(values: np.ndarray, axis: int, axes: tuple[int, ...]) -> np.ndarray:
    """First partial along one periodic axis (may be complex input)."""
    samples = values.shape[axis]
    spec = np.fft.fftn(values, axes=axes)
    mult = 2j * np.pi * _freq_along(values.ndim, axis, samples)
    der = np.fft.ifftn(spec * mult, axes=axes)
    return der.real if np.isrealobj(values) else der


def ddbar(values: np.ndarray, dim: int, axes: tuple[int, ...] | None = None) -> np.ndarray:
    """Coefficient matrix h_{j kbar} = d^2 values / dz^j dzbar^k.

    The complex Hessian of a real potential:
    h_{j kbar} = (f_{x_j x_k} + f_{y_j y_k})/4 + i (f_{x_j y_k} - f_{y_j x_k})/4.
    Output has shape values.shape + (dim, dim), is exactly Hermitian and
    (entrywise) exactly mean free.
    """
    if axes is None:
        axes = tuple(range(2 * dim))
    d2 = second_derivatives(values, axes)

    def look(a, b):
        return d2[(a, b)] if a <= b else d2[(b, a)]

    h = np.zeros(values.shape + (dim, dim), dtype=complex)
    for j in range(dim):
        xj, yj = axes[2 * j], axes[2 * j + 1]
        for k in range(j, dim):
            xk, yk = axes[2 * k], axes[2 * k + 1]
            re = 0.25 * (look(xj, xk) + look(yj, yk))
            im = 0.25 * (look(xj, yk) - look(yj, xk))
            if k == j:
                h[..., j, j] = re
            else:
                h[..., j, k] = re + 1j * im
                h[..., k, j] = re - 1j * im
    return h


def holo_derivative(values: np.ndarray, j: int, axes: tuple[int, ...]) -> np.ndarray:
    """d/dz^j = (d/dx_j - i d/dy_j)/2 along the j-th complex coordinate."""
    dx = derivative(values, axes[2 * j], axes)
    dy = derivative(values, axes[2 * j + 1], axes)
    return 0.5 * (dx - 1j * dy)


def antiholo_derivative(values: np.ndarray, j: int, axes: tuple[int, ...]) -> np.ndarray:
    """d/dzbar^j = (d/dx_j + i d/dy_j)/2."""
    dx = derivative(values, axes[2 * j], axes)
    dy = derivative(values, axes[2 * j + 1], axes)
    return 0.5 * (dx + 1j * dy)


def holo_symbols(dim: int, samples: int, ndim: int, axes: tuple[int, ...]) -> list[np.ndarray]:
    """Fourier symbols s_j of d/dz^j; d/dzbar^k has symbol -conj(s_k)."""
    out = []
    for j in range(dim):
        p = _freq_along(ndim, axes[2 * j], samples)
        q = _freq_along(ndim, axes[2 * j + 1], samples)
        out.append(np.pi * (q + 1j * p))
    return out


def constant_coefficient_solve(
    rhs: np.ndarray,
    matrix: np.ndarray,
    dim: int,
    axes: tuple[int, ...] | None = None,
) -> np.ndarray:
    """Invert sum_{j,k} A[k,j] d^2/dz^j dzbar^k with constant Hermitian A > 0.

    The zero mode is projected out of both input and output, so this is
    the inverse on mean-zero functions.  Used as the Newton
    preconditioner and as the exact solver for one-dimensional
    Monge-Ampere equations, which are linear.
    """
    if axes is None:
        axes = tuple(range(2 * dim))
    samples = rhs.shape[axes[0]]
    s = holo_symbols(dim, samples, rhs.ndim, axes)
    # operator symbol is -(s^H A s), real and < 0 away from the zero mode
    symbol = np.zeros((1,) * rhs.ndim)
    for j in range(dim):
        for k in range(dim):
            symbol = symbol - (matrix[k, j] * s[j] * np.conj(s[k])).real
    spec = np.fft.fftn(rhs, axes=axes)
    with np.errstate(divide="ignore", invalid="ignore"):
        spec = np.where(symbol != 0.0, spec / symbol, 0.0)
    sol = np.fft.ifftn(spec, axes=axes)
    return sol.real if np.isrealobj(rhs) else sol


def mean_zero(values: np.ndarray, axes: tuple[int, ...] | None = None) -> np.ndarray:
    return values - values.mean(axis=axes, keepdims=axes is not None)
