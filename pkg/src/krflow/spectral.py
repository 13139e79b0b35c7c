"""Fourier-multiplier machinery on periodic grids.

Conventions, frozen once for the whole package:

* integer frequencies k in [-N/2, N/2) per axis, period 1, so the
  derivative multiplier along an axis is (2*pi*i*k)^order;
* odd-order multipliers zero the Nyquist frequency k = -N/2 (keeps real
  fields real and Hermitian outputs Hermitian), even orders keep it;
* holomorphic derivative d/dz_j = (d/dx_j - i d/dy_j) / 2 with x_j, y_j
  the two real axes of complex coordinate j.
"""
from __future__ import annotations

import numpy as np

from .grid import PeriodicGrid

_TWO_PI = 2.0 * np.pi


def _axis_multiplier(grid: PeriodicGrid, order: int) -> np.ndarray:
    """(2 pi i k)^order as a 1D complex array, Nyquist zeroed for odd order."""
    m = (_TWO_PI * 1j * grid.freqs) ** order
    if order % 2 == 1:
        m[grid.nyquist_index] = 0.0
    return m


def _reshape_for(grid: PeriodicGrid, mult_1d: np.ndarray, axis: int) -> np.ndarray:
    shape = [1] * grid.real_dim
    shape[axis] = grid.resolution
    return mult_1d.reshape(shape)


def forward(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    return np.fft.fftn(values)


def inverse_real(spec: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(spec).real


def inverse_complex(spec: np.ndarray) -> np.ndarray:
    return np.fft.ifftn(spec)


def derivative_multiplier(grid: PeriodicGrid, orders) -> np.ndarray:
    """Broadcastable multiplier for a mixed partial; orders[a] per real axis."""
    mult = np.ones((1,) * grid.real_dim, dtype=np.complex128)
    for axis, order in enumerate(orders):
        if order:
            mult = mult * _reshape_for(grid, _axis_multiplier(grid, order), axis)
    return mult


def real_derivative(grid: PeriodicGrid, values: np.ndarray, orders) -> np.ndarray:
    """Mixed real-axis partial derivative of a real field, returned real."""
    spec = forward(grid, values)
    return inverse_real(spec * derivative_multiplier(grid, orders))


def holo_multiplier(grid: PeriodicGrid, j: int) -> np.ndarray:
    """Multiplier of d/dz_j (0-based complex coordinate)."""
    mx = _reshape_for(grid, _axis_multiplier(grid, 1), 2 * j)
    my = _reshape_for(grid, _axis_multiplier(grid, 1), 2 * j + 1)
    return 0.5 * (mx - 1j * my)


def antiholo_multiplier(grid: PeriodicGrid, j: int) -> np.ndarray:
    """Multiplier of d/dzbar_j."""
    mx = _reshape_for(grid, _axis_multiplier(grid, 1), 2 * j)
    my = _reshape_for(grid, _axis_multiplier(grid, 1), 2 * j + 1)
    return 0.5 * (mx + 1j * my)


def holo_gradient(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """d/dz_j of a real field for every j; shape grid.shape + (n,), complex."""
    spec = forward(grid, values)
    out = np.empty(grid.shape + (grid.complex_dim,), dtype=np.complex128)
    for j in range(grid.complex_dim):
        out[..., j] = inverse_complex(spec * holo_multiplier(grid, j))
    return out


def hessian_multipliers(grid: PeriodicGrid) -> np.ndarray:
    """Multipliers of d^2/(dz_j dzbar_k), shape (n, n) + grid.shape."""
    n = grid.complex_dim
    out = np.empty((n, n) + grid.shape, dtype=np.complex128)
    for j in range(n):
        hj = holo_multiplier(grid, j)
        for k in range(n):
            out[j, k] = hj * antiholo_multiplier(grid, k)
    return out


def complex_hessian_values(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """phi_{j kbar} for a real field phi; shape grid.shape + (n, n)."""
    n = grid.complex_dim
    spec = forward(grid, values)
    out = np.empty(grid.shape + (n, n), dtype=np.complex128)
    for j in range(n):
        hj = holo_multiplier(grid, j)
        for k in range(j, n):
            entry = inverse_complex(spec * (hj * antiholo_multiplier(grid, k)))
            if j == k:
                # d/dz d/dzbar of a real field is real
                out[..., j, j] = entry.real
            else:
                out[..., j, k] = entry
                out[..., k, j] = np.conj(entry)
    return out


def third_derivatives(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """phi_{i lbar m} = d/dz_i d/dzbar_l d/dz_m phi; shape grid.shape + (n,n,n)."""
    n = grid.complex_dim
    spec = forward(grid, values)
    out = np.empty(grid.shape + (n, n, n), dtype=np.complex128)
    for i in range(n):
        hi = holo_multiplier(grid, i)
        for ell in range(n):
            ha = hi * antiholo_multiplier(grid, ell)
            for m in range(i, n):
                val = inverse_complex(spec * (ha * holo_multiplier(grid, m)))
                out[..., i, ell, m] = val
                if m != i:
                    out[..., m, ell, i] = val  # mixed partials commute
    return out


def laplacian(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """Flat Laplacian sum_a d^2/dx_a^2, spectral."""
    spec = forward(grid, values)
    mult = np.zeros((1,) * grid.real_dim, dtype=np.complex128)
    for axis in range(grid.real_dim):
        mult = mult + _reshape_for(grid, _axis_multiplier(grid, 2), axis)
    return inverse_real(spec * mult)


def heat_multiplier(grid: PeriodicGrid, tau: float) -> np.ndarray:
    """exp(-tau |2 pi k|^2) over all real axes."""
    mult = np.zeros((1,) * grid.real_dim)
    for axis in range(grid.real_dim):
        k = _reshape_for(grid, (_TWO_PI * grid.freqs) ** 2, axis).real
        mult = mult + k
    return np.exp(-tau * mult)


def dealias_truncate(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    """2/3-rule truncation: zero all modes with |k| > N/3 on any axis."""
    spec = forward(grid, values)
    cutoff = grid.resolution / 3.0
    keep = np.abs(grid.freqs) <= cutoff
    for axis in range(grid.real_dim):
        spec = spec * _reshape_for(grid, keep.astype(np.float64), axis)
    return inverse_real(spec)


def max_active_mode(grid: PeriodicGrid, values: np.ndarray, rel_floor: float = 1e-12):
    """Largest |k| (per-axis max) carrying spectral mass above a relative floor."""
    spec = np.abs(forward(grid, values))
    floor = spec.max() * rel_floor
    if floor == 0.0:
        return 0.0
    mask = spec > floor
    worst = 0.0
    for axis in range(grid.real_dim):
        present = mask.any(axis=tuple(a for a in range(grid.real_dim) if a != axis))
        if present.any():
            worst = max(worst, float(np.abs(grid.freqs[present]).max()))
    return worst
