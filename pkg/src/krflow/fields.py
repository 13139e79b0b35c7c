"""Differential-geometric operations on periodic fields.

Everything here is pure and pointwise-data-parallel: spectral derivatives
feed the per-point matrix kernels, and no function mutates its inputs.
Products (determinants, contractions) are formed pointwise in physical
space; grids constructed with dealias=True additionally pass nonlinear
outputs through a 2/3-rule truncation, which is a diagnostic mode only
(positivity is always checked on the untruncated values).
"""
from __future__ import annotations

import numpy as np

from . import kernels, spectral
from .errors import (
    GeometryDegenerateError,
    IllConditionedMetricError,
    PositivityLostError,
)
from .grid import (
    HermitianMatrixField,
    PeriodicGrid,
    ScalarField,
    volume_normalization,
)

COND_LIMIT = 1e12


def complex_hessian(phi: ScalarField) -> HermitianMatrixField:
    """phi_{j kbar} = d/dz_j d/dzbar_k phi, spectrally."""
    entries = spectral.complex_hessian_values(phi.grid, phi.values)
    return HermitianMatrixField(phi.grid, entries)


def kahler_metric(phi: ScalarField, g: HermitianMatrixField) -> HermitianMatrixField:
    """g + complex Hessian of phi (the metric of the deformed form)."""
    return HermitianMatrixField(phi.grid, g.entries + spectral.complex_hessian_values(phi.grid, phi.values))


def min_eig(g: HermitianMatrixField) -> float:
    return float(kernels.eig_range_herm(g.flat())[:, 0].min())


def _maybe_dealias(grid: PeriodicGrid, values: np.ndarray) -> np.ndarray:
    if grid.dealias:
        return spectral.dealias_truncate(grid, values)
    return values


def ma_ratio(phi: ScalarField, g: HermitianMatrixField, strict: bool = True) -> ScalarField:
    """Volume-form ratio det(g + hess phi) / det(g) per grid point.

    strict=True raises PositivityLostError as soon as any point has
    det(g + hess) <= 0; strict=False returns the raw values so boundary
    data (degenerate but admissible currents) can be inspected.
    """
    grid = phi.grid
    gflat = g.flat()
    det_bg = kernels.det_herm(gflat)
    if det_bg.min() <= 0.0:
        raise GeometryDegenerateError("background metric is not positive")
    hess = spectral.complex_hessian_values(grid, phi.values)
    ratio = kernels.det_sum_ratio(gflat, hess.reshape(gflat.shape))
    if strict and ratio.min() <= 0.0:
        worst = int(np.argmin(ratio))
        raise PositivityLostError(
            f"volume ratio {ratio[worst]:.6g} <= 0 at flat index {worst}",
            point=worst,
            value=float(ratio[worst]),
        )
    return ScalarField(grid, _maybe_dealias(grid, ratio.reshape(grid.shape)))


def inverse_metric(g: HermitianMatrixField) -> HermitianMatrixField:
    """Pointwise Hermitian inverse; refuses condition numbers above 1e12."""
    flat = g.flat()
    eig = kernels.eig_range_herm(flat)
    lo = eig[:, 0]
    hi = eig[:, 1]
    bad = (lo <= 0.0) | (hi > COND_LIMIT * np.maximum(lo, 0.0))
    if bad.any():
        worst = int(np.argmax(np.where(lo > 0, hi / np.maximum(lo, 1e-300), np.inf)))
        raise IllConditionedMetricError(
            f"metric condition number exceeds {COND_LIMIT:g} at flat index {worst} "
            f"(eigenvalues [{lo[worst]:.6g}, {hi[worst]:.6g}])"
        )
    inv = kernels.inv_herm(flat)
    return HermitianMatrixField(g.grid, inv.reshape(g.entries.shape))


def metric_trace(g: HermitianMatrixField, phi: ScalarField) -> ScalarField:
    """Trace of the deformed form against g: n + Laplacian_g(phi)."""
    grid = phi.grid
    flat = g.flat()
    if kernels.eig_range_herm(flat)[:, 0].min() <= 0.0:
        raise GeometryDegenerateError("trace requested against a degenerate metric")
    hess = spectral.complex_hessian_values(grid, phi.values)
    ginv = kernels.inv_herm(flat)
    tr = grid.complex_dim + kernels.trace_pair(ginv, hess.reshape(flat.shape))
    return ScalarField(grid, tr.reshape(grid.shape))


def gradient_norm_sq(f: ScalarField, g_inv: HermitianMatrixField) -> ScalarField:
    """|grad f|^2 in the metric whose inverse is g_inv.

    Convention (frozen by the oracle test): 2 Re ginv[j,k] d_j f conj(d_k f)
    with d_j the holomorphic derivative, so for the flat metric in one
    complex variable |grad sin(2 pi x)|^2 = (1/2)(2 pi)^2 cos^2(2 pi x).
    """
    grid = f.grid
    v = spectral.holo_gradient(grid, f.values)
    out = 2.0 * kernels.quad_form(g_inv.flat(), v.reshape(grid.point_count, grid.complex_dim))
    out = np.maximum(out, 0.0)  # roundoff floor
    return ScalarField(grid, _maybe_dealias(grid, out.reshape(grid.shape)))


def integrate(f: ScalarField, weight: ScalarField | None = None) -> float:
    """Lebesgue quadrature sum(f * weight) * cell_volume (spectrally exact)."""
    if weight is None:
        return float(f.values.sum() * f.grid.cell_volume)
    return float((f.values * weight.values).sum() * f.grid.cell_volume)


def lp_norm(f: ScalarField, p: float, weight: ScalarField | None = None) -> float:
    """(integral |f|^p weight)^(1/p)."""
    if p < 1.0:
        raise ValueError(f"p must be >= 1, got {p}")
    power = ScalarField(f.grid, np.abs(f.values) ** p)
    return integrate(power, weight) ** (1.0 / p)


def heat_smooth(phi: ScalarField, tau: float) -> ScalarField:
    """Gaussian Fourier damping exp(-tau |xi|^2); identity at tau = 0."""
    if tau < 0.0:
        raise ValueError(f"tau must be >= 0, got {tau}")
    if tau == 0.0:
        return phi.copy()
    grid = phi.grid
    spec = spectral.forward(grid, phi.values)
    out = spectral.inverse_real(spec * spectral.heat_multiplier(grid, tau))
    return ScalarField(grid, out)


def third_order_s(phi: ScalarField, g: HermitianMatrixField) -> ScalarField:
    """Calabi-type third-order quantity of the deformed metric.

    Contracts phi_{i lbar m} with three inverse-metric factors of
    g + hess(phi); nonnegative, zero for potentials with constant Hessian.
    """
    grid = phi.grid
    gphi = kahler_metric(phi, g)
    flat = gphi.flat()
    lo = kernels.eig_range_herm(flat)[:, 0]
    if lo.min() <= 0.0:
        worst = int(np.argmin(lo))
        raise PositivityLostError(
            f"deformed metric not positive at flat index {worst}",
            point=worst,
            value=float(lo[worst]),
        )
    ginv = kernels.inv_herm(flat)
    n = grid.complex_dim
    t3 = spectral.third_derivatives(grid, phi.values)
    s = kernels.third_contract(ginv, t3.reshape(grid.point_count, n, n, n))
    s = np.maximum(s, 0.0)  # roundoff floor
    return ScalarField(grid, _maybe_dealias(grid, s.reshape(grid.shape)))


def volume_weight(g: HermitianMatrixField) -> ScalarField:
    """Density of the volume form of g against Lebesgue measure."""
    norm = volume_normalization(g.grid.complex_dim)
    det = kernels.det_herm(g.flat()).reshape(g.grid.shape)
    return ScalarField(g.grid, norm * det)
