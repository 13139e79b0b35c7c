"""Flat-torus model geometry and the time-dependent background family.

The background form is g_t = I + t * hess(rho) for a smooth mean-zero
twist potential rho.  On the flat torus the curvature potential of g_t
solves hess(h) = hess(rho) - hess(log det g_t) with the normalization
integral (e^h - 1) dvol_t = 0, which pins the additive constant.
"""
from __future__ import annotations

import math

import numpy as np

from . import kernels, spectral
from .errors import GeometryDegenerateError, HorizonExceededError
from .grid import HermitianMatrixField, PeriodicGrid, ScalarField, volume_normalization

DEFAULT_MARGIN = 0.1
DEFAULT_T_MAX = 1.0
_STATIC_EPS = 1e-14


class TorusGeometry:
    """Unit flat torus of complex dimension n with the identity background."""

    def __init__(self, grid: PeriodicGrid):
        self.grid = grid
        self.complex_dim = grid.complex_dim

    def background_volume(self) -> float:
        """Total volume of the flat form: 2^n n! for the unit torus."""
        return volume_normalization(self.complex_dim)

    def identity_form(self) -> HermitianMatrixField:
        return HermitianMatrixField.identity(self.grid)


def validity_horizon(twist: ScalarField, margin: float, t_max: float = DEFAULT_T_MAX) -> float:
    """Largest T with min-eigenvalue(I + t hess(twist)) >= margin on [0, T].

    Scans eigenvalues on a coarse t-ladder to bracket the first failure,
    then bisects; returns t_max when the twist never degrades the metric.
    """
    if not 0.0 < margin < 1.0:
        raise ValueError(f"margin must be in (0, 1), got {margin}")
    grid = twist.grid
    hess = spectral.complex_hessian_values(grid, twist.values)
    flat = hess.reshape(grid.point_count, grid.complex_dim, grid.complex_dim)
    eig_lo = kernels.eig_range_herm(flat)[:, 0]

    def ok(t: float) -> bool:
        return float((1.0 + t * eig_lo).min()) >= margin

    if ok(t_max):
        return t_max
    lo, hi = 0.0, t_max
    # coarse scan narrows the bracket before the bisection
    ladder = np.linspace(0.0, t_max, 65)
    for a, b in zip(ladder[:-1], ladder[1:]):
        if ok(a) and not ok(b):
            lo, hi = float(a), float(b)
            break
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


class BackgroundFamily:
    """The family g_t = I + t hess(rho) with its validity horizon."""

    def __init__(self, twist: ScalarField, margin: float = DEFAULT_MARGIN,
                 t_max: float = DEFAULT_T_MAX):
        grid = twist.grid
        # gauge fix: the family only sees rho through its Hessian
        rho = ScalarField(grid, twist.values - twist.values.mean())
        self.twist = rho
        self.margin = float(margin)
        self.geometry = TorusGeometry(grid)
        self.grid = grid
        self.is_static = bool(rho.sup_abs() < _STATIC_EPS)
        hess = spectral.complex_hessian_values(grid, rho.values)
        self._hessian = hess
        self._hessian_flat = hess.reshape(grid.point_count, grid.complex_dim, grid.complex_dim)
        eig = kernels.eig_range_herm(self._hessian_flat)
        self.twist_eig_lo = float(eig[:, 0].min())
        self.twist_eig_hi = float(eig[:, 1].max())
        if self.is_static:
            self.horizon = t_max
        else:
            self.horizon = validity_horizon(rho, margin, t_max)

    @classmethod
    def static(cls, grid: PeriodicGrid, margin: float = DEFAULT_MARGIN,
               t_max: float = DEFAULT_T_MAX) -> "BackgroundFamily":
        return cls(ScalarField.zeros(grid), margin=margin, t_max=t_max)

    def _check_time(self, t: float) -> None:
        if t < 0.0 or t > self.horizon * (1.0 + 1e-12) + 1e-15:
            raise HorizonExceededError(
                f"t={t:.6g} outside the validity horizon [0, {self.horizon:.6g}]"
            )

    def min_eig_at(self, t: float) -> float:
        """Smallest eigenvalue of g_t over the grid (exact: eigs are 1 + t*eig)."""
        return 1.0 + t * self.twist_eig_lo

    def form_at(self, t: float) -> HermitianMatrixField:
        return background_form(self, t)

    def lambda_default(self) -> float:
        """Weight exponent for the modified volume ratio monitors."""
        scale = max(abs(self.twist_eig_lo), abs(self.twist_eig_hi))
        return 4.0 * (1.0 + scale)


def background_form(family: BackgroundFamily, t: float) -> HermitianMatrixField:
    """g_t = I + t hess(rho); positive definite everywhere or it raises."""
    family._check_time(t)
    grid = family.grid
    n = grid.complex_dim
    entries = (t * family._hessian) if t != 0.0 else np.zeros_like(family._hessian)
    entries = entries.copy()
    for j in range(n):
        entries[..., j, j] += 1.0
    form = HermitianMatrixField(grid, entries)
    lo = kernels.eig_range_herm(form.flat())[:, 0]
    if lo.min() <= 0.0:
        raise GeometryDegenerateError(
            f"background form degenerate at t={t:.6g} "
            f"(min eigenvalue {lo.min():.6g}); increase the margin"
        )
    return form


def ricci_potential(family: BackgroundFamily, t: float):
    """Curvature potential of g_t and its normalizing constant.

    Returns (h, c_t) with h = rho - log det g_t + c_t and c_t chosen so
    that integral (e^h - 1) dvol_t vanishes.
    """
    family._check_time(t)
    grid = family.grid
    if family.is_static:
        return ScalarField.zeros(grid), 0.0
    form = background_form(family, t)
    det = kernels.det_herm(form.flat()).reshape(grid.shape)
    if det.min() <= 0.0:
        raise GeometryDegenerateError(f"degenerate background at t={t:.6g}")
    rho = family.twist.values
    # volume-form factors cancel between the two integrals
    mass_t = det.mean()
    mass_e = np.exp(rho).mean()
    c_t = math.log(mass_t / mass_e)
    h = ScalarField(grid, rho - np.log(det) + c_t)
    return h, c_t
