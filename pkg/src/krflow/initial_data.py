"""Rough initial potentials and their smooth blending family.

Two rough classes are generated along a single real axis:

* ridge: a periodic piecewise-quadratic profile whose second derivative
  is the +-1 square wave, so the potential is C^{1,1} but not C^2 and
  the volume ratio takes the two values 1 +- a/4;
* cusp: a bounded continuous potential whose volume ratio has integrable
  power-law spikes (in L^p exactly when gamma * p < 1) and a sup that
  grows like N^gamma with resolution.

The blending family phi0(s) = (1-s) * heat(phi0, s*tau0) stays inside the
cone with margin s, contracts sup norms, and converges to phi0 as s -> 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fields, spectral
from .errors import ConeViolationError, HypothesisViolationError, KrflowError
from .grid import HermitianMatrixField, PeriodicGrid, ScalarField

# phase shift (in profile periods) that keeps the curvature-jump lines of the
# ridge strictly between grid points for every power-of-two N and integer k
RIDGE_PHASE = 1.0 / 3.0

# adaptive smoothing scale: tau0 = min(cap, theta * sup|phi| / sup|lap phi|)
# keeps the blending-family sup error dominated by the (1-s) term
TAU0_CAP = 1e-2
TAU0_THETA = 5e-3

CONE_TOL = 1e-10


def ridge_profile(u: np.ndarray) -> np.ndarray:
    """Periodic C^{1,1} profile q: q'' = +1 on |u| < 1/4 (mod 1), -1 after,
    q' the mean-zero triangle wave, q fixed by zero mean; sup|q| = 1/32."""
    w = np.mod(u + 0.25, 1.0) - 0.25  # wrap into [-1/4, 3/4)
    inner = w <= 0.25
    return np.where(inner, 0.5 * w * w - 1.0 / 32.0,
                    -0.5 * w * w + 0.5 * w - 3.0 / 32.0)


def _axis_index(axis: int, grid: PeriodicGrid) -> int:
    if not 1 <= axis <= grid.real_dim:
        raise KrflowError(f"axis must be in [1, {grid.real_dim}], got {axis}")
    return axis - 1


def gen_ridge_c11(a: float, k: int, axis: int, grid: PeriodicGrid) -> ScalarField:
    """C^{1,1} ridge potential a * q(k x + phase) / k^2 along one real axis."""
    if a < 0.0:
        raise ConeViolationError(f"ridge amplitude must be >= 0, got {a}")
    if a > 4.0:
        raise ConeViolationError(
            f"ridge amplitude {a} > 4 leaves the closed Kahler cone (ratio 1 - a/4 < 0)"
        )
    if k < 1:
        raise KrflowError(f"frequency must be >= 1, got {k}")
    x = grid.coordinate(_axis_index(axis, grid))
    values = a * ridge_profile(k * x + RIDGE_PHASE) / float(k * k)
    values -= values.mean()
    return ScalarField(grid, values)


def cusp_density_profile(resolution: int, gamma: float) -> np.ndarray:
    """Mean-zero 1D spike profile r with min r = -1, sampled at half cells.

    r = c * dist(u, Z)^(-gamma) - m with m, c fixed from the samples, so the
    discrete ratio 1 + a r is exactly bounded below by 1 - a.
    """
    u = (np.arange(resolution) + 0.5) / resolution
    raw = np.minimum(u, 1.0 - u) ** (-gamma)
    m = raw.mean()
    c = 1.0 / (m - raw.min())
    return c * (raw - m)


def gen_cusp_lp(a: float, gamma: float, p: float, axis: int, grid: PeriodicGrid) -> ScalarField:
    """Bounded potential whose volume ratio has an L^p power-law spike."""
    if not 0.0 < gamma <= 1.0 / 3.0:
        raise HypothesisViolationError(f"cusp exponent must be in (0, 1/3], got {gamma}")
    if gamma * p >= 1.0:
        raise HypothesisViolationError(
            f"gamma*p = {gamma * p:.3g} >= 1: the spike would not be L^{p:g}"
        )
    if a <= 0.0:
        raise ConeViolationError(f"cusp amplitude must be > 0, got {a}")
    if a > 1.0:
        raise ConeViolationError(
            f"cusp amplitude {a} > 1 leaves the cone (ratio 1 - a < 0)"
        )
    n = grid.resolution
    r = cusp_density_profile(n, gamma)
    # solve phi'' = 4 a r along the axis by exact spectral antidifferentiation
    spec = np.fft.fft(4.0 * a * r)
    mult = (2.0j * np.pi * (np.fft.fftfreq(n) * n)) ** 2
    mult[0] = 1.0
    phi_line = np.fft.ifft(spec / mult).real
    phi_line[...] -= phi_line.mean()
    ax = _axis_index(axis, grid)
    shape = [1] * grid.real_dim
    shape[ax] = n
    values = np.broadcast_to(phi_line.reshape(shape), grid.shape).copy()
    values -= values.mean()
    return ScalarField(grid, values)


def gen_smooth_mode(a: float, k: int, axis: int, grid: PeriodicGrid) -> ScalarField:
    """Single cosine mode a cos(2 pi k x) along one real axis."""
    if a < 0.0:
        raise ConeViolationError(f"mode amplitude must be >= 0, got {a}")
    if a * (np.pi * k) ** 2 > 1.0:
        raise ConeViolationError(
            f"mode amplitude {a} at frequency {k} dips the metric below zero"
        )
    x = grid.coordinate(_axis_index(axis, grid))
    values = a * np.cos(2.0 * np.pi * k * x)
    values -= values.mean()
    return ScalarField(grid, values)


def default_tau0(phi0: ScalarField) -> float:
    """Smoothing scale adapted to the data: small enough that the heat part
    of the blending error stays below the (1-s) part, large enough to act
    across at least one grid cell at s = 1."""
    sup = phi0.sup_abs()
    if sup == 0.0:
        return 0.0
    lap_sup = float(np.abs(spectral.laplacian(phi0.grid, phi0.values)).max())
    if lap_sup == 0.0:
        return TAU0_CAP
    return min(TAU0_CAP, TAU0_THETA * sup / lap_sup)


def approx_family(phi0: ScalarField, s: float, tau0: float | None = None) -> ScalarField:
    """Smooth blend (1-s) * heat(phi0, s*tau0); the s=0 member is phi0 itself."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"s must be in [0, 1], got {s}")
    ratio = fields.ma_ratio(phi0, HermitianMatrixField.identity(phi0.grid), strict=False)
    if ratio.inf() < -CONE_TOL:
        raise ConeViolationError(
            f"initial potential outside the closed cone (min ratio {ratio.inf():.3g})"
        )
    if s == 0.0:
        return phi0.copy()
    if tau0 is None:
        tau0 = default_tau0(phi0)
    return (1.0 - s) * fields.heat_smooth(phi0, s * tau0)


@dataclass
class RoughPotentialSpec:
    """Declarative description of an initial potential."""

    kind: str = "zero"  # zero | ridge_c11 | cusp_lp | smooth_mode
    amplitude: float = 0.0
    frequency: int = 1
    cusp_exponent: float = 0.3
    lp_target: float = 3.0
    axis: int = 1

    def validate(self) -> None:
        if self.kind not in ("zero", "ridge_c11", "cusp_lp", "smooth_mode"):
            raise KrflowError(f"unknown initial-data kind: {self.kind}")
        if self.amplitude < 0.0:
            raise ConeViolationError("amplitude must be >= 0")
        if self.kind == "ridge_c11" and self.amplitude > 4.0:
            raise ConeViolationError("ridge amplitude must satisfy a <= 4")
        if self.kind == "cusp_lp":
            if self.amplitude > 1.0:
                raise ConeViolationError("cusp amplitude must satisfy a <= 1")
            if not 0.0 < self.cusp_exponent <= 1.0 / 3.0:
                raise HypothesisViolationError("cusp exponent must be in (0, 1/3]")
            if self.cusp_exponent * self.lp_target >= 1.0:
                raise HypothesisViolationError("cusp requires gamma * p < 1")
        if self.frequency < 1:
            raise KrflowError("frequency must be >= 1")

    def generate(self, grid: PeriodicGrid) -> ScalarField:
        self.validate()
        if self.kind == "zero" or self.amplitude == 0.0:
            return ScalarField.zeros(grid)
        if self.kind == "ridge_c11":
            return gen_ridge_c11(self.amplitude, self.frequency, self.axis, grid)
        if self.kind == "cusp_lp":
            return gen_cusp_lp(self.amplitude, self.cusp_exponent, self.lp_target,
                               self.axis, grid)
        return gen_smooth_mode(self.amplitude, self.frequency, self.axis, grid)
