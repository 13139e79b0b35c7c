"""Time-indexed tables of monitored quantities, and the cutoff field.

trace.csv exposes the canonical columns below; the extra columns feed the
monitor fits and never leave the library except through report.txt.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import spectral
from .errors import KrflowError
from .grid import PeriodicGrid, ScalarField

# fixed schema of trace.csv, in order
CANONICAL_COLUMNS = (
    "t",
    "sup_phi",
    "inf_phi",
    "sup_phidot",
    "min_f",
    "max_f",
    "l2_f_minus_f0",
    "lp_trace",
    "trace_sup",
    "S_sup",
    "k_energy",
    "F_plus_sup",
    "F_minus_inf",
)


@dataclass
class EstimateTrace:
    """Rows of named scalars along a trajectory, plus run metadata."""

    times: np.ndarray
    columns: dict
    sample_mask: np.ndarray
    metadata: dict = field(default_factory=dict)

    def validate(self) -> None:
        t = np.asarray(self.times)
        if t.size and not np.all(np.diff(t) > 0):
            raise KrflowError("trace times must be strictly increasing")
        for name, col in self.columns.items():
            if len(col) != t.size:
                raise KrflowError(f"column {name} has wrong length")
            if not np.all(np.isfinite(col)):
                raise KrflowError(f"non-finite entries in trace column {name}")

    def column(self, name: str) -> np.ndarray:
        if name == "t":
            return np.asarray(self.times)
        return np.asarray(self.columns[name])

    def canonical_header(self) -> str:
        return ",".join(CANONICAL_COLUMNS)

    def canonical_rows(self, samples_only: bool = True):
        """Rows of the fixed schema, %.17g formatted."""
        idx = np.nonzero(self.sample_mask)[0] if samples_only else np.arange(self.times.size)
        cols = [self.column(name) for name in CANONICAL_COLUMNS]
        for i in idx:
            yield ",".join("%.17g" % c[i] for c in cols)


class CutoffField:
    """Nonnegative band-limited weight used by the localized monitors."""

    def __init__(self, chi: ScalarField):
        grid = chi.grid
        if chi.values.min() < 0.0:
            raise KrflowError("cutoff must be nonnegative")
        if spectral.max_active_mode(grid, chi.values) > grid.resolution / 8.0:
            raise KrflowError("cutoff must be band-limited below a quarter of Nyquist")
        self.field = chi
        self.grid = grid
        self.sup = chi.sup()
        # holomorphic gradient cached once; the weight never changes in time
        self.holo_grad = spectral.holo_gradient(grid, chi.values)
        flat_sq = 2.0 * np.einsum(
            "...j,...j->...", self.holo_grad, np.conj(self.holo_grad)
        ).real
        self.sup_grad = float(np.sqrt(max(flat_sq.max(), 0.0)))

    def grad_norm_sq_in(self, g_inv) -> ScalarField:
        """|grad chi|^2 in a supplied (pointwise inverse) metric."""
        from . import kernels

        grid = self.grid
        v = self.holo_grad.reshape(grid.point_count, grid.complex_dim)
        out = 2.0 * kernels.quad_form(g_inv, v)
        return ScalarField(grid, np.maximum(out, 0.0).reshape(grid.shape))


def default_cutoff(grid: PeriodicGrid) -> CutoffField:
    """chi = 1 + cos(2 pi x1): nonnegative, nonconstant, one active mode."""
    x1 = grid.coordinate(0)
    return CutoffField(ScalarField(grid, 1.0 + np.cos(2.0 * np.pi * x1)))


def constant_cutoff(grid: PeriodicGrid, value: float = 1.0) -> CutoffField:
    return CutoffField(ScalarField.constant(grid, value))


def make_cutoff(grid: PeriodicGrid, kind: str) -> CutoffField:
    if kind == "one_plus_cos":
        return default_cutoff(grid)
    if kind == "constant":
        return constant_cutoff(grid)
    raise KrflowError(f"unknown cutoff kind: {kind}")
