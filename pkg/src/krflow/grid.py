"""Periodic grids on the unit torus and the field containers living on them.

The torus has n complex dimensions (n in {1, 2}) and 2n real axes, each of
period 1, sampled with N points.  Arrays are indexed in row-major axis order
(x1, y1, x2, y2): real axis a of complex coordinate j is array axis 2*j + a.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import KrflowError

SNAPSHOT_MAGIC = "KRF1"
SNAPSHOT_HEADER_BYTES = 64


class PeriodicGrid:
    """Uniform periodic grid with N points per real axis, N a power of two."""

    def __init__(self, complex_dim: int, resolution: int, dealias: bool = False):
        if complex_dim not in (1, 2):
            raise KrflowError(f"complex_dim must be 1 or 2, got {complex_dim}")
        n = int(resolution)
        if n < 8 or (n & (n - 1)) != 0:
            raise KrflowError(f"resolution must be a power of two >= 8, got {resolution}")
        self.complex_dim = complex_dim
        self.resolution = n
        self.dealias = bool(dealias)
        self.real_dim = 2 * complex_dim
        self.shape = (n,) * self.real_dim
        self.point_count = n ** self.real_dim
        self.cell_volume = 1.0 / self.point_count
        # integer Fourier frequencies per axis, e.g. [0, 1, ..., N/2-1, -N/2, ..., -1]
        self.freqs = (np.fft.fftfreq(n) * n).astype(np.float64)
        self.nyquist_index = n // 2

    def axes_coordinates(self):
        """1D coordinate array shared by every axis: i/N for i in [0, N)."""
        return np.arange(self.resolution) / self.resolution

    def coordinate(self, real_axis: int):
        """Field of the coordinate along one real axis (0-based)."""
        x = self.axes_coordinates()
        shape = [1] * self.real_dim
        shape[real_axis] = self.resolution
        return np.broadcast_to(x.reshape(shape), self.shape).copy()

    def __eq__(self, other):
        return (
            isinstance(other, PeriodicGrid)
            and self.complex_dim == other.complex_dim
            and self.resolution == other.resolution
        )

    def __hash__(self):
        return hash((self.complex_dim, self.resolution))

    def __repr__(self):
        return f"PeriodicGrid(n={self.complex_dim}, N={self.resolution})"


def _check_finite(values, what):
    if not np.all(np.isfinite(values)):
        raise KrflowError(f"non-finite values in {what}")


@dataclass
class ScalarField:
    """Real scalar samples on a periodic grid (potentials, densities)."""

    grid: PeriodicGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != self.grid.shape:
            raise KrflowError(
                f"field shape {self.values.shape} does not match grid {self.grid.shape}"
            )
        _check_finite(self.values, "ScalarField")

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def constant(cls, grid: PeriodicGrid, value: float) -> "ScalarField":
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def mean(self) -> float:
        return float(self.values.mean())

    def sup(self) -> float:
        return float(self.values.max())

    def inf(self) -> float:
        return float(self.values.min())

    def sup_abs(self) -> float:
        return float(np.abs(self.values).max())

    def __add__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values + other.values)
        return ScalarField(self.grid, self.values + other)

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            return ScalarField(self.grid, self.values - other.values)
        return ScalarField(self.grid, self.values - other)

    def __mul__(self, scalar):
        return ScalarField(self.grid, self.values * scalar)

    __rmul__ = __mul__


@dataclass
class HermitianMatrixField:
    """n x n complex Hermitian matrix per grid point (metrics, Hessians)."""

    grid: PeriodicGrid
    entries: np.ndarray  # shape grid.shape + (n, n), complex128

    def __post_init__(self):
        n = self.grid.complex_dim
        self.entries = np.ascontiguousarray(self.entries, dtype=np.complex128)
        want = self.grid.shape + (n, n)
        if self.entries.shape != want:
            raise KrflowError(f"matrix field shape {self.entries.shape}, expected {want}")
        _check_finite(self.entries.view(np.float64), "HermitianMatrixField")

    @classmethod
    def identity(cls, grid: PeriodicGrid) -> "HermitianMatrixField":
        n = grid.complex_dim
        entries = np.zeros(grid.shape + (n, n), dtype=np.complex128)
        for j in range(n):
            entries[..., j, j] = 1.0
        return cls(grid, entries)

    def flat(self):
        """View as (point_count, n, n) for the pointwise kernels."""
        n = self.grid.complex_dim
        return self.entries.reshape(self.grid.point_count, n, n)

    def hermitian_defect(self) -> float:
        swapped = np.conj(np.swapaxes(self.entries, -1, -2))
        return float(np.abs(self.entries - swapped).max())

    def __add__(self, other):
        return HermitianMatrixField(self.grid, self.entries + other.entries)


def write_snapshot(path, field: ScalarField, t: float) -> None:
    """Raw snapshot: 64-byte ASCII header, then row-major little-endian f64."""
    grid = field.grid
    header = f"{SNAPSHOT_MAGIC} n={grid.complex_dim} N={grid.resolution} t={t:.17g}\n"
    raw = header.encode("ascii")
    if len(raw) > SNAPSHOT_HEADER_BYTES:
        raise KrflowError("snapshot header too long")
    raw = raw.ljust(SNAPSHOT_HEADER_BYTES, b" ")
    data = field.values.astype("<f8").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(raw)
        fh.write(data)


def read_snapshot(path):
    """Inverse of write_snapshot.  Returns (ScalarField, t)."""
    with open(path, "rb") as fh:
        raw = fh.read(SNAPSHOT_HEADER_BYTES)
        if len(raw) != SNAPSHOT_HEADER_BYTES:
            raise KrflowError(f"truncated snapshot header in {path}")
        tokens = raw.decode("ascii").split()
        if not tokens or tokens[0] != SNAPSHOT_MAGIC:
            raise KrflowError(f"bad snapshot magic in {path}")
        fields = dict(tok.split("=", 1) for tok in tokens[1:])
        n = int(fields["n"])
        res = int(fields["N"])
        t = float(fields["t"])
        grid = PeriodicGrid(n, res)
        data = np.frombuffer(fh.read(8 * grid.point_count), dtype="<f8")
        if data.size != grid.point_count:
            raise KrflowError(f"truncated snapshot payload in {path}")
        values = data.reshape(grid.shape).astype(np.float64)
    return ScalarField(grid, values), t


def volume_normalization(complex_dim: int) -> float:
    """Density of the flat-metric volume form against Lebesgue measure.

    With the convention omega = i sum_j dz^j wedge dzbar^j each complex
    direction contributes i dz wedge dzbar = 2 dx dy, so omega^n is
    2^n n! det(g) times Lebesgue measure.
    """
    return float(2 ** complex_dim * math.factorial(complex_dim))
