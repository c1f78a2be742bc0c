"""Cell-centered uniform grids, spectral transforms, and discrete norms.

Fields live on tensor grids over a box; the node placement is cell-centered
so the cosine transform is the exact eigenbasis of the zero-flux Laplacian
with no duplicated boundary nodes.  All norms run through the same transform
stack as the solvers, keeping norm and solver errors consistent.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

__all__ = [
    "UniformGrid",
    "Field",
    "sample",
    "integrate",
    "l2_norm",
    "lp_norm",
    "sobolev_norm",
    "hminus1_norm",
    "spectral_coefficients",
    "field_from_coefficients",
    "transform_values",
    "inverse_transform_values",
    "laplacian_symbol",
    "zero_mode_index",
    "save_field",
    "load_field",
    "field_to_csv",
]

PERIODIC = "periodic"
NEUMANN = "neumann"
_BOUNDARY_CODES = {PERIODIC: 0, NEUMANN: 1}
_BOUNDARY_NAMES = {v: k for k, v in _BOUNDARY_CODES.items()}

_MAGIC = b"NLFD"
_VERSION = 1


@dataclass(frozen=True)
class UniformGrid:
    """Uniform cell-centered tensor grid on a box.

    ``lengths[a]`` is the extent of axis a, ``cells[a]`` the cell count, and
    nodes sit at ``(i + 1/2) * h``.  Immutable and hashable so derived
    operator data can be cached against it.
    """

    lengths: tuple[float, ...]
    cells: tuple[int, ...]
    boundary: str = NEUMANN

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(float(L) for L in self.lengths))
        object.__setattr__(self, "cells", tuple(int(N) for N in self.cells))
        if len(self.lengths) != len(self.cells):
            raise ValueError("lengths and cells must have the same number of axes")
        if self.dimension not in (1, 2):
            raise ValueError("only 1D and 2D grids are supported")
        if any(L <= 0 for L in self.lengths):
            raise ValueError("axis lengths must be positive")
        if any(N < 1 for N in self.cells):
            raise ValueError("cell counts must be positive")
        if self.boundary not in _BOUNDARY_CODES:
            raise ValueError(f"boundary must be one of {sorted(_BOUNDARY_CODES)}")

    @property
    def dimension(self) -> int:
        return len(self.cells)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(L / N for L, N in zip(self.lengths, self.cells))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def shape(self) -> tuple[int, ...]:
        return self.cells

    @property
    def node_count(self) -> int:
        return int(np.prod(self.cells))

    def axis_nodes(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def meshgrid(self) -> tuple[np.ndarray, ...]:
        axes = [self.axis_nodes(a) for a in range(self.dimension)]
        return tuple(np.meshgrid(*axes, indexing="ij"))


@dataclass(frozen=True)
class Field:
    """Scalar samples on the nodes of a grid; a plain immutable value type."""

    grid: UniformGrid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ValueError(f"values shape {values.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", values)

    def _require_same_grid(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")

    def __add__(self, other: "Field") -> "Field":
        self._require_same_grid(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._require_same_grid(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "Field":
        return Field(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)


def sample(grid: UniformGrid, f) -> Field:
    """Evaluate ``f(x)`` (or ``f(x, y)``) at every node."""
    return Field(grid, np.asarray(f(*grid.meshgrid()), dtype=float))


def integrate(field: Field) -> float:
    """Midpoint-rule integral over the box."""
    return float(field.values.sum()) * field.grid.cell_volume


def l2_norm(field: Field) -> float:
    return float(np.sqrt(np.sum(field.values**2) * field.grid.cell_volume))


def lp_norm(field: Field, p: float) -> float:
    if p < 1:
        raise ValueError("p must be at least 1")
    if p == 2:
        # keep the p = 2 route bit-identical to l2_norm
        return l2_norm(field)
    v = np.abs(field.values)
    return float((np.sum(v**p) * field.grid.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------------------
# transform stack

def transform_values(grid: UniformGrid, values: np.ndarray) -> np.ndarray:
    if grid.boundary == NEUMANN:
        return scipy.fft.dctn(values, type=2, norm="ortho")
    return scipy.fft.fftn(values, norm="ortho")


def inverse_transform_values(grid: UniformGrid, coeffs: np.ndarray) -> np.ndarray:
    if grid.boundary == NEUMANN:
        return scipy.fft.idctn(coeffs, type=2, norm="ortho")
    return scipy.fft.ifftn(coeffs, norm="ortho").real


def spectral_coefficients(field: Field) -> np.ndarray:
    """Orthonormal transform coefficients (cosine basis or discrete Fourier)."""
    return transform_values(field.grid, field.values)


def field_from_coefficients(grid: UniformGrid, coeffs: np.ndarray) -> Field:
    return Field(grid, inverse_transform_values(grid, coeffs))


@lru_cache(maxsize=128)
def laplacian_symbol(grid: UniformGrid) -> np.ndarray:
    """Eigenvalues of the negative Laplacian in the grid's spectral basis.

    The exact continuous symbols are used (not finite-difference ones) so
    spectral differentiation carries no discretization bias of its own.
    """
    per_axis = []
    for a in range(grid.dimension):
        N, L = grid.cells[a], grid.lengths[a]
        if grid.boundary == NEUMANN:
            lam = (np.pi * np.arange(N) / L) ** 2
        else:
            lam = (2.0 * np.pi * scipy.fft.fftfreq(N, d=L / N)) ** 2
        per_axis.append(lam)
    if grid.dimension == 1:
        out = per_axis[0]
    else:
        out = per_axis[0][:, None] + per_axis[1][None, :]
    out.flags.writeable = False
    return out


def zero_mode_index(grid: UniformGrid) -> tuple[int, ...]:
    return (0,) * grid.dimension


def sobolev_norm(field: Field, s: float) -> float:
    """Spectral Sobolev norm with weight ``(1 + lambda_k)**s``.

    Supported for s in [-1, 3]; s = 0 reproduces the plain quadratic norm by
    Parseval.
    """
    if not -1.0 <= s <= 3.0:
        raise ValueError("sobolev_norm supports s in [-1, 3]")
    coeffs = spectral_coefficients(field)
    lam = laplacian_symbol(field.grid)
    weighted = (1.0 + lam) ** s * np.abs(coeffs) ** 2
    return float(np.sqrt(weighted.sum() * field.grid.cell_volume))


def hminus1_norm(field: Field) -> float:
    """Dual norm through the inverse zero-flux Laplacian.

    The fluctuation part is measured as the gradient norm of the potential
    solving the zero-mean problem; a nonzero mean is split off and added as
    ``|mean| * sqrt(|box|)``.
    """
    grid = field.grid
    coeffs = spectral_coefficients(field)
    lam = laplacian_symbol(grid)
    idx = zero_mode_index(grid)
    mean = integrate(field) / grid.volume
    mask = np.ones(grid.shape, dtype=bool)
    mask[idx] = False
    fluct_sq = np.sum(np.abs(coeffs[mask]) ** 2 / lam[mask]) * grid.cell_volume
    return float(np.sqrt(fluct_sq) + abs(mean) * np.sqrt(grid.volume))


# ---------------------------------------------------------------------------
# serialization

def save_field(field: Field, path) -> None:
    """Write a flat binary checkpoint: small header plus row-major float64."""
    grid = field.grid
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BBB", _VERSION, _BOUNDARY_CODES[grid.boundary], grid.dimension))
        for a in range(grid.dimension):
            fh.write(struct.pack("<Qd", grid.cells[a], grid.lengths[a]))
        fh.write(np.ascontiguousarray(field.values, dtype="<f8").tobytes())


def load_field(path) -> Field:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field checkpoint file")
        version, bcode, ndim = struct.unpack("<BBB", fh.read(3))
        if version != _VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        cells, lengths = [], []
        for _ in range(ndim):
            N, L = struct.unpack("<Qd", fh.read(16))
            cells.append(N)
            lengths.append(L)
        grid = UniformGrid(tuple(lengths), tuple(cells), _BOUNDARY_NAMES[bcode])
        payload = fh.read(8 * grid.node_count)
        values = np.frombuffer(payload, dtype="<f8").reshape(grid.shape)
    return Field(grid, values.copy())


def field_to_csv(field: Field, path) -> None:
    """Plain-text dump for plotting: coordinates followed by the value."""
    grid = field.grid
    with open(path, "w") as fh:
        if grid.dimension == 1:
            fh.write("x,value\n")
            for x, v in zip(grid.axis_nodes(0), field.values):
                fh.write(f"{x:.17g},{v:.17g}\n")
        else:
            fh.write("x,y,value\n")
            xs, ys = grid.axis_nodes(0), grid.axis_nodes(1)
            for i, x in enumerate(xs):
                for j, y in enumerate(ys):
                    fh.write(f"{x:.17g},{y:.17g},{field.values[i, j]:.17g}\n")
