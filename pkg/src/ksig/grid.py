"""Periodic uniform grids on the 2*pi torus: discrete jets, norms, field I/O.

Scalar fields are plain float64 arrays of shape grid.shape; the grid object
travels alongside them.  Derivatives are second-order central differences
with periodic wraparound, realized with np.roll so the stencil is exact at
the wrap seam.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "FieldFormatError",
    "PeriodicGrid",
    "JetField",
    "compute_jet",
    "sup_norm",
    "l2_norm",
    "write_field",
    "read_field",
    "export_csv",
]

_MAGIC = b"KSIG"
_VERSION = 1
_HEADER = struct.Struct("<4sBBI")  # magic, version, dim, resolution


class FieldFormatError(ValueError):
    """Malformed or mismatched field file."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform N^n grid on [0, 2*pi)^n with periodic identification."""

    dim: int
    resolution: int

    def __post_init__(self):
        if not 3 <= self.dim <= 5:
            raise ValueError(f"grid dimension {self.dim} outside [3, 5]")
        if self.resolution < 8 or self.resolution % 2 != 0:
            raise ValueError(f"grid resolution {self.resolution} must be even and >= 8")

    @property
    def spacing(self):
        return 2.0 * np.pi / self.resolution

    @property
    def shape(self):
        return (self.resolution,) * self.dim

    @property
    def node_count(self):
        return self.resolution**self.dim

    def axis_coordinates(self):
        """The N node coordinates along one axis."""
        return self.spacing * np.arange(self.resolution)

    def coordinate(self, axis):
        """Node coordinate x_{axis} as a broadcastable array (1-based axis ok via caller)."""
        if not 0 <= axis < self.dim:
            raise ValueError(f"axis {axis} outside [0, {self.dim})")
        shape = [1] * self.dim
        shape[axis] = self.resolution
        return self.axis_coordinates().reshape(shape)

    def zeros(self):
        return np.zeros(self.shape)


@dataclass(frozen=True)
class JetField:
    """Value, gradient, Hessian and Laplacian of a grid field.

    gradient has shape (*grid.shape, n); hessian (*grid.shape, n, n) with
    both triangles filled; laplacian is the exact trace of the stored
    Hessian.
    """

    value: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    laplacian: np.ndarray


def compute_jet(grid, values):
    """Second-order central-difference jet with periodic wraparound."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    n = grid.dim
    h = grid.spacing
    grad = np.empty(values.shape + (n,))
    hess = np.empty(values.shape + (n, n))

    def shift(a, steps, axis):
        # +1 step looks one node in the +axis direction: a(x + h e_axis)
        return np.roll(a, -steps, axis=axis)

    plus = [shift(values, 1, i) for i in range(n)]
    minus = [shift(values, -1, i) for i in range(n)]
    for i in range(n):
        grad[..., i] = (plus[i] - minus[i]) / (2.0 * h)
        hess[..., i, i] = (plus[i] - 2.0 * values + minus[i]) / (h * h)
    for i in range(n):
        for j in range(i + 1, n):
            pp = shift(plus[i], 1, j)
            pm = shift(plus[i], -1, j)
            mp = shift(minus[i], 1, j)
            mm = shift(minus[i], -1, j)
            cross = (pp - pm - mp + mm) / (4.0 * h * h)
            hess[..., i, j] = cross
            hess[..., j, i] = cross
    lap = np.trace(hess, axis1=-2, axis2=-1)
    return JetField(value=values, gradient=grad, hessian=hess, laplacian=lap)


def sup_norm(values):
    return float(np.abs(values).max())


def l2_norm(grid, values):
    """sqrt(h^n * sum f^2): the discrete L2 norm of the torus."""
    h = grid.spacing
    return float(np.sqrt(h**grid.dim * np.sum(np.square(values))))


def write_field(path, grid, values):
    """Self-describing little-endian binary: KSIG header + row-major float64."""
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    if not np.all(np.isfinite(values)):
        bad = np.unravel_index(int(np.argmin(np.isfinite(values))), values.shape)
        raise ValueError(
            f"refusing to write non-finite value at node {tuple(int(i) for i in bad)}"
        )
    header = _HEADER.pack(_MAGIC, _VERSION, grid.dim, grid.resolution)
    Path(path).write_bytes(header + values.tobytes())


def read_field(path, grid=None):
    """Read a field file; returns (grid, values).

    If `grid` is given the header must match it exactly.  Malformed headers,
    payload size mismatches and non-finite entries raise FieldFormatError.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FieldFormatError(f"{path}: truncated header")
    magic, version, dim, resolution = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FieldFormatError(f"{path}: bad magic {magic!r}, not a field file")
    if version != _VERSION:
        raise FieldFormatError(f"{path}: unsupported format version {version}")
    try:
        file_grid = PeriodicGrid(dim, resolution)
    except ValueError as exc:
        raise FieldFormatError(f"{path}: invalid header ({exc})") from exc
    if grid is not None and file_grid != grid:
        raise FieldFormatError(
            f"{path}: dimension mismatch: file has n={dim}, N={resolution}; "
            f"expected n={grid.dim}, N={grid.resolution}"
        )
    payload = data[_HEADER.size :]
    expected = file_grid.node_count * 8
    if len(payload) != expected:
        raise FieldFormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )
    values = np.frombuffer(payload, dtype="<f8").reshape(file_grid.shape).copy()
    finite = np.isfinite(values)
    if not finite.all():
        bad = np.unravel_index(int(np.argmin(finite)), values.shape)
        raise FieldFormatError(
            f"{path}: non-finite value at node {tuple(int(i) for i in bad)}"
        )
    return file_grid, values


def export_csv(path, grid, values):
    """Plain-text export, header i1,...,in,value, one node per row (row-major)."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != grid.shape:
        raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
    cols = ",".join(f"i{a + 1}" for a in range(grid.dim))
    lines = [f"{cols},value"]
    flat = values.ravel()
    for pos, idx in enumerate(np.ndindex(grid.shape)):
        lines.append(",".join(str(i) for i in idx) + f",{float(flat[pos])!r}")
    Path(path).write_text("\n".join(lines) + "\n")
