"""Periodic uniform grids on the unit torus and staggered difference operators.

Scalar fields are plain ``numpy`` arrays whose shape *is* the grid: a 1D field
has shape ``(n,)``, a 2D field ``(nx, ny)``.  Cell ``j`` sits at ``x_j = j * h``.

Vector fields use marker-and-cell storage, shape ``(d, *grid.shape)``:
component ``i`` at index ``j`` lives on the face between cells ``j`` and
``j + e_i``.  With a forward-difference gradient and a backward-difference
divergence the pair is exactly (negatively) adjoint, so summation by parts
holds to rounding:

    sum(f * divergence(v)) == -sum(gradient(f) * v)
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

MIN_CELLS = 4


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, 1)^d`` for ``d`` in {1, 2}."""

    shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        if len(shape) not in (1, 2):
            raise ValueError(f"grid dimension must be 1 or 2, got {len(shape)}")
        if any(s < MIN_CELLS for s in shape):
            raise ValueError(f"grid needs at least {MIN_CELLS} cells per axis, got {shape}")
        object.__setattr__(self, "shape", shape)

    @classmethod
    def regular(cls, dim: int, n: int) -> "Grid":
        return cls((n,) * dim)

    @classmethod
    def of(cls, field: np.ndarray) -> "Grid":
        """Grid implied by the shape of a scalar field."""
        return cls(np.shape(field))

    @classmethod
    def of_vector(cls, v: np.ndarray) -> "Grid":
        v = np.asarray(v)
        if v.ndim < 2 or v.shape[0] != v.ndim - 1:
            raise ValueError(f"not a staggered vector field: shape {v.shape}")
        return cls(v.shape[1:])

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple[float, ...]:
        return tuple(1.0 / n for n in self.shape)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def vector_shape(self) -> tuple[int, ...]:
        return (self.dim, *self.shape)

    def axes(self) -> list[np.ndarray]:
        """1D coordinate arrays of cell positions, one per axis."""
        return [np.arange(n) / n for n in self.shape]

    def coords(self) -> tuple[np.ndarray, ...]:
        """Cell coordinates broadcast to the full grid (``indexing='ij'``)."""
        return tuple(np.meshgrid(*self.axes(), indexing="ij"))

    @cached_property
    def laplacian_symbol(self) -> np.ndarray:
        """Eigenvalues of the unweighted discrete ``-Laplacian`` on ``rfftn`` modes."""
        symbols = []
        for axis, n in enumerate(self.shape):
            last = axis == self.dim - 1
            k = np.arange(n // 2 + 1) if last else np.arange(n)
            mu = (2.0 * n * n) * (1.0 - np.cos(2.0 * np.pi * k / n))
            shape = [1] * self.dim
            shape[axis] = mu.size
            symbols.append(mu.reshape(shape))
        total = symbols[0]
        for s in symbols[1:]:
            total = total + s
        return total

    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Angular wavenumbers ``2*pi*k`` for ``fftn`` layouts, broadcast per axis."""
        ks = []
        for axis, n in enumerate(self.shape):
            k = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n)
            shape = [1] * self.dim
            shape[axis] = n
            ks.append(k.reshape(shape))
        return tuple(ks)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def ones(self) -> np.ndarray:
        return np.ones(self.shape)

    def check(self, field: np.ndarray, name: str = "field") -> np.ndarray:
        field = np.asarray(field)
        if field.shape != self.shape:
            raise ValueError(f"{name} has shape {field.shape}, grid is {self.shape}")
        return field

    def label(self) -> str:
        n = self.shape[0] if len(set(self.shape)) == 1 else "x".join(map(str, self.shape))
        return f"d={self.dim} n={n}"


def gradient(f: np.ndarray) -> np.ndarray:
    """Forward-difference gradient on faces, periodic."""
    f = np.asarray(f, dtype=float)
    grid = Grid.of(f)
    out = np.empty(grid.vector_shape)
    for axis, n in enumerate(grid.shape):
        out[axis] = (np.roll(f, -1, axis=axis) - f) * n
    return out


def divergence(v: np.ndarray) -> np.ndarray:
    """Backward-difference divergence, the negative adjoint of :func:`gradient`."""
    v = np.asarray(v, dtype=float)
    grid = Grid.of_vector(v)
    out = np.zeros(grid.shape)
    for axis, n in enumerate(grid.shape):
        out += (v[axis] - np.roll(v[axis], 1, axis=axis)) * n
    return out


def to_faces(f: np.ndarray) -> np.ndarray:
    """Arithmetic mean of the two cells adjacent to each face."""
    f = np.asarray(f, dtype=float)
    grid = Grid.of(f)
    out = np.empty(grid.vector_shape)
    for axis in range(grid.dim):
        out[axis] = 0.5 * (f + np.roll(f, -1, axis=axis))
    return out


def to_cells(q: np.ndarray) -> np.ndarray:
    """Average face values back to cells, summing over axes.

    For ``q = gradient(f)**2`` this yields the cell value of ``|grad f|^2``.
    It is also half the transpose of :func:`to_faces`, which makes
    ``to_cells(g**2)`` the exact cell-wise derivative of ``sum(to_faces(rho) * g**2)``.
    """
    q = np.asarray(q, dtype=float)
    grid = Grid.of_vector(q)
    out = np.zeros(grid.shape)
    for axis in range(grid.dim):
        out += 0.5 * (q[axis] + np.roll(q[axis], 1, axis=axis))
    return out


def integrate(f: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    return float(np.sum(f) * Grid.of(f).cell_volume)


def integrate_faces(v: np.ndarray) -> float:
    v = np.asarray(v, dtype=float)
    return float(np.sum(v) * Grid.of_vector(v).cell_volume)


def inner(f: np.ndarray, g: np.ndarray) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != g.shape:
        raise ValueError(f"shape mismatch {f.shape} vs {g.shape}")
    return float(np.sum(f * g) * Grid.of(f).cell_volume)


def zero_mean(f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    return f - f.mean()


def save_field(path, f: np.ndarray) -> None:
    """Write a scalar field as CSV: a grid header then one value per line, row-major."""
    f = np.asarray(f, dtype=float)
    grid = Grid.of(f)
    np.savetxt(path, f.ravel(), fmt="%.17g", header=f"grid {grid.label()}", comments="# ")


_HEADER = re.compile(r"#\s*grid\s+d=(\d+)\s+n=([\dx]+)")


def load_field(path) -> np.ndarray:
    text = Path(path).read_text()
    first = text.splitlines()[0] if text else ""
    m = _HEADER.match(first)
    if not m:
        raise ValueError(f"{path}: missing '# grid d=<d> n=<n>' header")
    dim = int(m.group(1))
    ns = [int(s) for s in m.group(2).split("x")]
    shape = tuple(ns) if len(ns) == dim else (ns[0],) * dim
    values = np.loadtxt(path, comments="#", ndmin=1)
    if values.size != int(np.prod(shape)):
        raise ValueError(f"{path}: expected {int(np.prod(shape))} values, found {values.size}")
    return values.reshape(shape)
