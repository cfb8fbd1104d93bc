"""Potential energies on density space and their exact discrete first variations.

Three kinds of term are supported:

* linear potential energy ``int V rho``;
* interaction energy ``1/2 int int W(x - y) rho(x) rho(y)``;
* Fisher information ``int |grad log rho|^2 rho``.

Every ``first_variation`` is the gradient of the *discrete* energy with respect
to cell values divided by the cell volume, returned with zero mean.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import Grid, divergence, gradient, inner, integrate_faces, to_cells, to_faces, zero_mean
from .operators import apply_laplacian, check_density


@dataclass(frozen=True, eq=False)
class LinearPotential:
    potential: np.ndarray
    coefficient: float = 1.0
    kind = "linear"

    def value(self, rho):
        return self.coefficient * inner(self.potential, rho)

    def variation(self, rho):
        return self.coefficient * np.asarray(self.potential, dtype=float)


def _displacement_index(shape):
    """Index arrays of ``(x_i - x_j) mod n`` for every pair of cells, per axis."""
    idx = np.indices(shape).reshape(len(shape), -1)
    return tuple((a[:, None] - a[None, :]) % n for a, n in zip(idx, shape))


def interaction_matrix(kernel: np.ndarray) -> np.ndarray:
    """Dense table ``M[i, j] = W(x_i - x_j)`` over flattened cells."""
    kernel = np.asarray(kernel, dtype=float)
    return kernel[_displacement_index(kernel.shape)]


def is_even_kernel(kernel: np.ndarray, atol: float = 1e-12) -> bool:
    kernel = np.asarray(kernel, dtype=float)
    flipped = kernel
    for axis in range(kernel.ndim):
        flipped = np.roll(np.flip(flipped, axis=axis), 1, axis=axis)
    return bool(np.allclose(kernel, flipped, rtol=0.0, atol=atol * max(1.0, np.abs(kernel).max())))


@dataclass(frozen=True, eq=False)
class Interaction:
    """Pairwise interaction with kernel sampled at displacements ``x_j = j h``.

    ``method='fft'`` evaluates the mean-field potential by circular
    convolution; ``'direct'`` uses the dense pairwise table.
    """

    kernel: np.ndarray
    coefficient: float = 1.0
    method: str = "fft"
    kind = "interaction"

    def __post_init__(self):
        if not is_even_kernel(self.kernel):
            raise ValueError("interaction kernel must be even: W(x) == W(-x) on the torus")
        if self.method not in ("fft", "direct"):
            raise ValueError(f"unknown interaction method {self.method!r}")

    def mean_field(self, rho):
        """``W_bar(x) = int W(x - y) rho(y) dy`` on cells."""
        rho = np.asarray(rho, dtype=float)
        grid = Grid.of(rho)
        if self.method == "direct":
            return (interaction_matrix(self.kernel) @ rho.ravel()).reshape(grid.shape) * grid.cell_volume
        conv = np.fft.irfftn(np.fft.rfftn(self.kernel) * np.fft.rfftn(rho), s=grid.shape,
                              axes=tuple(range(grid.dim)))
        return conv * grid.cell_volume

    def value(self, rho):
        return 0.5 * self.coefficient * inner(rho, self.mean_field(rho))

    def variation(self, rho):
        return self.coefficient * self.mean_field(rho)


@dataclass(frozen=True, eq=False)
class FisherInformation:
    coefficient: float = 1.0
    kind = "fisher"

    def value(self, rho):
        rho = check_density(rho)
        g = gradient(np.log(rho))
        return self.coefficient * integrate_faces(to_faces(rho) * g * g)

    def variation(self, rho):
        rho = check_density(rho)
        g = gradient(np.log(rho))
        return self.coefficient * (to_cells(g * g) - 2.0 * divergence(to_faces(rho) * g) / rho)


@dataclass(frozen=True, eq=False)
class EnergyFunctional:
    """Signed sum of energy terms. Immutable; an empty term list is the zero functional."""

    terms: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))

    def __add__(self, other):
        return EnergyFunctional(self.terms + other.terms)

    def scaled(self, c: float) -> "EnergyFunctional":
        return EnergyFunctional(
            tuple(type(t)(**{**t.__dict__, "coefficient": c * t.coefficient}) for t in self.terms)
        )

    def __neg__(self):
        return self.scaled(-1.0)

    def evaluate(self, rho) -> float:
        rho = check_density(rho)
        return float(sum(t.value(rho) for t in self.terms))

    def first_variation(self, rho) -> np.ndarray:
        rho = check_density(rho)
        out = np.zeros(rho.shape)
        for t in self.terms:
            out += t.variation(rho)
        return zero_mean(out)

    def has(self, kind: str) -> bool:
        return any(t.kind == kind for t in self.terms)

    def coefficient_of(self, kind: str) -> float:
        return float(sum(t.coefficient for t in self.terms if t.kind == kind))


ZERO = EnergyFunctional()


def evaluate(F: EnergyFunctional, rho) -> float:
    return F.evaluate(rho)


def first_variation(F: EnergyFunctional, rho) -> np.ndarray:
    return F.first_variation(rho)


def wasserstein_gradient(F: EnergyFunctional, rho) -> np.ndarray:
    """``grad_W F = -div(rho grad dF/drho)``."""
    return -apply_laplacian(rho, F.first_variation(rho))


def variation_check(F: EnergyFunctional, rho, h_dir, eps: float) -> float:
    """Gap between a centered difference of ``F`` along ``h_dir`` and ``<dF/drho, h_dir>``."""
    rho = check_density(rho)
    h_dir = np.asarray(h_dir, dtype=float)
    if not np.any(h_dir):
        return 0.0
    plus = check_density(rho + eps * h_dir, "rho + eps*h")
    minus = check_density(rho - eps * h_dir, "rho - eps*h")
    fd = (F.evaluate(plus) - F.evaluate(minus)) / (2.0 * eps)
    return abs(fd - inner(F.first_variation(rho), h_dir))


def quantum_potential(rho) -> np.ndarray:
    """``-Lap(sqrt rho) / (2 sqrt rho)`` with the unweighted discrete Laplacian."""
    s = np.sqrt(check_density(rho))
    return -divergence(gradient(s)) / (2.0 * s)

