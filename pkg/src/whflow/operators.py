"""Weighted elliptic operator ``Delta_rho = div(rho grad)`` and the Wasserstein metric.

``(-Delta_rho)`` is symmetric positive semidefinite with the constants as its
kernel.  Its pseudo-inverse is computed by preconditioned conjugate gradients
restricted to zero-mean fields, which also fixes the additive gauge of the
returned potential.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import PositivityError, SolverError
from .grid import Grid, divergence, gradient, inner, integrate_faces, to_faces

DEFAULT_TOL = 1e-10
RESIDUAL_REFRESH = 50


def check_density(rho: np.ndarray, name: str = "rho") -> np.ndarray:
    rho = np.asarray(rho, dtype=float)
    if not np.all(np.isfinite(rho)):
        raise PositivityError(f"{name} has non-finite values")
    if np.any(rho <= 0.0):
        raise PositivityError(f"{name} has nonpositive cells (min {rho.min():.3e})")
    return rho


def weighted_laplacian(weight: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``div(w_faces grad phi)`` for an arbitrary, possibly signed, cell weight ``w``."""
    return divergence(to_faces(weight) * gradient(phi))


def apply_laplacian(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``Delta_rho phi``; rejects densities with nonpositive cells."""
    return weighted_laplacian(check_density(rho), phi)


class SolveInfo(NamedTuple):
    iterations: int
    residual: float


class WeightedLaplacian:
    """``Delta_rho`` frozen at a given positive density.

    Instances are immutable; :meth:`apply` and :meth:`solve` are pure.
    """

    def __init__(self, rho: np.ndarray):
        rho = check_density(rho)
        self.grid = Grid.of(rho)
        self.rho = rho
        self.rho_faces = to_faces(rho)
        # constant-coefficient preconditioner, scaled by the mean face weight
        symbol = self.grid.laplacian_symbol * self.rho_faces.mean()
        inv = np.zeros_like(symbol)
        np.divide(1.0, symbol, out=inv, where=symbol > 0)
        self._inv_symbol = inv

    def apply(self, phi: np.ndarray) -> np.ndarray:
        return divergence(self.rho_faces * gradient(phi))

    def _precondition(self, r: np.ndarray) -> np.ndarray:
        return np.fft.irfftn(np.fft.rfftn(r) * self._inv_symbol, s=self.grid.shape, axes=tuple(range(self.grid.dim)))

    def solve(self, sigma: np.ndarray, tol: float = DEFAULT_TOL, max_iter: int | None = None):
        """Zero-mean ``phi`` with ``-Delta_rho phi = sigma``.

        Returns ``(phi, SolveInfo)``.  Raises :class:`SolverError` if the relative
        residual does not reach ``tol`` within ``max_iter`` iterations
        (default ``10 * cells``).
        """
        b = np.asarray(sigma, dtype=float)
        self.grid.check(b, "sigma")
        b = b - b.mean()
        if max_iter is None:
            max_iter = 10 * self.grid.size
        x = np.zeros(self.grid.shape)
        scale = np.abs(b).max()
        if scale == 0.0:
            return x, SolveInfo(0, 0.0)
        # linear problem: iterate on a unit-size rhs so inner products cannot underflow
        b = b / scale
        bnorm = np.linalg.norm(b)

        r = b.copy()
        z = self._precondition(r)
        p = z.copy()
        rz = np.vdot(r, z)
        it, rel, best = 0, 1.0, 1.0
        for it in range(1, max_iter + 1):
            ap = -self.apply(p)
            alpha = rz / np.vdot(p, ap)
            x += alpha * p
            if it % RESIDUAL_REFRESH == 0:
                r = b + self.apply(x)
            else:
                r -= alpha * ap
            rel = np.linalg.norm(r) / bnorm
            if rel <= tol:
                r_true = b + self.apply(x)
                rel = np.linalg.norm(r_true) / bnorm
                if rel <= tol:
                    x -= x.mean()
                    return scale * x, SolveInfo(it, float(rel))
                r = r_true
            z = self._precondition(r)
            rz_new = np.vdot(r, z)
            best = min(best, rel)
            if not np.isfinite(rel) or rz_new <= 0.0 or rel > 1e3 * best:
                # rounding floor reached; further iterations only amplify noise
                break
            p = z + (rz_new / rz) * p
            rz = rz_new
        raise SolverError(
            f"pseudo-inverse did not reach tol={tol:g} in {it} iterations "
            f"(relative residual {rel:.3e})",
            iterations=it,
            residual=float(rel),
        )


def pseudo_inverse(rho, sigma, tol: float = DEFAULT_TOL, max_iter: int | None = None,
                   return_info: bool = False):
    """``(-Delta_rho)^dagger sigma``, zero-mean."""
    phi, info = WeightedLaplacian(rho).solve(sigma, tol=tol, max_iter=max_iter)
    return (phi, info) if return_info else phi


def metric_dual(rho, phi1, phi2) -> float:
    """``g_W`` in potential coordinates: sum over faces of ``rho_f grad phi1 . grad phi2``."""
    rho_faces = to_faces(check_density(rho))
    return integrate_faces(rho_faces * (gradient(phi1) * gradient(phi2)))


def metric_primal(rho, sigma1, sigma2, tol: float = DEFAULT_TOL) -> float:
    """``g_W`` in tangent coordinates: ``inner(sigma1, (-Delta_rho)^dagger sigma2)``."""
    sigma1 = np.asarray(sigma1, dtype=float)
    if not np.any(sigma1):
        check_density(rho)
        return 0.0
    return inner(sigma1, pseudo_inverse(rho, sigma2, tol=tol))


def pseudo_inverse_derivative_check(rho, h_dir, sigma, eps: float,
                                    tol: float = 1e-13) -> float:
    """Max-norm gap between a centered difference in ``eps`` of
    ``(-Delta_{rho + eps h})^dagger sigma`` and the closed form
    ``-(-Delta_rho)^dagger (-Delta_h) (-Delta_rho)^dagger sigma``.
    """
    rho = check_density(rho)
    h_dir = np.asarray(h_dir, dtype=float)
    if not np.any(h_dir):
        return 0.0
    plus = check_density(rho + eps * h_dir, "rho + eps*h")
    minus = check_density(rho - eps * h_dir, "rho - eps*h")
    fd = (pseudo_inverse(plus, sigma, tol) - pseudo_inverse(minus, sigma, tol)) / (2.0 * eps)
    op = WeightedLaplacian(rho)
    inner_phi, _ = op.solve(sigma, tol)
    analytic, _ = op.solve(-weighted_laplacian(h_dir, inner_phi), tol)
    analytic = -analytic
    return float(np.max(np.abs(fd - analytic)))
