"""Schrodinger and Schrodinger-bridge oracles.

Madelung variables follow ``Psi = sqrt(rho) exp(-i Phi)``.  With that sign,
``(rho, Phi)`` solving the dual Hamiltonian system with
``F = int V rho + 1/8 I(rho)`` corresponds to ``conj(Psi)`` solving
``i Psi_t = -Lap(Psi)/2 + V Psi``; :func:`madelung_split_step` evolves ``Psi``
accordingly.

For the bridge, ``eta`` solves the forward heat equation and ``eta_star`` the
backward one.  ``rho = eta * eta_star`` and ``Phi = log(eta_star / eta) / 2``
then solve the dual system with ``F = -1/8 I(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import DualState, Trajectory, diagnostics
from .errors import NodalPointError
from .grid import Grid, integrate, to_faces, zero_mean
from .operators import check_density


def _k_squared(grid: Grid) -> np.ndarray:
    return sum(k * k for k in grid.wavenumbers())


def norm(psi: np.ndarray) -> float:
    return integrate(np.abs(psi) ** 2)


def normalize(psi: np.ndarray) -> np.ndarray:
    return psi / np.sqrt(norm(psi))


def split_step(psi: np.ndarray, V: np.ndarray, dt: float) -> np.ndarray:
    """Strang step for ``i Psi_t = -Lap(Psi)/2 + V Psi``: half potential, spectral kinetic, half potential."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    grid = Grid.of(psi)
    half_phase = np.exp(-0.5j * dt * np.asarray(V, dtype=float))
    kinetic = np.exp(-0.5j * dt * _k_squared(grid))
    return half_phase * np.fft.ifftn(kinetic * np.fft.fftn(half_phase * psi))


def madelung_split_step(psi: np.ndarray, V: np.ndarray, dt: float) -> np.ndarray:
    """Split step in the sign convention of :func:`madelung_compose`."""
    return np.conj(split_step(np.conj(psi), V, dt))


def madelung_compose(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """``sqrt(rho) exp(-i phi)``, normalized."""
    rho = check_density(rho)
    return normalize(np.sqrt(rho) * np.exp(-1j * np.asarray(phi, dtype=float)))


def probability_current(psi: np.ndarray) -> np.ndarray:
    """``Im(conj(Psi) grad Psi)`` on faces, with spectral derivatives at cells."""
    grid = Grid.of(psi)
    spec = np.fft.fftn(psi)
    out = np.empty(grid.vector_shape)
    for axis, k in enumerate(grid.wavenumbers()):
        d_psi = np.fft.ifftn(1j * k * spec)
        cell = np.imag(np.conj(psi) * d_psi)
        out[axis] = 0.5 * (cell + np.roll(cell, -1, axis=axis))
    return out


def madelung_decompose(psi: np.ndarray, floor: float = 1e-8):
    """``(rho, current)`` of a node-free wave function; ``current = -rho grad Phi``."""
    amp = np.abs(psi)
    if amp.min() <= floor * amp.max():
        raise NodalPointError(f"wave function has a node (min |psi| = {amp.min():.3e})")
    return amp ** 2, probability_current(psi)


def madelung_velocity(psi: np.ndarray) -> np.ndarray:
    """``grad Phi`` on faces, recovered as ``-current / rho_faces``."""
    rho, current = madelung_decompose(psi)
    return -current / to_faces(rho)


def heat_semigroup(f: np.ndarray, tau: float) -> np.ndarray:
    """``exp(tau Lap / 2) f`` spectrally; ``tau >= 0``."""
    if tau < 0:
        raise ValueError("heat semigroup only runs forward (tau >= 0)")
    grid = Grid.of(f)
    return np.fft.ifftn(np.exp(-0.5 * tau * _k_squared(grid)) * np.fft.fftn(f)).real


@dataclass(frozen=True, eq=False)
class HeatPair:
    eta: np.ndarray
    eta_star: np.ndarray


def heat_pair_evolve(hp: HeatPair, t0: float, t1: float, t: float | None = None) -> HeatPair:
    """Both fields at time ``t`` (default ``t1``), given ``eta`` at ``t0`` and ``eta_star`` at ``t1``.

    ``eta`` is carried forward by ``d_t eta = Lap(eta)/2`` and ``eta_star``
    backward by ``d_t eta_star = -Lap(eta_star)/2``; each direction is dissipative.
    """
    if t1 <= t0:
        raise ValueError("need t1 > t0")
    if t is None:
        t = t1
    if not t0 <= t <= t1:
        raise ValueError(f"t={t} outside [{t0}, {t1}]")
    return HeatPair(heat_semigroup(hp.eta, t - t0), heat_semigroup(hp.eta_star, t1 - t))


def heat_pair_mass(hp: HeatPair) -> float:
    """``int eta * eta_star``, constant in time along the pair."""
    return integrate(hp.eta * hp.eta_star)


def hopf_cole(hp: HeatPair) -> DualState:
    """``rho = eta eta_star / Z`` and ``Phi = log(eta_star / eta) / 2``, zero-mean."""
    eta = check_density(hp.eta, "eta")
    eta_star = check_density(hp.eta_star, "eta_star")
    rho = eta * eta_star
    rho = rho / integrate(rho)
    return DualState(rho, zero_mean(0.5 * (np.log(eta_star) - np.log(eta))))


def bridge_path(boundary: HeatPair, t0: float, t1: float, dt: float, F) -> Trajectory:
    """Hopf-Cole transform of the heat pair sampled every ``dt`` on ``[t0, t1]``."""
    n_steps = int(round((t1 - t0) / dt))
    traj = Trajectory()
    for k in range(n_steps + 1):
        t = min(t0 + k * dt, t1)
        s = hopf_cole(heat_pair_evolve(boundary, t0, t1, t))
        traj.append(t, s, diagnostics(t, s, F))
    return traj
