"""Particle characteristics as an independent check of the density flow.

An ensemble ``(X_t, v_t)`` sampled from the initial density is pushed along
``X'' = -grad dF/drho`` with velocity Verlet, and its cloud-in-cell histogram
is compared against the grid solution.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .grid import Grid, gradient, integrate
from .operators import check_density


class SamplingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ParticleEnsemble:
    positions: np.ndarray   # (N, d), wrapped to [0, 1)
    velocities: np.ndarray  # (N, d)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def momentum(self) -> np.ndarray:
        return self.velocities.mean(axis=0)

    def write_csv(self, path):
        names = ["x", "y"][: self.dim] + ["vx", "vy"][: self.dim]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(names)
            for row in np.hstack([self.positions, self.velocities]):
                writer.writerow([repr(float(v)) for v in row])


def _cic_weights(positions: np.ndarray, shape, offset=0.0):
    """Per-axis lower indices and fractional weights of the linear hat
    around lattice points ``(j + offset) * h``.
    """
    offsets = np.broadcast_to(np.asarray(offset, dtype=float), (len(shape),))
    lows, fracs = [], []
    for axis, n in enumerate(shape):
        u = positions[:, axis] * n - offsets[axis]
        base = np.floor(u)
        fracs.append(u - base)
        lows.append(base.astype(np.int64) % n)
    return lows, fracs


def _corners(dim):
    return [tuple((c >> a) & 1 for a in range(dim)) for c in range(2 ** dim)]


def interpolate(values: np.ndarray, positions: np.ndarray, offset=0.0) -> np.ndarray:
    """Multilinear periodic interpolation of a lattice field at particle positions.

    The lattice sits at ``(j + offset) * h``: ``offset=0`` for cell values,
    ``offset=0.5`` along the normal axis for staggered face values.
    """
    shape = values.shape
    lows, fracs = _cic_weights(positions, shape, offset)
    out = np.zeros(positions.shape[0])
    for corner in _corners(len(shape)):
        w = np.ones(positions.shape[0])
        idx = []
        for axis, bit in enumerate(corner):
            w = w * (fracs[axis] if bit else 1.0 - fracs[axis])
            idx.append((lows[axis] + bit) % shape[axis])
        out += w * values[tuple(idx)]
    return out


def smooth(field: np.ndarray, passes: int = 1) -> np.ndarray:
    """Nearest-neighbour ``[1/4, 1/2, 1/4]`` averaging along each axis, repeated."""
    out = np.asarray(field, dtype=float)
    for _ in range(passes):
        for axis in range(out.ndim):
            out = 0.5 * out + 0.25 * (np.roll(out, 1, axis=axis) + np.roll(out, -1, axis=axis))
    return out


def deposit(positions: np.ndarray, grid: Grid) -> np.ndarray:
    """Cloud-in-cell histogram of equally weighted particles, unit mass."""
    lows, fracs = _cic_weights(positions, grid.shape)
    counts = np.zeros(grid.size)
    for corner in _corners(grid.dim):
        w = np.ones(positions.shape[0])
        idx = []
        for axis, bit in enumerate(corner):
            w = w * (fracs[axis] if bit else 1.0 - fracs[axis])
            idx.append((lows[axis] + bit) % grid.shape[axis])
        flat = np.ravel_multi_index(tuple(idx), grid.shape)
        counts += np.bincount(flat, weights=w, minlength=grid.size)
    rho = counts.reshape(grid.shape) / (positions.shape[0] * grid.cell_volume)
    return rho


def push_forward(e: ParticleEnsemble, grid: Grid, smoothing: int = 0) -> np.ndarray:
    """Density of the ensemble on ``grid``; integrates to one."""
    rho = deposit(e.positions, grid)
    return smooth(rho, smoothing) if smoothing else rho


def _sample_1d(rho: np.ndarray, n_particles: int, rng) -> np.ndarray:
    # exact inverse CDF of the piecewise-constant density, cell j = [(j - 1/2) h, (j + 1/2) h)
    n = rho.size
    cdf = np.concatenate([[0.0], np.cumsum(rho)])
    cdf /= cdf[-1]
    u = rng.random(n_particles)
    cell = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, n - 1)
    frac = (u - cdf[cell]) / (cdf[cell + 1] - cdf[cell])
    x = (cell + frac - 0.5) / n
    return np.mod(x, 1.0)[:, None]


def _sample_rejection(rho: np.ndarray, n_particles: int, rng, max_rounds: int = 1000) -> np.ndarray:
    grid = Grid.of(rho)
    rho_max = rho.max()
    accepted = []
    total = 0
    for _ in range(max_rounds):
        batch = max(2 * (n_particles - total), 1024)
        x = rng.random((batch, grid.dim))
        cells = tuple(np.floor(x[:, a] * n + 0.5).astype(np.int64) % n for a, n in enumerate(grid.shape))
        keep = rng.random(batch) * rho_max < rho[cells]
        accepted.append(x[keep])
        total += int(keep.sum())
        if total >= n_particles:
            return np.concatenate(accepted)[:n_particles]
    raise SamplingError(f"rejection sampling produced {total} of {n_particles} particles")


def init_from_density(rho0: np.ndarray, phi0: np.ndarray, n_particles: int, seed: int) -> ParticleEnsemble:
    """Sample positions i.i.d. from ``rho0`` and set velocities to ``grad phi0`` there."""
    rho0 = check_density(rho0, "rho0")
    if n_particles < 1:
        raise ValueError("need at least one particle")
    rng = np.random.default_rng(seed)
    if rho0.ndim == 1:
        positions = _sample_1d(rho0, n_particles, rng)
    else:
        positions = _sample_rejection(rho0, n_particles, rng)
    g = gradient(phi0)
    velocities = np.empty_like(positions)
    for axis in range(rho0.ndim):
        offset = np.zeros(rho0.ndim)
        offset[axis] = 0.5
        velocities[:, axis] = interpolate(g[axis], positions, offset)
    return ParticleEnsemble(positions, velocities)


def step_particles(e: ParticleEnsemble, force, dt: float, t: float = 0.0) -> ParticleEnsemble:
    """Velocity-Verlet step. ``force(t, positions)`` returns accelerations of shape ``(N, d)``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_half = e.velocities + 0.5 * dt * force(t, e.positions)
    x = np.mod(e.positions + dt * v_half, 1.0)
    v = v_half + 0.5 * dt * force(t + dt, x)
    return ParticleEnsemble(x, v)


class PotentialForce:
    """Time-independent force ``-coefficient * grad V`` from an analytic profile."""

    def __init__(self, profile, coefficient: float = 1.0):
        self.profile = profile
        self.coefficient = coefficient

    def __call__(self, t, positions):
        grads = self.profile.grad(*positions.T)
        return -self.coefficient * np.stack(np.broadcast_arrays(*grads), axis=1)


class MeanFieldForce:
    """``-grad dF/drho`` evaluated on the ensemble's own smoothed histogram.

    The potential gradient is taken at cell centres by a centred difference
    and interpolated with the same cloud-in-cell weights used for deposition,
    which keeps the total self-force zero for even interaction kernels.
    """

    def __init__(self, F, grid: Grid, smoothing: int = 1):
        if F.has("fisher"):
            raise ValueError("particle forces do not support the Fisher information term")
        self.F = F
        self.grid = grid
        self.smoothing = smoothing

    def potential(self, positions):
        rho = smooth(deposit(positions, self.grid), self.smoothing)
        out = np.zeros(self.grid.shape)
        for term in self.F.terms:
            out += term.variation(rho)
        return out

    def __call__(self, t, positions):
        g = gradient(self.potential(positions))
        acc = np.empty_like(positions)
        for axis in range(self.grid.dim):
            centred = 0.5 * (g[axis] + np.roll(g[axis], 1, axis=axis))
            acc[:, axis] = -interpolate(centred, positions, 0.0)
        return acc


def evolve_particles(e: ParticleEnsemble, force, dt: float, n_steps: int, t0: float = 0.0):
    for k in range(n_steps):
        e = step_particles(e, force, dt, t0 + k * dt)
    return e


def compare_densities(a: np.ndarray, b: np.ndarray) -> float:
    """L1 distance ``int |a - b|``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    return integrate(np.abs(a - b))
