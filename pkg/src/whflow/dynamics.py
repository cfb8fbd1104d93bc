"""Hamiltonian flows on the density manifold.

Dual (cotangent) coordinates are ``(rho, phi)`` and evolve by

    d_t rho + div(rho grad phi) = 0
    d_t phi + |grad phi|^2 / 2 = -dF/drho

which is the canonical Hamiltonian system of

    H(rho, phi) = 1/2 int |grad phi|^2 rho + F(rho).

On the staggered grid ``rhs_dual`` is the *exact* discrete Hamiltonian vector
field, so integrators only incur time-discretization error.  Primal (tangent)
coordinates are ``(rho, rho_dot)`` with ``phi = (-Delta_rho)^dagger rho_dot``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import FixedPointDivergence, PositivityError
from .functionals import ZERO, EnergyFunctional
from .grid import Grid, gradient, integrate, save_field, to_cells, zero_mean
from .operators import (
    apply_laplacian,
    check_density,
    metric_dual,
    metric_primal,
    pseudo_inverse,
    weighted_laplacian,
)

SOLVER_TOL = 1e-12
MASS_TOL = 1e-12
CFL_LIMIT = 0.5
DIAGNOSTIC_COLUMNS = ("t", "hamiltonian", "kinetic", "potential", "mass", "min_rho", "cg_iters")


@dataclass(frozen=True, eq=False)
class DualState:
    rho: np.ndarray
    phi: np.ndarray

    @property
    def grid(self) -> Grid:
        return Grid.of(self.rho)

    def check(self) -> "DualState":
        check_density(self.rho)
        self.grid.check(self.phi, "phi")
        if abs(integrate(self.rho) - 1.0) > MASS_TOL:
            raise ValueError(f"rho has mass {integrate(self.rho)!r}, expected 1")
        return self


@dataclass(frozen=True, eq=False)
class PrimalState:
    rho: np.ndarray
    rho_dot: np.ndarray


@dataclass
class Trajectory:
    """Uniformly sampled dual-coordinate path with one diagnostics row per state."""

    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    def append(self, t: float, state: DualState, diag: dict | None = None):
        if self.times and t <= self.times[-1]:
            raise ValueError("trajectory times must be strictly increasing")
        self.times.append(float(t))
        self.states.append(state)
        if diag is not None:
            self.diagnostics.append(diag)

    def __len__(self):
        return len(self.states)

    @property
    def dt(self) -> float:
        """Uniform step; raises if samples are not equally spaced."""
        steps = np.diff(self.times)
        if steps.size == 0:
            raise ValueError("trajectory has a single sample")
        if np.ptp(steps) > 1e-9 * steps.mean():
            raise ValueError("trajectory is not uniformly sampled")
        return float(steps.mean())

    def write_diagnostics(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(DIAGNOSTIC_COLUMNS)
            for row in self.diagnostics:
                writer.writerow([_fmt(row[c]) for c in DIAGNOSTIC_COLUMNS])

    def write_snapshots(self, directory, stride: int = 1):
        directory.mkdir(parents=True, exist_ok=True)
        for k in range(0, len(self), max(1, stride)):
            save_field(directory / f"rho_{k:06d}.csv", self.states[k].rho)
            save_field(directory / f"phi_{k:06d}.csv", self.states[k].phi)


def _fmt(value):
    return value if isinstance(value, int) else repr(float(value))


def kinetic_energy(s: DualState) -> float:
    return 0.5 * metric_dual(s.rho, s.phi, s.phi)


def hamiltonian(s: DualState, F: EnergyFunctional = ZERO) -> float:
    return kinetic_energy(s) + F.evaluate(s.rho)


def lagrangian(p: PrimalState, F: EnergyFunctional = ZERO, tol: float = SOLVER_TOL) -> float:
    return 0.5 * metric_primal(p.rho, p.rho_dot, p.rho_dot, tol) - F.evaluate(p.rho)


def legendre_to_dual(p: PrimalState, tol: float = SOLVER_TOL) -> DualState:
    return DualState(p.rho, pseudo_inverse(p.rho, p.rho_dot, tol))


def legendre_to_primal(s: DualState) -> PrimalState:
    return PrimalState(s.rho, -apply_laplacian(s.rho, s.phi))


def rhs_dual(s: DualState, F: EnergyFunctional = ZERO):
    """Time derivatives ``(drho, dphi)`` of the dual Hamiltonian system; ``dphi`` is zero-mean."""
    g = gradient(s.phi)
    drho = -apply_laplacian(s.rho, s.phi)
    dphi = -0.5 * to_cells(g * g) - F.first_variation(s.rho)
    return drho, zero_mean(dphi)


def velocity_ratio(s: DualState, dt: float) -> float:
    """``dt * max|grad phi| / h``; explicit stepping needs this below ``CFL_LIMIT``."""
    return dt * float(np.abs(gradient(s.phi)).max()) / min(s.grid.spacing)


def _check_mass(before: DualState, after: DualState):
    drift = abs(integrate(after.rho) - integrate(before.rho))
    if drift > MASS_TOL:
        raise RuntimeError(f"mass changed by {drift:.3e} in one step")


def step_rk4(s: DualState, F: EnergyFunctional, dt: float) -> DualState:
    """Classical fourth-order Runge-Kutta step of :func:`rhs_dual`."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    ks = []
    for stage, c in enumerate((0.0, 0.5, 0.5, 1.0), start=1):
        if ks:
            rho = s.rho + c * dt * ks[-1][0]
            phi = s.phi + c * dt * ks[-1][1]
        else:
            rho, phi = s.rho, s.phi
        try:
            ks.append(rhs_dual(DualState(rho, phi), F))
        except PositivityError as exc:
            raise PositivityError(f"RK4 stage {stage}: {exc}") from exc
    drho = (ks[0][0] + 2 * ks[1][0] + 2 * ks[2][0] + ks[3][0]) / 6.0
    dphi = (ks[0][1] + 2 * ks[1][1] + 2 * ks[2][1] + ks[3][1]) / 6.0
    out = DualState(s.rho + dt * drho, zero_mean(s.phi + dt * dphi))
    try:
        check_density(out.rho)
    except PositivityError as exc:
        raise PositivityError(f"RK4 update: {exc}") from exc
    _check_mass(s, out)
    return out


def step_midpoint(s: DualState, F: EnergyFunctional, dt: float,
                  newton_tol: float = 1e-12, max_iters: int = 100) -> DualState:
    """Implicit midpoint step, solved by fixed-point iteration on the midpoint state.

    The midpoint ``Y`` solves ``Y = z + dt/2 f(Y)``; the step returns ``2 Y - z``.
    Raises :class:`FixedPointDivergence` if the iteration does not settle to
    ``newton_tol`` in max-norm.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    half = 0.5 * dt
    rho_m, phi_m = s.rho, s.phi
    prev_change = np.inf
    growth = 0
    for it in range(1, max_iters + 1):
        drho, dphi = rhs_dual(DualState(rho_m, phi_m), F)
        rho_new = s.rho + half * drho
        phi_new = s.phi + half * dphi
        change = max(np.abs(rho_new - rho_m).max(), np.abs(phi_new - phi_m).max())
        rho_m, phi_m = rho_new, phi_new
        if not np.isfinite(change):
            break
        if change <= newton_tol:
            out = DualState(2.0 * rho_m - s.rho, zero_mean(2.0 * phi_m - s.phi))
            check_density(out.rho, "rho after midpoint step")
            _check_mass(s, out)
            return out
        growth = growth + 1 if change >= prev_change else 0
        if growth >= 3:
            break
        prev_change = change
    raise FixedPointDivergence(
        f"implicit midpoint fixed point did not converge (dt={dt:g}, last change {change:.3e})",
        iterations=it,
        residual=float(change),
    )


def diagnostics(t: float, s: DualState, F: EnergyFunctional, cg_iters: int = 0) -> dict:
    kin = kinetic_energy(s)
    pot = F.evaluate(s.rho)
    return {"t": t, "hamiltonian": kin + pot, "kinetic": kin, "potential": pot,
            "mass": integrate(s.rho), "min_rho": float(s.rho.min()), "cg_iters": cg_iters}


def advance(s: DualState, F: EnergyFunctional, dt: float, method: str = "midpoint",
            newton_tol: float = 1e-12, max_iters: int = 100, max_halvings: int = 4) -> DualState:
    """One step of size ``dt``; midpoint falls back to two half steps on divergence."""
    if method == "rk4":
        return step_rk4(s, F, dt)
    if method != "midpoint":
        raise ValueError(f"unknown integrator {method!r}")
    try:
        return step_midpoint(s, F, dt, newton_tol, max_iters)
    except FixedPointDivergence:
        if max_halvings <= 0:
            raise
        mid = advance(s, F, dt / 2, method, newton_tol, max_iters, max_halvings - 1)
        return advance(mid, F, dt / 2, method, newton_tol, max_iters, max_halvings - 1)


def integrate_flow(s0: DualState, F: EnergyFunctional, dt: float, n_steps: int,
                   method: str = "midpoint", newton_tol: float = 1e-12,
                   max_iters: int = 100, t0: float = 0.0) -> Trajectory:
    """Integrate the dual system for ``n_steps`` steps, recording every state."""
    traj = Trajectory()
    s = s0
    traj.append(t0, s, diagnostics(t0, s, F))
    for k in range(1, n_steps + 1):
        t = t0 + k * dt
        try:
            s = advance(s, F, dt, method, newton_tol, max_iters)
        except PositivityError as exc:
            raise PositivityError(f"positivity lost at t={t:.6g}: {exc}", time=t) from exc
        traj.append(t, s, diagnostics(t, s, F))
    return traj


def christoffel_term(p: PrimalState, tol: float = SOLVER_TOL) -> np.ndarray:
    """``Gamma_W(rho_dot, rho_dot) = Delta_{rho_dot} phi - 1/2 Delta_rho |grad phi|^2``
    with ``phi = (-Delta_rho)^dagger rho_dot``.

    The first weight ``rho_dot`` is signed; only ``rho`` must be positive.
    """
    phi = pseudo_inverse(p.rho, p.rho_dot, tol)
    g = gradient(phi)
    return weighted_laplacian(p.rho_dot, phi) - 0.5 * apply_laplacian(p.rho, to_cells(g * g))


def primal_residual(traj: Trajectory, F: EnergyFunctional, k: int, tol: float = SOLVER_TOL) -> float:
    """Max-norm of ``rho_tt + Gamma_W(rho_t, rho_t) + grad_W F`` at sample ``k``,
    with time derivatives from centered differences of the stored densities.
    """
    if not 1 <= k <= len(traj) - 2:
        raise IndexError(f"index {k} needs neighbours in a trajectory of length {len(traj)}")
    dt = traj.dt
    rm, r0, rp = (traj.states[j].rho for j in (k - 1, k, k + 1))
    rho_t = zero_mean((rp - rm) / (2.0 * dt))
    rho_tt = zero_mean((rp - 2.0 * r0 + rm) / (dt * dt))
    grad_w = -apply_laplacian(r0, F.first_variation(r0))
    res = rho_tt + christoffel_term(PrimalState(r0, rho_t), tol) + grad_w
    return float(np.abs(res).max())


def _trapezoid(values, dt):
    values = np.asarray(values, dtype=float)
    return float(dt * (values.sum() - 0.5 * (values[0] + values[-1])))


def action(traj: Trajectory, F: EnergyFunctional = ZERO, tol: float = SOLVER_TOL) -> float:
    """Trapezoid quadrature of the Lagrangian along the path."""
    if len(traj) < 3:
        raise ValueError("action needs at least three samples")
    dt = traj.dt
    values = [lagrangian(legendre_to_primal(s), F, tol) for s in traj.states]
    return _trapezoid(values, dt)


class GeodesicEnergy(NamedTuple):
    energy: float
    max_deviation: float  # max |integrand - mean| / mean


def geodesic_energy(traj: Trajectory, tol: float = SOLVER_TOL) -> GeodesicEnergy:
    """``int_0^T g_W(rho_t, rho_t) dt`` and the relative spread of its integrand."""
    dt = traj.dt
    values = []
    for s in traj.states:
        p = legendre_to_primal(s)
        values.append(metric_primal(p.rho, p.rho_dot, p.rho_dot, tol))
    values = np.asarray(values)
    mean = values.mean()
    spread = float(np.abs(values - mean).max() / mean) if mean > 0 else 0.0
    return GeodesicEnergy(_trapezoid(values, dt), spread)


def hj_residual(states, dt: float, F: EnergyFunctional, k: int) -> tuple[float, float]:
    """Continuity and Hamilton-Jacobi residuals at sample ``k`` of a dual path,
    with centered time differences.  Returns their max-norms.
    """
    sm, s0, sp = states[k - 1], states[k], states[k + 1]
    cont = (sp.rho - sm.rho) / (2.0 * dt) + apply_laplacian(s0.rho, s0.phi)
    g = gradient(s0.phi)
    hj = (sp.phi - sm.phi) / (2.0 * dt) + 0.5 * to_cells(g * g) + F.first_variation(s0.rho)
    return float(np.abs(cont).max()), float(np.abs(zero_mean(hj)).max())

