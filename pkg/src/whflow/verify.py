"""Quick invariant checks on small grids, one pass/fail line each.

Everything is seeded, and details are printed at three significant digits,
so the output is reproducible byte for byte.
"""

from __future__ import annotations

import math
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import DualState, hj_residual, integrate_flow, primal_residual
from .functionals import EnergyFunctional, FisherInformation, Interaction, LinearPotential, quantum_potential, variation_check
from .grid import Grid, divergence, gradient, inner, integrate, zero_mean
from .operators import (
    apply_laplacian,
    metric_dual,
    metric_primal,
    pseudo_inverse,
    pseudo_inverse_derivative_check,
)
from .particles import MeanFieldForce, PotentialForce, ParticleEnsemble, evolve_particles, init_from_density
from .presets import Profile, fourier_density
from .quantum import HeatPair, bridge_path, heat_pair_evolve, heat_pair_mass, madelung_compose, madelung_decompose, norm, split_step

SEED = 7


class CheckResult(NamedTuple):
    name: str
    passed: bool
    detail: str


def slope(xs, ys) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def smooth_density(grid: Grid, rng, modes: int = 3, amplitude: float = 0.3) -> np.ndarray:
    """Positive random trigonometric density with unit mass."""
    x = grid.coords()
    f = np.ones(grid.shape)
    for _ in range(modes):
        k = rng.integers(1, 4, size=grid.dim)
        phase = rng.uniform(0, 2 * np.pi)
        f = f + amplitude / modes * np.cos(sum(2 * np.pi * ki * xi for ki, xi in zip(k, x)) + phase)
    return f / integrate(f)


def smooth_field(grid: Grid, rng, modes: int = 3) -> np.ndarray:
    x = grid.coords()
    f = np.zeros(grid.shape)
    for _ in range(modes):
        k = rng.integers(1, 4, size=grid.dim)
        f = f + rng.normal() * np.cos(sum(2 * np.pi * ki * xi for ki, xi in zip(k, x)) + rng.uniform(0, 2 * np.pi))
    return zero_mean(f)


def _g(x: float) -> str:
    return f"{x:.3g}"


def check_adjointness():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for dim in (1, 2):
        g = Grid.regular(dim, 16)
        f = rng.normal(size=g.shape)
        v = rng.normal(size=g.vector_shape)
        lhs = inner(f, divergence(v))
        rhs = -float(np.sum(gradient(f) * v)) * g.cell_volume
        worst = max(worst, abs(lhs - rhs), abs(integrate(divergence(v))))
    return worst <= 1e-12, f"max gap {_g(worst)}"


def check_laplacian():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for dim in (1, 2):
        g = Grid.regular(dim, 16)
        rho = smooth_density(g, rng)
        f, h = rng.normal(size=g.shape), rng.normal(size=g.shape)
        sym = abs(inner(apply_laplacian(rho, f), h) - inner(f, apply_laplacian(rho, h)))
        nsd = max(inner(f, apply_laplacian(rho, f)), 0.0)
        kernel = float(np.abs(apply_laplacian(rho, np.full(g.shape, 3.7))).max())
        worst = max(worst, sym, nsd, kernel)
    return worst <= 1e-10, f"max violation {_g(worst)}"


def check_pseudo_inverse():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for dim in (1, 2):
        g = Grid.regular(dim, 32)
        rho = smooth_density(g, rng)
        sigma = zero_mean(rng.normal(size=g.shape))
        phi = pseudo_inverse(rho, sigma, 1e-12)
        worst = max(worst, float(np.abs(apply_laplacian(rho, phi) + sigma).max()), abs(integrate(phi)))
        again = pseudo_inverse(rho, -apply_laplacian(rho, phi), 1e-12)
        worst = max(worst, float(np.abs(again - phi).max()))
    return worst <= 1e-10, f"round trip / projection gap {_g(worst)}"


def check_metric():
    rng = np.random.default_rng(SEED)
    g = Grid.regular(1, 32)
    worst = 0.0
    for _ in range(10):
        rho = smooth_density(g, rng)
        p1, p2 = smooth_field(g, rng), smooth_field(g, rng)
        s1, s2 = -apply_laplacian(rho, p1), -apply_laplacian(rho, p2)
        worst = max(worst, abs(metric_primal(rho, s1, s2, 1e-12) - metric_dual(rho, p1, p2)))
    return worst <= 1e-8, f"max |primal - dual| {_g(worst)}"


def check_derivative_claim():
    rng = np.random.default_rng(SEED)
    g = Grid.regular(1, 32)
    rho = smooth_density(g, rng)
    # a large direction keeps the O(eps^2) term above rounding down to eps = 1e-5
    h = smooth_field(g, rng)
    h = 2.0 * h / np.abs(h).max()
    sigma = smooth_field(g, rng)
    eps = [1e-3, 1e-4, 1e-5]
    errs = [pseudo_inverse_derivative_check(rho, h, sigma, e) for e in eps]
    s = slope(eps, errs)
    return abs(s - 2.0) <= 0.2, f"slope {_g(s)}"


def check_variations():
    rng = np.random.default_rng(SEED)
    g = Grid.regular(1, 32)
    rho = smooth_density(g, rng)
    h = smooth_field(g, rng)
    h = 0.3 * h / np.abs(h).max()
    eps = [1e-2, 1e-3, 1e-4]
    fisher = EnergyFunctional((FisherInformation(1.0),))
    s = slope(eps, [variation_check(fisher, rho, h, e) for e in eps])
    other = EnergyFunctional((LinearPotential(smooth_field(g, rng)),
                              Interaction(Profile("cosine", {"amplitude": 0.2}).on(g))))
    flat = max(variation_check(other, rho, h, e) for e in eps)
    return abs(s - 2.0) <= 0.2 and flat <= 1e-10, f"fisher slope {_g(s)}, linear+interaction gap {_g(flat)}"


def check_quantum_identity():
    ns = [32, 64, 128]
    errs = []
    for n in ns:
        g = Grid.regular(1, n)
        rho = fourier_density(g)
        fisher = EnergyFunctional((FisherInformation(0.125),))
        errs.append(float(np.abs(fisher.first_variation(rho) - zero_mean(quantum_potential(rho))).max()))
    order = -slope(ns, errs)
    return abs(order - 2.0) <= 0.3, f"spatial order {_g(order)}"


def _geodesic(n: int, dt: float, T: float):
    g = Grid.regular(1, n)
    s0 = DualState(fourier_density(g), Profile("sine", {"amplitude": 0.02}).on(g))
    return integrate_flow(s0, EnergyFunctional(), dt, int(round(T / dt)))


def check_conservation():
    dts = [8e-3, 4e-3]
    drifts, masses = [], []
    for dt in dts:
        traj = _geodesic(32, dt, 0.4)
        h = [row["hamiltonian"] for row in traj.diagnostics]
        drifts.append(abs(h[-1] - h[0]) / h[0])
        masses.append(max(abs(row["mass"] - 1) for row in traj.diagnostics))
    order = math.log2(drifts[0] / drifts[1])
    ok = max(masses) <= 1e-12 and abs(order - 2.0) <= 0.3
    return ok, f"mass error {_g(max(masses))}, drift order {_g(order)}"


def check_primal_dual():
    dts = [8e-3, 4e-3]
    res = []
    for dt in dts:
        traj = _geodesic(32, dt, 0.4)
        res.append(primal_residual(traj, EnergyFunctional(), len(traj) // 2))
    order = math.log2(res[0] / res[1])
    return abs(order - 2.0) <= 0.3, f"residual order {_g(order)}"


def check_split_step():
    g = Grid.regular(1, 32)
    psi = madelung_compose(fourier_density(g), g.zeros())
    V = Profile("cosine", {"amplitude": 0.1}).on(g)
    for _ in range(1000):
        psi = split_step(psi, V, 1e-3)
    drift = abs(norm(psi) - 1.0)
    x = g.coords()[0]
    wave = np.exp(2j * np.pi * x)
    t = 0.05
    free = wave
    for _ in range(50):
        free = split_step(free, g.zeros(), t / 50)
    exact = np.exp(-0.5j * (2 * np.pi) ** 2 * t) * wave
    plane = float(np.abs(free - exact).max())
    return drift <= 1e-12 and plane <= 1e-12, f"norm drift {_g(drift)}, plane-wave error {_g(plane)}"


def check_madelung():
    g = Grid.regular(1, 32)
    rng = np.random.default_rng(SEED)
    rho = smooth_density(g, rng)
    phi = smooth_field(g, rng)
    psi = madelung_compose(rho, phi)
    r, current = madelung_decompose(psi)
    back = madelung_compose(r, phi)
    rt = float(np.abs(back - psi).max())
    x = g.coords()[0]
    _, cur = madelung_decompose(np.exp(2j * np.pi * x))
    speed = float(np.abs(np.abs(cur) - 2 * np.pi).max())
    return rt <= 1e-12 and speed <= 1e-10, f"round trip {_g(rt)}, plane-wave speed error {_g(speed)}"


def check_bridge():
    F = EnergyFunctional((FisherInformation(-0.125),))
    res, pair = [], 0.0
    for n, dt in ((32, 4e-3), (64, 2e-3)):
        g = Grid.regular(1, n)
        hp = HeatPair(Profile("cosine", {"offset": 1.0, "amplitude": 0.5}).on(g),
                      Profile("cosine", {"offset": 1.0, "amplitude": 0.3, "phase": 1.0}).on(g))
        traj = bridge_path(hp, 0.0, 0.4, dt, F)
        res.append(max(hj_residual(traj.states, dt, F, len(traj) // 2)))
        m = [heat_pair_mass(heat_pair_evolve(hp, 0.0, 0.4, t)) for t in traj.times]
        pair = max(pair, max(m) - min(m))
    order = math.log2(res[0] / res[1])
    return order >= 1.8 and pair <= 1e-12, f"residual order {_g(order)}, pair-mass spread {_g(pair)}"


def check_particles():
    g = Grid.regular(1, 32)
    rho = fourier_density(g)
    ens = init_from_density(rho, g.zeros(), 2000, SEED)
    F = EnergyFunctional((Interaction(Profile("cosine", {"amplitude": 0.1}).on(g)),))
    out = evolve_particles(ens, MeanFieldForce(F, g), 1e-2, 20)
    mom = float(np.abs(out.momentum() - ens.momentum()).max())
    force = PotentialForce(Profile("cosine", {"amplitude": 0.05}))
    fwd = evolve_particles(ens, force, 1e-2, 50)
    back = evolve_particles(ParticleEnsemble(fwd.positions, -fwd.velocities), force, 1e-2, 50)
    diff = np.abs(back.positions - ens.positions)
    rev = float(np.minimum(diff, 1 - diff).max())
    return mom <= 1e-12 and rev <= 1e-10, f"momentum change {_g(mom)}, reversibility gap {_g(rev)}"


CHECKS: list[tuple[str, Callable]] = [
    ("grid.adjointness", check_adjointness),
    ("operators.laplacian", check_laplacian),
    ("operators.pseudo_inverse", check_pseudo_inverse),
    ("operators.metric_equivalence", check_metric),
    ("operators.derivative_claim", check_derivative_claim),
    ("functionals.variations", check_variations),
    ("functionals.quantum_identity", check_quantum_identity),
    ("dynamics.conservation", check_conservation),
    ("dynamics.primal_dual", check_primal_dual),
    ("quantum.split_step", check_split_step),
    ("quantum.madelung", check_madelung),
    ("quantum.bridge", check_bridge),
    ("particles.symmetry", check_particles),
]


def run_checks(emit=print) -> list[CheckResult]:
    results = []
    for name, fn in CHECKS:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crashing check is a failed check
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        result = CheckResult(name, bool(passed), detail)
        results.append(result)
        if emit is not None:
            emit(f"{'PASS' if result.passed else 'FAIL'} {name}: {detail}")
    return results
