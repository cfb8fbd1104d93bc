"""Acceptance criteria, one printed PASS/FAIL line each.

Tolerances are the pinned project thresholds; nothing here is tuned to make
a criterion pass.
"""

import io
import math
from contextlib import redirect_stdout

import numpy as np
import pytest

from whflow.dynamics import DualState, geodesic_energy, integrate_flow, legendre_to_primal
from whflow.functionals import (
    EnergyFunctional, FisherInformation, Interaction, LinearPotential, quantum_potential, variation_check,
)
from whflow.grid import Grid, divergence, gradient, inner, integrate_faces, zero_mean
from whflow.operators import (
    apply_laplacian, metric_dual, metric_primal, pseudo_inverse, pseudo_inverse_derivative_check,
)
from whflow import particles as pt
from whflow.presets import Profile, fourier_density
from whflow.quantum import madelung_compose, norm, split_step
from whflow.scenarios import SCENARIOS, ScenarioConfig, deterministic_view, run
from whflow.verify import run_checks, slope, smooth_density, smooth_field

SEED = 2026


@pytest.fixture
def report(capsys):
    def emit(number, title, passed, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if passed else 'FAIL'} [criterion {number}] {title}: {detail}")
        assert passed, f"criterion {number} failed: {detail}"
    return emit


@pytest.fixture(scope="module")
def preset_runs(tmp_path_factory):
    root = tmp_path_factory.mktemp("presets")
    return {name: run(ScenarioConfig.preset(name), root / name) for name in SCENARIOS}


# 1 -------------------------------------------------------------------------

def test_criterion_01_operator_algebra(report):
    rng = np.random.default_rng(SEED)
    worst = {}
    for dim in (1, 2):
        for n in (32, 64):
            g = Grid.regular(dim, n)
            for _ in range(3):
                rho = smooth_density(g, rng)
                f, h = rng.normal(size=g.shape), rng.normal(size=g.shape)
                v = rng.normal(size=g.vector_shape)
                sigma = zero_mean(rng.normal(size=g.shape))
                lf = apply_laplacian(rho, f)
                phi = pseudo_inverse(rho, sigma, 1e-12)
                proj = pseudo_inverse(rho, -apply_laplacian(rho, phi), 1e-12)
                checks = {
                    "adjointness": abs(inner(f, divergence(v)) + integrate_faces(gradient(f) * v)),
                    "symmetry": abs(inner(lf, h) - inner(f, apply_laplacian(rho, h))),
                    "semidefinite": max(inner(f, lf), 0.0),
                    "kernel": float(np.abs(apply_laplacian(rho, np.full(g.shape, 1.7))).max()),
                    "round_trip": float(np.abs(apply_laplacian(rho, phi) + sigma).max()),
                    "projection": float(np.abs(proj - phi).max()),
                }
                for k, val in checks.items():
                    worst[k] = max(worst.get(k, 0.0), val)
    passed = all(v <= 1e-10 for v in worst.values())
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (limit 1e-10)"
    report(1, "operator algebra, d=1,2, n=32..64", passed, detail)


# 2 -------------------------------------------------------------------------

def test_criterion_02_metric_equivalence(report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for i in range(100):
        g = Grid.regular(1 + i % 2, 32 if i % 2 == 0 else 16)
        rho = smooth_density(g, rng)
        p1, p2 = smooth_field(g, rng), smooth_field(g, rng)
        s1, s2 = -apply_laplacian(rho, p1), -apply_laplacian(rho, p2)
        worst = max(worst, abs(metric_primal(rho, s1, s2, 1e-12) - metric_dual(rho, p1, p2)))
    report(2, "metric_primal == metric_dual over 100 random cases", worst <= 1e-8, f"max gap {worst:.2e} (limit 1e-8)")


# 3 -------------------------------------------------------------------------

def test_criterion_03_derivative_claim(report):
    rng = np.random.default_rng(SEED)
    g = Grid.regular(1, 32)
    eps = [1e-3, 1e-4, 1e-5]
    slopes = []
    for _ in range(3):
        rho = smooth_density(g, rng)
        h = smooth_field(g, rng)
        h = 2.0 * h / np.abs(h).max()
        sigma = smooth_field(g, rng)
        slopes.append(slope(eps, [pseudo_inverse_derivative_check(rho, h, sigma, e) for e in eps]))
    passed = all(abs(s - 2.0) <= 0.2 for s in slopes)
    report(3, "pseudo-inverse derivative identity", passed,
           "log-log slopes " + ", ".join(f"{s:.3f}" for s in slopes) + " (target 2.0 +- 0.2)")


# 4 -------------------------------------------------------------------------

def test_criterion_04_first_variations(report):
    rng = np.random.default_rng(SEED)
    eps = [1e-2, 1e-3, 1e-4]
    fisher_slopes, exact_gaps = [], []
    for dim, n in ((1, 32), (2, 16)):
        g = Grid.regular(dim, n)
        rho = smooth_density(g, rng)
        h = smooth_field(g, rng)
        h = zero_mean(0.3 * h / np.abs(h).max())
        fisher = EnergyFunctional((FisherInformation(1.0),))
        fisher_slopes.append(slope(eps, [variation_check(fisher, rho, h, e) for e in eps]))
        for term in (LinearPotential(smooth_field(g, rng)),
                     Interaction(Profile("periodic_gaussian", {"width": 0.15}).on(g))):
            exact_gaps.append(max(variation_check(EnergyFunctional((term,)), rho, h, e) for e in eps))
    ns = [32, 64, 128]
    errs = []
    for n in ns:
        gg = Grid.regular(1, n)
        r = fourier_density(gg)
        q = EnergyFunctional((FisherInformation(0.125),)).first_variation(r)
        errs.append(float(np.abs(q - zero_mean(quantum_potential(r))).max()))
    order = -slope(ns, errs)
    passed = (all(abs(s - 2.0) <= 0.2 for s in fisher_slopes) and max(exact_gaps) <= 1e-12
              and abs(order - 2.0) <= 0.3)
    report(4, "first variations and quantum-potential identity", passed,
           "fisher slopes " + ", ".join(f"{s:.3f}" for s in fisher_slopes)
           + f" (2.0 +- 0.2); linear/interaction remainder {max(exact_gaps):.1e} (vanishes identically, limit 1e-12)"
           + f"; identity order {order:.3f} (2.0 +- 0.3)")


# 5 -------------------------------------------------------------------------

def _geodesic_drift(dt):
    cfg = ScenarioConfig.preset("geodesic").with_overrides([f"time.dt={dt!r}"])
    return run(cfg, write=False)


def test_criterion_05_conservation(report, preset_runs):
    mass = 0.0
    for r in preset_runs.values():
        m = np.array([row["mass"] for row in r.trajectory.diagnostics])
        mass = max(mass, float(np.abs(m - 1).max()), float(np.abs(np.diff(m)).max()))
    geo = preset_runs["geodesic"]
    drift = geo.summary["hamiltonian_drift"]
    coarse = _geodesic_drift(2e-3).summary["hamiltonian_drift"]
    order = math.log2(coarse / drift)
    spread = geodesic_energy(geo.trajectory).max_deviation
    passed = mass <= 1e-12 and drift <= 1e-5 and abs(order - 2.0) <= 0.3 and spread <= 1e-4
    report(5, "mass, Hamiltonian and kinetic-energy conservation", passed,
           f"mass error {mass:.1e} (1e-12); drift {drift:.2e} at dt=1e-3 (1e-5); drift order {order:.3f} "
           f"(2.0 +- 0.3); integrand spread {spread:.1e} (1e-4)")


# 6 -------------------------------------------------------------------------

def test_criterion_06_primal_dual_equivalence(report):
    dts = [4e-3, 2e-3, 1e-3]
    orders = {}
    for name in ("geodesic", "linear-vlasov"):
        res = []
        for dt in dts:
            cfg = ScenarioConfig.preset(name).with_overrides([f"time.dt={dt!r}", 'oracle.kind="none"'])
            res.append(run(cfg, write=False).summary["primal_residual_mid"])
        orders[name] = slope(dts, res)
    passed = all(abs(o - 2.0) <= 0.3 for o in orders.values())
    report(6, "primal residual along dual trajectories", passed,
           ", ".join(f"{k} order {v:.3f}" for k, v in orders.items()) + " (2.0 +- 0.3)")


# 7 / 8 ---------------------------------------------------------------------

def _pde_discretization_error(name):
    """L1 gap between the n=64 solution and an n=256 reference, on the coarse cells."""
    cfg = ScenarioConfig.preset(name).with_overrides(['oracle.kind="none"'])
    fine = ScenarioConfig.preset(name).with_overrides(['oracle.kind="none"', "grid.n=256"])
    coarse = run(cfg, write=False).trajectory.states[-1].rho
    ref = run(fine, write=False).trajectory.states[-1].rho[::4]
    return pt.compare_densities(coarse, ref)


def test_criterion_07_linear_vlasov_particles(report, preset_runs):
    base = preset_runs["linear-vlasov"].summary
    N = base["oracle_details"]["N"]
    pde_err = _pde_discretization_error("linear-vlasov")
    bound = max(5 / math.sqrt(N), pde_err)
    more = run(ScenarioConfig.preset("linear-vlasov").with_overrides([f"oracle.N={4 * N}"]), write=False).summary
    passed = base["oracle_l1"] <= bound and more["oracle_l1"] < base["oracle_l1"]
    report(7, "linear Vlasov vs particles (N=1e5, n=64, dt=1e-3, T=0.5)", passed,
           f"L1 {base['oracle_l1']:.4f} <= max(5/sqrt(N)={5 / math.sqrt(N):.4f}, PDE error {pde_err:.1e}); "
           f"4N gives {more['oracle_l1']:.4f}")


def test_criterion_08_interaction_particles(report, preset_runs):
    r = preset_runs["nonlinear-vlasov"]
    s = r.summary
    N = s["oracle_details"]["N"]
    dt, T = s["dt"], s["T"]
    momentum = s["oracle_details"]["momentum_change"]
    pde_err = _pde_discretization_error("nonlinear-vlasov")
    bound = max(5 / math.sqrt(N), pde_err)
    more = run(ScenarioConfig.preset("nonlinear-vlasov").with_overrides([f"oracle.N={4 * N}"]), write=False).summary
    passed = momentum <= dt**2 * T and s["oracle_l1"] <= bound and more["oracle_l1"] < s["oracle_l1"]
    report(8, "interaction Vlasov vs mean-field particles (T=0.3)", passed,
           f"momentum change {momentum:.1e} (dt^2 T = {dt**2 * T:.1e}); L1 {s['oracle_l1']:.4f} <= {bound:.4f}; "
           f"4N gives {more['oracle_l1']:.4f}")


# 9 -------------------------------------------------------------------------

def test_criterion_09_schrodinger(report):
    ns = [32, 64, 128]
    errs = []
    for n in ns:
        dt = 1e-3 * (32 / n) ** 2
        cfg = ScenarioConfig.preset("schrodinger").with_overrides([f"grid.n={n}", f"time.dt={dt!r}"])
        errs.append(run(cfg, write=False).summary["oracle_l1"])
    order = -slope(ns, errs)
    g = Grid.regular(1, 64)
    psi = madelung_compose(fourier_density(g), g.zeros())
    V = Profile("cosine", {"amplitude": 0.1}).on(g)
    for _ in range(1000):
        psi = split_step(psi, V, 2e-4)
    drift = abs(norm(psi) - 1)
    passed = order >= 1.5 and drift <= 1e-12
    report(9, "Schrodinger vs WHF density under (h, dt) refinement", passed,
           "L1 " + ", ".join(f"{e:.2e}" for e in errs) + f"; order {order:.3f} (>= 1.5); "
           f"norm drift over 1e3 steps {drift:.1e} (1e-12)")


# 10 ------------------------------------------------------------------------

def test_criterion_10_bridge(report, preset_runs):
    cfg = ScenarioConfig.preset("bridge")
    coarse = run(cfg.with_overrides(["grid.n=32", "time.dt=0.002"]), write=False).summary["oracle_details"]
    fine = preset_runs["bridge"].summary["oracle_details"]
    oc = math.log2(coarse["continuity_residual"] / fine["continuity_residual"])
    oh = math.log2(coarse["hj_residual"] / fine["hj_residual"])
    pair = max(coarse["pair_mass_change"], fine["pair_mass_change"])
    passed = oc >= 1.8 and oh >= 1.8 and pair <= 1e-12
    report(10, "bridge residuals with F = -I/8", passed,
           f"continuity order {oc:.3f}, HJ order {oh:.3f} (>= 1.8); pair-mass change {pair:.1e} (1e-12)")


# 11 ------------------------------------------------------------------------

def test_criterion_11_action_criticality(report):
    g = Grid.regular(1, 32)
    x = g.coords()[0]
    F = EnergyFunctional((LinearPotential(Profile("cosine", {"amplitude": 0.05}).on(g)),))
    T, dt = 0.2, 2e-3
    s0 = DualState(fourier_density(g), Profile("sine", {"amplitude": 0.02}).on(g))
    traj = integrate_flow(s0, F, dt, int(round(T / dt)))
    t = np.array(traj.times)
    rho = [s.rho for s in traj.states]
    rho_dot = [legendre_to_primal(s).rho_dot for s in traj.states]
    bump, dbump = np.sin(np.pi * t / T) ** 2, np.pi / T * np.sin(2 * np.pi * t / T)

    def path_action(h, eps):
        vals = np.array([
            0.5 * metric_primal(r + eps * b * h, v + eps * db * h, v + eps * db * h, 1e-12) - F.evaluate(r + eps * b * h)
            for r, v, b, db in zip(rho, rho_dot, bump, dbump)
        ])
        return dt * (vals.sum() - 0.5 * (vals[0] + vals[-1]))

    rng = np.random.default_rng(SEED)
    a0 = path_action(g.zeros(), 0.0)
    eps = [1e-2, 5e-3, 2.5e-3]
    slopes = []
    for _ in range(10):
        h = zero_mean(sum(rng.normal() * np.cos(2 * np.pi * k * x + rng.uniform(0, 2 * np.pi)) for k in (1, 2, 3)))
        h = 0.2 * h / np.abs(h).max()
        slopes.append(slope(eps, [abs(path_action(h, e) - a0) / e for e in eps]))
    passed = all(abs(s - 1.0) <= 0.2 for s in slopes)
    report(11, "action is critical along solved paths (10 perturbations)", passed,
           f"slopes in [{min(slopes):.3f}, {max(slopes):.3f}] (target 1.0 +- 0.2)")


# 12 ------------------------------------------------------------------------

def test_criterion_12_determinism(report, preset_runs, tmp_path):
    outputs = []
    for _ in range(2):
        buf = io.StringIO()
        with redirect_stdout(buf):
            run_checks()
        outputs.append(buf.getvalue())
    same = {"verify": outputs[0] == outputs[1]}
    for name, first in preset_runs.items():
        second = run(ScenarioConfig.preset(name), tmp_path / name)
        files_a = sorted(p.relative_to(first.output_dir) for p in first.output_dir.rglob("*.csv"))
        files_b = sorted(p.relative_to(second.output_dir) for p in second.output_dir.rglob("*.csv"))
        same[name] = (
            deterministic_view(first.summary) == deterministic_view(second.summary)
            and files_a == files_b
            and all((first.output_dir / f).read_bytes() == (second.output_dir / f).read_bytes() for f in files_a)
        )
    passed = all(same.values())
    report(12, "byte-identical reruns of verify and every preset", passed,
           ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
