import numpy as np
import pytest
from hypothesis import given, strategies as st

from whflow.functionals import EnergyFunctional, FisherInformation, Interaction
from whflow.grid import Grid, integrate
from whflow.particles import (
    MeanFieldForce, ParticleEnsemble, PotentialForce, compare_densities, deposit, evolve_particles,
    init_from_density, interpolate, push_forward, smooth, step_particles,
)
from whflow.presets import Profile, fourier_density


def test_uniform_sampling_statistics():
    g = Grid.regular(1, 32)
    N = 40_000
    e = init_from_density(g.ones(), g.zeros(), N, seed=3)
    assert abs(e.positions.mean() - 0.5) <= 3 / np.sqrt(N)
    assert not e.velocities.any()
    assert e.positions.min() >= 0 and e.positions.max() < 1


def test_uniform_sampling_2d():
    g = Grid.regular(2, 16)
    N = 40_000
    e = init_from_density(g.ones(), g.zeros(), N, seed=4)
    assert e.positions.shape == (N, 2)
    np.testing.assert_allclose(e.positions.mean(axis=0), 0.5, atol=3 / np.sqrt(N))


def test_seed_determinism():
    g = Grid.regular(2, 16)
    rho = fourier_density(g, 0.5, mode=[1, 1])
    a = init_from_density(rho, g.zeros(), 5000, seed=11)
    b = init_from_density(rho, g.zeros(), 5000, seed=11)
    assert np.array_equal(a.positions, b.positions) and np.array_equal(a.velocities, b.velocities)


def test_sampled_fourier_mode():
    g = Grid.regular(1, 64)
    N = 100_000
    e = init_from_density(fourier_density(g), g.zeros(), N, seed=5)
    mode = 2 * np.mean(np.cos(2 * np.pi * e.positions[:, 0]))
    assert abs(mode - 0.5) <= 5 / np.sqrt(N)


def test_initial_velocities_follow_phase_gradient():
    g = Grid.regular(1, 64)
    phi = Profile("sine", {"amplitude": 0.1}).on(g)
    e = init_from_density(g.ones(), phi, 2000, seed=1)
    expected = 0.2 * np.pi * np.cos(2 * np.pi * e.positions[:, 0])
    np.testing.assert_allclose(e.velocities[:, 0], expected, atol=5e-3 * 0.2 * np.pi)


def test_free_motion_is_exact_drift():
    pos = np.array([[0.1], [0.95]])
    vel = np.array([[0.3], [0.2]])
    e = ParticleEnsemble(pos, vel)
    force = PotentialForce(Profile("zero"))
    out = step_particles(e, force, 0.5)
    np.testing.assert_allclose(out.positions[:, 0], [0.25, 0.05], atol=1e-15)
    np.testing.assert_array_equal(out.velocities, vel)


def _pendulum_rk4(x, v, dt, n):
    def f(y):
        return np.array([y[1], -np.sin(2 * np.pi * y[0]) / (2 * np.pi)])
    y = np.array([x, v], dtype=float)
    for _ in range(n):
        k1 = f(y)
        k2 = f(y + dt / 2 * k1)
        k3 = f(y + dt / 2 * k2)
        k4 = f(y + dt * k3)
        y = y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return y


def test_single_particle_matches_reference():
    force = PotentialForce(Profile("cosine", {"amplitude": -1 / (2 * np.pi) ** 2}))
    dt = 1e-3
    e = evolve_particles(ParticleEnsemble(np.array([[0.25]]), np.zeros((1, 1))), force, dt, 1000)
    ref = _pendulum_rk4(0.25, 0.0, dt / 100, 100_000)
    assert abs(e.positions[0, 0] - ref[0]) <= 1e-6
    assert abs(e.velocities[0, 0] - ref[1]) <= 1e-6


def test_verlet_energy_second_order():
    prof = Profile("cosine", {"amplitude": -1 / (2 * np.pi) ** 2})
    force = PotentialForce(prof)
    drift = []
    for dt in (2e-2, 1e-2):
        e = ParticleEnsemble(np.array([[0.25]]), np.zeros((1, 1)))
        energies = []
        for _ in range(int(round(1 / dt))):
            e = step_particles(e, force, dt)
            energies.append(0.5 * e.velocities[0, 0] ** 2 + prof.value(e.positions[0, 0]))
        drift.append(np.ptp(energies))
    assert 3.5 < drift[0] / drift[1] < 4.5


def test_verlet_reversibility():
    g = Grid.regular(1, 32)
    e0 = init_from_density(fourier_density(g), g.zeros(), 500, seed=2)
    force = PotentialForce(Profile("cosine", {"amplitude": 0.05}))
    fwd = evolve_particles(e0, force, 1e-2, 100)
    back = evolve_particles(ParticleEnsemble(fwd.positions, -fwd.velocities), force, 1e-2, 100)
    gap = np.abs(back.positions - e0.positions)
    assert np.minimum(gap, 1 - gap).max() <= 1e-10


def test_mean_field_momentum_conserved():
    g = Grid.regular(1, 32)
    F = EnergyFunctional((Interaction(Profile("cosine", {"amplitude": 0.1}).on(g)),))
    e0 = init_from_density(fourier_density(g), g.zeros(), 5000, seed=9)
    out = evolve_particles(e0, MeanFieldForce(F, g), 1e-2, 30)
    assert np.abs(out.momentum() - e0.momentum()).max() <= 1e-14


def test_mean_field_rejects_fisher():
    g = Grid.regular(1, 16)
    with pytest.raises(ValueError, match="Fisher"):
        MeanFieldForce(EnergyFunctional((FisherInformation(),)), g)


def test_push_forward_spike_and_mass():
    g = Grid.regular(1, 16)
    pos = np.full((10, 1), 3 / 16)
    rho = push_forward(ParticleEnsemble(pos, np.zeros_like(pos)), g)
    assert integrate(rho) == pytest.approx(1, abs=1e-15)
    assert np.count_nonzero(rho) == 1 and rho[3] == pytest.approx(16.0)


def test_push_forward_uniform():
    g = Grid.regular(1, 16)
    N = 160_000
    e = init_from_density(g.ones(), g.zeros(), N, seed=8)
    rho = push_forward(e, g)
    assert np.abs(rho - 1).max() <= 3 / np.sqrt(N / 16)
    assert integrate(push_forward(e, g, smoothing=2)) == pytest.approx(1, abs=1e-14)


@given(seed=st.integers(0, 10_000), n=st.integers(1, 300))
def test_deposit_unit_mass_2d(seed, n):
    g = Grid.regular(2, 8)
    pos = np.random.default_rng(seed).random((n, 2))
    assert integrate(deposit(pos, g)) == pytest.approx(1, abs=1e-13)


@given(seed=st.integers(0, 10_000))
def test_interpolate_reproduces_linear_hat_and_constants(seed):
    r = np.random.default_rng(seed)
    g = Grid.regular(2, 8)
    pos = r.random((20, 2))
    np.testing.assert_allclose(interpolate(np.full(g.shape, 2.5), pos), 2.5, atol=1e-14)
    values = r.normal(size=g.shape)
    nodes = np.array([[0.25, 0.5]])
    assert interpolate(values, nodes)[0] == pytest.approx(values[2, 4], abs=1e-14)


def test_smoothing_preserves_mass():
    f = np.random.default_rng(0).random((8, 8))
    assert smooth(f, 3).sum() == pytest.approx(f.sum(), rel=1e-14)


def test_compare_densities_examples():
    g = Grid.regular(1, 64)
    b = fourier_density(g)
    assert compare_densities(b, b) == 0
    assert compare_densities(g.ones(), b) == pytest.approx(1 / np.pi, abs=3e-4)
    # the quadrature error of the |.| kink is O(h^2)
    gaps = [abs(compare_densities(np.ones(n), fourier_density(Grid.regular(1, n))) - 1 / np.pi) for n in (64, 128, 256)]
    np.testing.assert_allclose(np.log2(np.array(gaps[:-1]) / gaps[1:]), 2.0, atol=0.05)
    assert compare_densities(g.ones(), b) == compare_densities(b, g.ones())
    with pytest.raises(ValueError):
        compare_densities(b, np.ones(32))


def test_write_csv(tmp_path):
    e = ParticleEnsemble(np.array([[0.1, 0.2]]), np.array([[0.3, 0.4]]))
    e.write_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "x,y,vx,vy"
    assert [float(v) for v in lines[1].split(",")] == [0.1, 0.2, 0.3, 0.4]
