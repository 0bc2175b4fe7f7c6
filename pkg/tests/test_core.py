"""Core grids, transforms, evolution and quadrature."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from toa_lab.core import (
    GaussianSpec,
    Grid1D,
    TimeGrid,
    WavePacket,
    evolve_free,
    evolve_potential_split_step,
    gaussian_packet,
    integrate,
    simpson_weights,
    to_momentum,
    to_position,
)


@pytest.fixture
def grid():
    return Grid1D(-100.0, 100.0, 2048)


@pytest.fixture
def packet(grid):
    return gaussian_packet(grid, GaussianSpec(center=-25.0, mean_momentum=2.0, sigma0=5.0))


def test_grid_invariants():
    g = Grid1D(-8.0, 8.0, 64)
    assert g.dx > 0
    assert abs(g.x[g.index_origin]) <= g.dx / 2
    mg = g.momentum_grid()
    assert mg.dp * g.dx * g.n_points == pytest.approx(2 * np.pi, rel=1e-14)
    with pytest.raises(ValueError):
        Grid1D(-8.0, 8.0, 100)  # not a power of two
    with pytest.raises(ValueError):
        Grid1D(-8.0, 8.0, 8)
    with pytest.raises(ValueError):
        Grid1D(1.0, 8.0, 64)  # x = 0 not interior


def test_time_grid():
    tg = TimeGrid(10.0, 5)
    assert tg.dt == pytest.approx(2.0)
    assert np.all(np.diff(tg.times) > 0)
    assert tg.times[0] == 0.0 and tg.times[-1] == 10.0


def test_packet_normalized(packet):
    assert abs(packet.norm() - 1.0) < 1e-10


def test_round_trip_identity(packet):
    back = to_position(to_momentum(packet))
    err = np.sqrt(np.sum(np.abs(back.amplitudes - packet.amplitudes) ** 2) * packet.grid.dx)
    assert err < 1e-10


def test_momentum_norm_preserved(packet):
    assert abs(to_momentum(packet).norm() - 1.0) < 1e-10


def test_gaussian_fourier_pair(grid):
    # center 0, pbar 0: Gaussian of width sigma0 maps to width 1/sigma0 in p
    psi = gaussian_packet(grid, GaussianSpec(center=0.0, mean_momentum=0.0, sigma0=5.0))
    phi = to_momentum(psi)
    p = grid.momentum_grid().p
    dens = np.abs(phi.amplitudes) ** 2
    var = np.sum(p**2 * dens) / np.sum(dens)
    assert var == pytest.approx(1.0 / (2 * 5.0**2), rel=1e-6)  # Δp² = 1/2σ₀²


def test_momentum_gaussian_closed_form(grid):
    # ψ̃(p) = √(2π) (a²/2π)^{1/4} exp(-a²(p-p̄)²/4 + ipL) for center -L
    L, pbar, a = 25.0, 2.0, 5.0 * np.sqrt(2.0)
    psi = gaussian_packet(grid, GaussianSpec(center=-L, mean_momentum=pbar, a=a))
    phi = to_momentum(psi)
    p = grid.momentum_grid().p
    expected = np.sqrt(2 * np.pi) * (a**2 / (2 * np.pi)) ** 0.25 * np.exp(
        -(a**2 / 4) * (p - pbar) ** 2 + 1j * p * L)
    sel = np.abs(p - pbar) < 6 / a
    err = np.max(np.abs(phi.amplitudes[sel] - expected[sel]))
    assert err < 1e-8


def test_left_support_enforced(grid):
    with pytest.raises(ValueError, match="left-supported"):
        gaussian_packet(grid, GaussianSpec(center=-2.0, mean_momentum=1.0, sigma0=5.0),
                        require_left_support=True)


def test_evolve_free_identity(packet):
    out = evolve_free(packet, 0.0)
    assert np.allclose(out.amplitudes, packet.amplitudes)


def test_evolve_free_ehrenfest(packet):
    t = 7.0
    out = evolve_free(packet, t)
    x = packet.grid.x
    mean0 = np.sum(x * np.abs(packet.amplitudes) ** 2) * packet.grid.dx
    mean_t = np.sum(x * np.abs(out.amplitudes) ** 2) * packet.grid.dx
    assert mean_t == pytest.approx(mean0 + 2.0 * t / 1.0, abs=1e-6)


def test_evolve_free_norm_and_semigroup(packet):
    a = evolve_free(evolve_free(packet, 3.0), 4.0)
    b = evolve_free(packet, 7.0)
    assert abs(a.norm() - 1.0) < 1e-8
    assert np.max(np.abs(a.amplitudes - b.amplitudes)) < 1e-10


def test_free_kernel_matches_analytic():
    # propagate a narrow packet and compare with ∫G₀(x,x')ψ(x')dx' on a coarse grid
    g = Grid1D(-40.0, 40.0, 1024)
    psi = gaussian_packet(g, GaussianSpec(center=-5.0, mean_momentum=1.0, sigma0=1.5))
    t, M = 2.0, 1.0
    out = evolve_free(psi, t)
    x = g.x
    sub = np.arange(0, g.n_points, 8)
    kern = np.sqrt(M / (2j * np.pi * t)) * np.exp(
        1j * M * (x[sub, None] - x[None, :]) ** 2 / (2 * t))
    direct = kern @ psi.amplitudes * g.dx
    assert np.max(np.abs(direct - out.amplitudes[sub])) < 1e-6


def test_split_step_free_limit(packet):
    V = np.zeros(packet.grid.n_points)
    a = evolve_potential_split_step(packet, V, 5.0, 64)
    b = evolve_free(packet, 5.0)
    err = np.sqrt(np.sum(np.abs(a.amplitudes - b.amplitudes) ** 2) * packet.grid.dx)
    assert err < 1e-8


def test_split_step_harmonic_revival():
    # analytic oracle: oscillator state returns (up to phase) after one period
    g = Grid1D(-60.0, 60.0, 2048)
    omega, M = 0.5, 1.0
    V = 0.5 * M * omega**2 * g.x**2
    psi = gaussian_packet(g, GaussianSpec(center=-6.0, mean_momentum=0.0,
                                          sigma0=1.0 / np.sqrt(M * omega)))
    T = 2 * np.pi / omega
    out = evolve_potential_split_step(psi, V, T, 2000)
    overlap = abs(np.vdot(psi.amplitudes, out.amplitudes) * g.dx)
    assert overlap > 0.999
    assert abs(out.norm() - 1.0) < 1e-8


def test_split_step_second_order():
    g = Grid1D(-60.0, 60.0, 1024)
    V = 0.05 * g.x**2
    psi = gaussian_packet(g, GaussianSpec(center=-6.0, mean_momentum=1.0, sigma0=2.0))
    ref = evolve_potential_split_step(psi, V, 4.0, 4096)
    errs = []
    for n in (16, 32):
        out = evolve_potential_split_step(psi, V, 4.0, n)
        errs.append(np.sqrt(np.sum(np.abs(out.amplitudes - ref.amplitudes) ** 2) * g.dx))
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.3)


def test_split_step_rejects_unbounded():
    g = Grid1D(-10.0, 10.0, 64)
    psi = gaussian_packet(g, GaussianSpec(center=-2.0, mean_momentum=0.0, sigma0=1.0))
    V = np.full(g.n_points, -np.inf)
    with pytest.raises(ValueError, match="bounded"):
        evolve_potential_split_step(psi, V, 1.0, 4)


def test_wrong_representation_rejected(packet):
    with pytest.raises(ValueError):
        to_position(packet)
    with pytest.raises(ValueError):
        to_momentum(to_momentum(packet))


def test_integrate_constant():
    assert integrate(np.ones(101), 0.01) == pytest.approx(1.0, abs=1e-14)


def test_integrate_sin():
    # composite Simpson on 100 panels carries a deterministic 1.08e-8 error here
    t = np.linspace(0, np.pi, 101)
    assert integrate(np.sin(t), t[1] - t[0]) == pytest.approx(2.0, abs=2e-8)


def test_integrate_exponential_tail():
    b = 1.3
    t = np.linspace(0, 20 / b, 4001)
    val = integrate(b * np.exp(-b * t), t[1] - t[0])
    assert val == pytest.approx(1.0, abs=1e-8)


def test_integrate_two_samples_trapezoid():
    assert integrate(np.array([1.0, 3.0]), 0.5) == pytest.approx(1.0)


def test_integrate_cubic_exact():
    t = np.linspace(0, 1, 5)
    val = integrate(t**3, t[1] - t[0])
    assert val == pytest.approx(0.25, abs=1e-14)


def test_simpson_weights_match_integrate():
    y = np.random.default_rng(0).normal(size=101)
    w = simpson_weights(101, 0.01)
    assert w @ y == pytest.approx(integrate(y, 0.01), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_transform_unitary_random_states(seed):
    g = Grid1D(-20.0, 20.0, 256)
    rng = np.random.default_rng(seed)
    amp = rng.normal(size=g.n_points) + 1j * rng.normal(size=g.n_points)
    # keep the state away from the grid edge so it is physically on-grid
    amp *= np.exp(-((g.x) ** 2) / 40.0)
    psi = WavePacket(g, amp).normalized()
    back = to_position(to_momentum(psi))
    err = np.sqrt(np.sum(np.abs(back.amplitudes - psi.amplitudes) ** 2) * g.dx)
    assert err < 1e-10
    assert abs(to_momentum(psi).norm() - 1.0) < 1e-10
