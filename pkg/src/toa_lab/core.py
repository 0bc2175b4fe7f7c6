"""Grids, wave packets, spectral transforms and time evolution.

Natural units ħ = 1 throughout; the particle mass M is an explicit field.

Conventions
-----------
Position amplitudes live on a uniform grid x_j = x_min + j dx (endpoint
excluded) and are normalized as Σ|ψ|² dx = 1.  The momentum representation
uses

    ψ̃(p) = ∫ dx e^{-ipx} ψ(x),        Σ|ψ̃|² dp/(2π) = 1,

on the FFT-dual grid p_k ∈ [-π/dx, π/dx) with dp·dx·n = 2π.  Free evolution
multiplies ψ̃ by e^{-ip²t/2M}.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import simpson

NORM_TOL = 1e-10
EDGE_MASS_WARN = 1e-6
LEFT_SUPPORT_TOL = 1e-6


class GridAliasingWarning(UserWarning):
    """Wave packet has reached the edge of the position grid."""


@dataclass(frozen=True)
class Grid1D:
    """Uniform position grid; must contain x = 0 as an interior point."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        n = self.n_points
        if n < 16 or (n & (n - 1)) != 0:
            raise ValueError(f"n_points must be a power of two >= 16, got {n}")
        if self.x_max <= self.x_min:
            raise ValueError("x_max must exceed x_min")
        dx = (self.x_max - self.x_min) / n
        j0 = round(-self.x_min / dx)
        if not (0 < j0 < n - 1) or abs(self.x_min + j0 * dx) > dx / 2:
            raise ValueError("grid must contain x = 0 as an interior point")

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / self.n_points

    @property
    def x(self) -> np.ndarray:
        return self.x_min + np.arange(self.n_points) * self.dx

    @property
    def index_origin(self) -> int:
        """Index of the grid node closest to x = 0."""
        return int(round(-self.x_min / self.dx))

    def momentum_grid(self) -> "MomentumGrid":
        return MomentumGrid(self)


@dataclass(frozen=True)
class MomentumGrid:
    """FFT-dual of a Grid1D: p values ascending, centered on zero."""

    position_grid: Grid1D

    @property
    def dp(self) -> float:
        g = self.position_grid
        return 2 * np.pi / (g.n_points * g.dx)

    @property
    def p(self) -> np.ndarray:
        g = self.position_grid
        return np.fft.fftshift(2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx))

    @property
    def n_points(self) -> int:
        return self.position_grid.n_points


@dataclass(frozen=True)
class TimeGrid:
    """Uniform samples t_0 = 0 < t_1 < ... < t_max."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if self.t_max <= 0 or self.n_steps < 1:
            raise ValueError("need t_max > 0 and n_steps >= 1")

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.t_max, self.n_steps + 1)


@dataclass(frozen=True)
class GaussianSpec:
    """Gaussian state centered at x = center with mean momentum p̄.

    The width may be given either as the position-space parameter sigma0
    of  ψ₀(x) ∝ exp(-(x-center)²/2σ₀²) e^{ip̄(x-center)}  or as the
    momentum-space parameter a of  ψ̃₀(p) ∝ exp(-a²(p-p̄)²/4 + ...),
    related by a = √2 σ₀.
    """

    center: float
    mean_momentum: float
    sigma0: float | None = None
    a: float | None = None

    def __post_init__(self):
        if (self.sigma0 is None) == (self.a is None):
            raise ValueError("give exactly one of sigma0 or a")
        if self.sigma0 is None:
            object.__setattr__(self, "sigma0", self.a / np.sqrt(2.0))
        else:
            object.__setattr__(self, "a", self.sigma0 * np.sqrt(2.0))
        if self.sigma0 <= 0:
            raise ValueError("width must be positive")

    @property
    def l_dist(self) -> float:
        """Distance from the detection surface x = 0 (for center < 0)."""
        return -self.center

    def t_classical(self, mass: float = 1.0) -> float:
        """Classical arrival time M·L/p̄ at x = 0."""
        if self.mean_momentum == 0:
            raise ValueError("t_classical undefined for zero mean momentum")
        return mass * self.l_dist / self.mean_momentum

    def spread_at(self, t: float, mass: float = 1.0) -> float:
        """|σ(t)| = σ₀ √(1 + t²/M²σ₀⁴) of the freely evolved packet."""
        return self.sigma0 * np.sqrt(1.0 + (t / (mass * self.sigma0**2)) ** 2)

    def arrival_width(self, mass: float = 1.0) -> float:
        """Spread of the arrival-time peak, (Mσ₀/p̄)·√(1 + L²/σ₀⁴p̄²)."""
        p, s, L = self.mean_momentum, self.sigma0, self.l_dist
        return mass * s / abs(p) * np.sqrt(1.0 + L**2 / (s**4 * p**2))


@dataclass(frozen=True)
class WavePacket:
    """Complex amplitudes on a grid, position or momentum representation."""

    grid: Grid1D
    amplitudes: np.ndarray
    mass: float = 1.0
    representation: str = "position"  # "position" | "momentum"

    def __post_init__(self):
        if self.representation not in ("position", "momentum"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        amp = np.asarray(self.amplitudes, dtype=complex)
        if amp.shape != (self.grid.n_points,):
            raise ValueError("amplitude array does not match the grid")
        object.__setattr__(self, "amplitudes", amp)

    @property
    def measure(self) -> float:
        """Quadrature weight of one sample: dx, or dp/2π in momentum space."""
        if self.representation == "position":
            return self.grid.dx
        return self.grid.momentum_grid().dp / (2 * np.pi)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2) * self.measure))

    def normalized(self) -> "WavePacket":
        return replace(self, amplitudes=self.amplitudes / self.norm())

    def right_mass(self) -> float:
        """⟨P̂₊⟩ = probability of x ≥ 0 (position representation only)."""
        if self.representation != "position":
            raise ValueError("right_mass needs the position representation")
        return float(np.sum(np.abs(self.amplitudes) ** 2 * (self.grid.x >= 0)) * self.grid.dx)


def _check_norm(psi: WavePacket):
    if abs(psi.norm() - 1.0) > NORM_TOL:
        raise ValueError(f"wave packet not normalized: |norm-1| = {abs(psi.norm()-1):.2e}")


def gaussian_packet(grid: Grid1D, spec: GaussianSpec, mass: float = 1.0,
                    require_left_support: bool = False) -> WavePacket:
    """Normalized Gaussian wave packet on the grid.

    With ``require_left_support`` the construction insists on ⟨P̂₊⟩ < 1e-6,
    i.e. the state must be localized on the x < 0 side of the detector.
    """
    x = grid.x
    s = spec.sigma0
    psi = np.exp(-((x - spec.center) ** 2) / (2 * s**2)
                 + 1j * spec.mean_momentum * (x - spec.center))
    packet = WavePacket(grid, psi, mass=mass).normalized()
    if require_left_support and packet.right_mass() >= LEFT_SUPPORT_TOL:
        raise ValueError(
            f"state not left-supported: <P+> = {packet.right_mass():.2e} >= {LEFT_SUPPORT_TOL}")
    return packet


def to_momentum(psi: WavePacket) -> WavePacket:
    """Spectral transform ψ̃(p) = ∫dx e^{-ipx} ψ(x); unitary on the grid."""
    if psi.representation != "position":
        raise ValueError("to_momentum expects the position representation")
    g = psi.grid
    raw = np.fft.fft(psi.amplitudes) * g.dx
    p_unshifted = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx)
    raw *= np.exp(-1j * p_unshifted * g.x_min)
    return replace(psi, amplitudes=np.fft.fftshift(raw), representation="momentum")


def to_position(psi: WavePacket) -> WavePacket:
    """Inverse of :func:`to_momentum`."""
    if psi.representation != "momentum":
        raise ValueError("to_position expects the momentum representation")
    g = psi.grid
    raw = np.fft.ifftshift(psi.amplitudes)
    p_unshifted = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx)
    raw = raw * np.exp(1j * p_unshifted * g.x_min)
    amp = np.fft.ifft(raw) / g.dx
    return replace(psi, amplitudes=amp, representation="position")


def _edge_mass(psi: WavePacket) -> float:
    amp2 = np.abs(psi.amplitudes) ** 2
    n_edge = max(2, psi.grid.n_points // 128)
    return float((amp2[:n_edge].sum() + amp2[-n_edge:].sum()) * psi.grid.dx)


def evolve_free(psi: WavePacket, t: float) -> WavePacket:
    """Free evolution: multiply momentum amplitudes by e^{-ip²t/2M}.

    Negative t is allowed (backward evolution, used by the histories
    overlaps); an aliasing warning fires when the evolved packet carries
    more than 1e-6 of its mass at the grid edge.
    """
    was_position = psi.representation == "position"
    phi = to_momentum(psi) if was_position else psi
    p = phi.grid.momentum_grid().p
    amp = phi.amplitudes * np.exp(-1j * p**2 * t / (2 * phi.mass))
    out = replace(phi, amplitudes=amp)
    if was_position:
        out = to_position(out)
        if _edge_mass(out) > EDGE_MASS_WARN:
            warnings.warn("wave packet reached the grid edge", GridAliasingWarning)
    return out


def evolve_potential_split_step(psi: WavePacket, potential: np.ndarray, t: float,
                                n_substeps: int) -> WavePacket:
    """Strang-split evolution under H = p²/2M + V(x), 2nd order in t/n_substeps."""
    if n_substeps < 1:
        raise ValueError("n_substeps must be >= 1")
    V = np.asarray(potential, dtype=float)
    if V.shape != (psi.grid.n_points,):
        raise ValueError("potential does not match the grid")
    if not np.all(np.isfinite(V)):
        raise ValueError("potential must be bounded below (finite)")
    if psi.representation != "position":
        psi = to_position(psi)
    dt = t / n_substeps
    p_unshifted = 2 * np.pi * np.fft.fftfreq(psi.grid.n_points, d=psi.grid.dx)
    half_v = np.exp(-0.5j * V * dt)
    kin = np.exp(-1j * p_unshifted**2 * dt / (2 * psi.mass))
    amp = psi.amplitudes.copy()
    for _ in range(n_substeps):
        amp = half_v * amp
        amp = np.fft.ifft(kin * np.fft.fft(amp))
        amp = half_v * amp
    out = replace(psi, amplitudes=amp)
    if _edge_mass(out) > EDGE_MASS_WARN:
        warnings.warn("wave packet reached the grid edge", GridAliasingWarning)
    return out


def integrate(samples, spacing: float):
    """Composite-Simpson integral of uniformly spaced samples.

    Falls back to the trapezoid rule for two samples.  Linear in the
    samples and exact for cubics on each Simpson panel.
    """
    y = np.asarray(samples)
    if y.shape[-1] < 2:
        raise ValueError("need at least two samples")
    if y.shape[-1] == 2:
        return (y[..., 0] + y[..., 1]) * spacing / 2
    return simpson(y, dx=spacing, axis=-1)


def simpson_weights(n: int, spacing: float) -> np.ndarray:
    """Quadrature weights w with Σ w_j f_j = integrate(f); n must be odd."""
    if n < 3 or n % 2 == 0:
        raise ValueError("Simpson weights need an odd number of samples >= 3")
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * spacing / 3.0
