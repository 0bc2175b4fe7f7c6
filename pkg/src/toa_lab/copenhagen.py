"""Sequential-reduction crossing chains, the Zeno limit, and the two
no-reduction continuum regularizations.

The reduction chain evaluates

    p_k = ‖ P̂₊ e^{-iĤδt} (P̂₋ e^{-iĤδt})^{k-1} ψ₀ ‖²,

the joint probability that the particle stayed in x < 0 at the first k-1
checks and is found in x ≥ 0 at the k-th.  These numbers are not additive
and shrink with the step size at fixed t = kδt, so they define no density;
the Zeno product Ĉ_T = (P̂₋e^{-iĤT/n}P̂₋)ⁿ drives the survival probability
toward 1 as n grows.

The no-reduction alternatives never collapse the state.  With a temporal
resolution τ the discrete recursion p_k = q₊(t_k)·Π_{i<k}[1 - q₊(t_i)],
q₊(t) = Tr(ρ̂_t P̂₊), transcribes to the survival factor
G(t) = exp[(1/τ)∫₀ᵗ ln(1 - q₊)ds] and the density p(t) = -dG/dt, which
conserves probability exactly.  The strip variant detects within
[-δx/2, δx/2] with δx = v·δt, giving p(t) = v ρ_t(0) e^{-v∫₀ᵗ ρ_s(0) ds}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .core import Grid1D, TimeGrid, WavePacket, evolve_free, integrate, to_momentum
from .stochastic import ToaDistribution

LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class HalfLineProjectors:
    """Diagonal masks for (-∞, 0) and [0, ∞), plus an optional strip."""

    grid: Grid1D

    @property
    def minus(self) -> np.ndarray:
        return (self.grid.x < 0).astype(float)

    @property
    def plus(self) -> np.ndarray:
        return (self.grid.x >= 0).astype(float)

    def strip(self, delta_x: float) -> np.ndarray:
        if delta_x < self.grid.dx:
            raise ValueError("strip width must be at least one grid cell")
        return (np.abs(self.grid.x) <= delta_x / 2).astype(float)


@dataclass(frozen=True)
class DetectorConfig:
    """Resolution parameters of the continuum regularizations."""

    tau: float = 0.0       # temporal resolution
    v: float = 0.0         # detection velocity (strip width per unit time)
    delta_x: float = 0.0   # strip width for projective position checks

    def __post_init__(self):
        if self.tau < 0 or self.v < 0 or self.delta_x < 0:
            raise ValueError("detector parameters must be nonnegative")

    def validate(self, T: float, grid: Grid1D | None = None):
        problems = []
        if self.tau and self.tau >= T:
            problems.append(f"tau = {self.tau} must be below T = {T}")
        if grid is not None and self.delta_x and self.delta_x < grid.dx:
            problems.append(f"delta_x = {self.delta_x} below one grid cell {grid.dx}")
        return problems


def _require_left_supported(psi: WavePacket, tol: float = 1e-6):
    if psi.right_mass() >= tol:
        raise ValueError(f"state not supported in x < 0: <P+> = {psi.right_mass():.2e}")


def reduction_chain_probability(psi0: WavePacket, k: int, n: int, T: float,
                                evolve=None) -> float:
    """Probability that the reduction chain registers the crossing at step k.

    ``evolve(psi, dt)`` defaults to free evolution; pass a different
    propagator to change the Hamiltonian (or the identity for Ĥ = 0).
    """
    if not 1 <= k <= n:
        raise ValueError(f"k = {k} out of range 1..{n}")
    _require_left_supported(psi0)
    dt = T / n
    step = _free_stepper(psi0, dt) if evolve is None else (
        lambda amp: evolve(WavePacket(psi0.grid, amp, psi0.mass), dt).amplitudes)
    proj = HalfLineProjectors(psi0.grid)
    minus, plus = proj.minus, proj.plus
    amp = psi0.amplitudes
    for _ in range(k - 1):
        amp = minus * step(amp)
    final = step(amp)
    return float(np.sum(np.abs(final) ** 2 * plus) * psi0.grid.dx)


def zeno_survival(psi0: WavePacket, T: float, n: int, evolve=None) -> float:
    """Survival ‖Ĉ_Tψ₀‖² under n projective checks, Ĉ_T = (P̂₋e^{-iĤT/n}P̂₋)ⁿ."""
    _require_left_supported(psi0)
    if evolve is None:
        evolve = evolve_free
    dt = T / n
    minus = HalfLineProjectors(psi0.grid).minus
    amp = minus * psi0.amplitudes
    for _ in range(n):
        evolved = evolve(WavePacket(psi0.grid, amp, psi0.mass), dt)
        amp = minus * evolved.amplitudes
    return float(np.sum(np.abs(amp) ** 2) * psi0.grid.dx)


# ---------------------------------------------------------------------------
# no-reduction densities


def _momentum_cache(psi0: WavePacket):
    phi = to_momentum(psi0) if psi0.representation == "position" else psi0
    return phi


def _snapshots_abs2(psi0: WavePacket, times: np.ndarray):
    """|ψ_t(x)|² for each snapshot time (free evolution from cached ψ̃)."""
    phi = _momentum_cache(psi0)
    g = phi.grid
    p_unshifted = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx)
    raw = np.fft.ifftshift(phi.amplitudes) * np.exp(1j * p_unshifted * g.x_min)
    out = np.empty((len(times), g.n_points))
    for i, t in enumerate(times):
        amp = np.fft.ifft(raw * np.exp(-1j * p_unshifted**2 * t / (2 * phi.mass))) / g.dx
        out[i] = np.abs(amp) ** 2
    return out


def right_mass_series(psi0: WavePacket, times: np.ndarray) -> np.ndarray:
    """q₊(t) = Tr(ρ̂_t P̂₊) along the free evolution.

    The x = 0 node sits on the boundary of the half line and enters with
    trapezoid half weight, keeping the quadrature second order.
    """
    g = psi0.grid
    dens = _snapshots_abs2(psi0, times)
    w = (g.x > 0).astype(float)
    w[g.index_origin] = 0.5
    q = dens @ w * g.dx
    return np.clip(q, 0.0, 1.0)


def boundary_density_series(psi0: WavePacket, times: np.ndarray) -> np.ndarray:
    """ρ_t(0) = |ψ_t(0)|² by quadratic interpolation through the three
    nodes nearest x = 0 (removes the dx-level grid-alignment jitter)."""
    g = psi0.grid
    dens = _snapshots_abs2(psi0, times)
    j = g.index_origin
    x0, x1, x2 = g.x[j - 1], g.x[j], g.x[j + 1]
    y0, y1, y2 = dens[:, j - 1], dens[:, j], dens[:, j + 1]
    l0 = (0 - x1) * (0 - x2) / ((x0 - x1) * (x0 - x2))
    l1 = (0 - x0) * (0 - x2) / ((x1 - x0) * (x1 - x2))
    l2 = (0 - x0) * (0 - x1) / ((x2 - x0) * (x2 - x1))
    return np.maximum(y0 * l0 + y1 * l1 + y2 * l2, 0.0)


def no_reduction_density_tau(psi0: WavePacket, tau: float, T: float,
                             n_steps: int) -> ToaDistribution:
    """Inference-only arrival density with temporal resolution τ.

    The survival exponent is accumulated as (1/τ)∫ln(1 - q₊), the exact
    continuum transcription of the discrete recursion, and the density is
    its total derivative, so ∫p + p_N = 1 to quadrature accuracy.
    """
    tg = TimeGrid(T, n_steps)
    if tau < 5 * tg.dt:
        raise ValueError(f"tau = {tau} below 5 dt = {5*tg.dt}: refine the time grid")
    if abs(psi0.norm() - 1.0) > 1e-8:
        raise ValueError("state must be normalized")
    times = tg.times
    q = right_mass_series(psi0, times)
    log_surv = np.log(np.maximum(1.0 - q, LOG_FLOOR))
    F = cumulative_simpson(log_surv, dx=tg.dt, initial=0.0) / tau
    with np.errstate(under="ignore"):
        G = np.exp(F)
    density = -(log_surv / tau) * G
    return ToaDistribution(times, density, float(G[-1]),
                           meta={"scheme": "no_reduction_tau", "tau": tau,
                                 "q_plus": q})


def no_reduction_discrete(psi0: WavePacket, tau: float, T: float):
    """Bin probabilities of the discrete recursion with step τ:
    p_k = q₊(t_k)·Π_{i<k}[1 - q₊(t_i)].  Oracle for the continuum form."""
    n = int(round(T / tau))
    times = np.arange(n + 1) * tau
    q = right_mass_series(psi0, times)
    surv = np.cumprod(1.0 - q)
    p = np.empty(n + 1)
    p[0] = q[0]
    p[1:] = q[1:] * surv[:-1]
    return times, p, float(surv[-1])


def strip_detector_density(psi0: WavePacket, v: float, T: float,
                           n_steps: int) -> ToaDistribution:
    """Shrinking-strip detection density p(t) = v ρ_t(0) e^{-v∫₀ᵗρ_s(0)ds}."""
    if v < 0:
        raise ValueError("v must be nonnegative")
    if abs(psi0.norm() - 1.0) > 1e-8:
        raise ValueError("state must be normalized")
    tg = TimeGrid(T, n_steps)
    times = tg.times
    rho0 = boundary_density_series(psi0, times)
    acc = cumulative_simpson(rho0, dx=tg.dt, initial=0.0)
    with np.errstate(under="ignore"):
        G = np.exp(-v * acc)
    density = v * rho0 * G
    return ToaDistribution(times, density, float(G[-1]),
                           meta={"scheme": "strip_detector", "v": v,
                                 "boundary_density": rho0})


def tau_sensitivity(psi0: WavePacket, tau: float, T: float, n_steps: int) -> float:
    """max_t |p_τ(t) - p_{2τ}(t)| / max_t p_τ(t): the resolution-dependence
    figure of merit of the τ-regularized density."""
    a = no_reduction_density_tau(psi0, tau, T, n_steps)
    b = no_reduction_density_tau(psi0, 2 * tau, T, n_steps)
    return float(np.max(np.abs(a.density - b.density)) / np.max(a.density))
