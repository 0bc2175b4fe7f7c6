"""Classical time-of-arrival as a first-passage problem.

The state of an ensemble evolves by ∂ρ/∂t = 𝓛ρ for a probability-
conserving generator 𝓛.  First crossing of x = 0 is resolved by the
exclusive alternatives "still in x < 0 at every step so far, in x ≥ 0
now": the sample space is [0, T] ∪ {N}, with N the no-detection event
carrying the residual mass p_N.

Two generators are implemented: a diffusion (𝓛 = D/2 ∂²) discretized with
a second-order stencil and Crank–Nicolson stepping, absorbed by zeroing
the x ≥ 0 entries of each step's output (the Trotter product of projection
and evolution, whose limit is the Dirichlet semigroup), and the two-level
jump process, which is exactly solvable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import erf

from .core import Grid1D, TimeGrid, integrate


@dataclass(frozen=True)
class StochasticGenerator:
    """Generator 𝓛 of a classical Markov evolution."""

    kind: str                      # "diffusion" | "two_level"
    diffusion_const: float = 0.0   # D for the diffusion kind
    rate_a: float = 0.0            # 1 -> 0 rate of the two-level kind
    rate_b: float = 0.0            # 0 -> 1 rate (escape from the initial state)
    grid: Grid1D | None = None

    def __post_init__(self):
        if self.kind == "diffusion":
            if self.diffusion_const <= 0:
                raise ValueError("diffusion constant must be positive")
            if self.grid is None:
                raise ValueError("diffusion generator needs a grid")
        elif self.kind == "two_level":
            if self.rate_a < 0 or self.rate_b < 0:
                raise ValueError("rates must be nonnegative")
        else:
            raise ValueError(f"unknown generator kind {self.kind!r}")

    @classmethod
    def diffusion(cls, D: float, grid: Grid1D) -> "StochasticGenerator":
        return cls(kind="diffusion", diffusion_const=D, grid=grid)

    @classmethod
    def two_level(cls, rate_a: float, rate_b: float) -> "StochasticGenerator":
        return cls(kind="two_level", rate_a=rate_a, rate_b=rate_b)

    def matrix(self) -> np.ndarray:
        """Dense generator matrix (columns sum to zero, off-diagonal ≥ 0)."""
        if self.kind == "two_level":
            b, a = self.rate_b, self.rate_a
            return np.array([[-b, a], [b, -a]])
        n, dx = self.grid.n_points, self.grid.dx
        c = self.diffusion_const / (2 * dx**2)
        L = np.zeros((n, n))
        idx = np.arange(n)
        L[idx, idx] = -2 * c
        L[idx[:-1], idx[:-1] + 1] = c
        L[idx[1:], idx[1:] - 1] = c
        # zero-flux ends keep the columns summing to zero
        L[0, 0] = -c
        L[-1, -1] = -c
        return L


@dataclass(frozen=True)
class ClassicalDensity:
    """Probability density ρ(x) on a grid (or a 2-vector for two_level)."""

    values: np.ndarray
    grid: Grid1D | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(v < -1e-12):
            raise ValueError("density must be nonnegative")
        object.__setattr__(self, "values", v)
        if abs(self.total_mass() - 1.0) > 1e-8:
            raise ValueError(f"density mass {self.total_mass():.6f} != 1")

    def total_mass(self) -> float:
        if self.grid is None:
            return float(self.values.sum())
        return float(self.values.sum() * self.grid.dx)

    def right_mass(self) -> float:
        if self.grid is None:
            return float(self.values[1])
        return float(self.values[self.grid.x >= 0].sum() * self.grid.dx)


def delta_density(grid: Grid1D, x0: float, width_cells: float = 2.0) -> ClassicalDensity:
    """Narrow Gaussian standing in for δ(x - x0); width = width_cells·dx."""
    s = width_cells * grid.dx
    v = np.exp(-((grid.x - x0) ** 2) / (2 * s**2))
    v /= v.sum() * grid.dx
    return ClassicalDensity(v, grid)


@dataclass
class ToaDistribution:
    """Sampled arrival density p(t) on [0, T] plus the no-detection mass p_N."""

    times: np.ndarray
    density: np.ndarray
    no_detect: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.density = np.asarray(self.density, dtype=float)
        if self.times.shape != self.density.shape:
            raise ValueError("times and density must match")
        if np.any(self.density < -1e-12):
            raise ValueError("arrival density must be nonnegative")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def detected_mass(self) -> float:
        return float(integrate(self.density, self.dt))

    def total_mass(self) -> float:
        return self.detected_mass() + self.no_detect

    def mean_arrival_time(self) -> float:
        """Conditional mean ⟨t⟩ given detection (time averages are
        defined on the conditioned sample space only)."""
        cond = condition_on_arrival(self)
        return float(integrate(cond.times * cond.density, cond.dt))


def condition_on_arrival(dist: ToaDistribution) -> ToaDistribution:
    """Restrict the sample space to [0, T]: divide out 1 - p_N."""
    detected = dist.detected_mass()
    if detected <= 1e-15:
        raise ValueError("no arrival mass to condition on (p_N = 1)")
    scale = 1.0 / detected
    return ToaDistribution(dist.times, dist.density * scale, 0.0,
                           meta={**dist.meta, "conditioned": True})


# ---------------------------------------------------------------------------
# diffusion stepping


def _cn_banded(gen: StochasticGenerator, dt: float):
    """Banded (ab) forms of (1 ∓ dt/2 L) for Crank–Nicolson stepping."""
    n, dx = gen.grid.n_points, gen.grid.dx
    c = gen.diffusion_const / (2 * dx**2)
    main = np.full(n, -2 * c)
    main[0] = main[-1] = -c
    upper = np.full(n, c)
    lower = np.full(n, c)
    ab_left = np.zeros((3, n))
    ab_left[0, 1:] = -dt / 2 * upper[1:]
    ab_left[1] = 1 - dt / 2 * main
    ab_left[2, :-1] = -dt / 2 * lower[:-1]
    return ab_left, (main, upper, lower)


def _cn_step(rho, ab_left, tri, dt):
    main, upper, lower = tri
    col = (slice(None),) + (None,) * (rho.ndim - 1)
    rhs = rho * (1 + dt / 2 * main)[col]
    rhs[:-1] += dt / 2 * upper[1:][col] * rho[1:]
    rhs[1:] += dt / 2 * lower[:-1][col] * rho[:-1]
    return solve_banded((1, 1), ab_left, rhs)


def evolve_generator(gen: StochasticGenerator, rho: np.ndarray, dt: float) -> np.ndarray:
    """One full-line step e^{𝓛 dt}ρ (CN for diffusion, exact for two_level)."""
    if gen.kind == "two_level":
        from scipy.linalg import expm
        return expm(gen.matrix() * dt) @ rho
    ab_left, tri = _cn_banded(gen, dt)
    return _cn_step(rho, ab_left, tri, dt)


def _dirichlet_cn_banded(gen: StochasticGenerator, dt: float):
    """CN matrices for the generator with its x >= 0 rows zeroed: the x < 0
    block evolves with an absorbing (Dirichlet) wall at the first x >= 0 node."""
    x = gen.grid.x
    n_left = int(np.sum(x < 0))
    dx = gen.grid.dx
    c = gen.diffusion_const / (2 * dx**2)
    main = np.full(n_left, -2 * c)
    main[0] = -c                      # zero-flux far end
    upper = np.full(n_left, c)
    lower = np.full(n_left, c)
    ab_left = np.zeros((3, n_left))
    ab_left[0, 1:] = -dt / 2 * upper[1:]
    ab_left[1] = 1 - dt / 2 * main
    ab_left[2, :-1] = -dt / 2 * lower[:-1]
    return ab_left, (main, upper, lower), n_left


def restricted_classical_propagator(gen: StochasticGenerator, t: float,
                                    n_steps: int = 256, method: str = "trotter",
                                    sources=None):
    """Kernel columns of K_t, the absorbed semigroup on x < 0.

    method="trotter" alternates a full-line CN step with the projection
    onto x < 0 (the product [χ₋ e^{𝓛t/n} χ₋]ⁿ, first-order in t/n);
    method="dirichlet" evolves the generator with its x ≥ 0 rows zeroed
    (the limit object), second-order accurate.

    ``sources`` selects initial δ-positions (kernel columns, each of unit
    mass); by default every grid node is a source and the full (n, n)
    kernel matrix is returned, which is expensive on large grids.
    """
    if gen.kind != "diffusion":
        raise ValueError("restricted propagator needs a spatial generator")
    if t <= 0:
        raise ValueError("t must be positive")
    n, x, dx = gen.grid.n_points, gen.grid.x, gen.grid.dx
    left = x < 0
    dt = t / n_steps
    if sources is None:
        K = np.eye(n) / dx
    else:
        K = np.zeros((n, len(sources)))
        for j, x0 in enumerate(sources):
            K[np.argmin(np.abs(x - x0)), j] = 1.0 / dx
    K[~left] = 0.0
    if method == "trotter":
        ab_left, tri = _cn_banded(gen, dt)
        for _ in range(n_steps):
            K = _cn_step(K, ab_left, tri, dt)
            K[~left] = 0.0
    elif method == "dirichlet":
        ab_left, tri, n_left = _dirichlet_cn_banded(gen, dt)
        block = K[:n_left]
        for _ in range(n_steps):
            block = _cn_step(block, ab_left, tri, dt)
        K = np.zeros_like(K)
        K[:n_left] = block
    else:
        raise ValueError(f"unknown method {method!r}")
    return K


def first_passage_density(gen: StochasticGenerator, rho0: ClassicalDensity,
                          T: float, n_steps: int) -> ToaDistribution:
    """First-passage density at x = 0 for a left-supported initial density.

    Each step applies e^{𝓛 dt} on the full line and then moves the mass
    found in x ≥ 0 into the current arrival bin, so the bin probabilities
    are exactly ∫dx [χ₊ e^{𝓛δt} (χ₋ e^{𝓛δt})ⁿ ρ₀] and detected + p_N = 1
    to machine precision.
    """
    tg = TimeGrid(T, n_steps)
    dt = tg.dt
    if gen.kind == "two_level":
        # state 0 = not yet jumped; crossing = first 0 -> 1 transition
        rho = np.array([1.0, 0.0]) if rho0 is None else rho0.values.copy()
        if rho[1] > 1e-8:
            raise ValueError("initial density must sit in the undecayed state")
        from scipy.linalg import expm
        step = expm(gen.matrix() * dt)
        bins = np.empty(n_steps)
        for k in range(n_steps):
            rho = step @ rho
            bins[k] = rho[1]
            rho[1] = 0.0
        p_N = rho[0]
    else:
        if rho0.right_mass() > 1e-8:
            raise ValueError("initial density must be supported in x < 0")
        mat = gen.matrix()
        if np.max(np.abs(mat.sum(axis=0))) > 1e-9 / gen.grid.dx:
            raise ValueError("generator does not conserve probability")
        left = gen.grid.x < 0
        dx = gen.grid.dx
        rho = rho0.values.copy()
        ab_left, tri = _cn_banded(gen, dt)
        bins = np.empty(n_steps)
        for k in range(n_steps):
            rho = _cn_step(rho, ab_left, tri, dt)
            absorbed = rho[~left].sum() * dx
            bins[k] = absorbed
            rho[~left] = 0.0
        p_N = rho.sum() * dx
    # node densities from adjacent-bin averages (second-order at interior nodes)
    density = np.empty(n_steps + 1)
    density[1:-1] = (bins[:-1] + bins[1:]) / (2 * dt)
    density[0] = 0.0
    density[-1] = bins[-1] / dt
    return ToaDistribution(tg.times, density, p_N,
                           meta={"scheme": "first_passage", "n_steps": n_steps,
                                 "bin_probabilities": bins})


def two_level_transition_density(rate_b: float, T: float,
                                 n_steps: int = 2000) -> ToaDistribution:
    """Exact 0→1 transition-time density b e^{-bt} with p_N = e^{-bT}."""
    if rate_b < 0:
        raise ValueError("rate must be nonnegative")
    tg = TimeGrid(T, n_steps)
    t = tg.times
    density = rate_b * np.exp(-rate_b * t)
    return ToaDistribution(t, density, float(np.exp(-rate_b * T)),
                           meta={"scheme": "two_level", "rate_b": rate_b})


# ---------------------------------------------------------------------------
# Wiener closed forms (the analytic reference for the diffusion generator)


def wiener_first_passage_pdf(t, D: float, L: float):
    """First-passage density from -L to 0 for 𝓛 = D/2 ∂²:
    p(t) = L/√(2πD t³) · e^{-L²/2Dt}."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = L / np.sqrt(2 * np.pi * D * t[pos] ** 3) * np.exp(-L**2 / (2 * D * t[pos]))
    return out


def wiener_no_detect(D: float, L: float, T: float) -> float:
    """Survival probability erf(L/√(2DT)) of the absorbed Wiener process."""
    return float(erf(L / np.sqrt(2 * D * T)))


def wiener_first_passage_cdf(t, D: float, L: float):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = 1.0 - erf(L / np.sqrt(2 * D * t[pos]))
    return out


# ---------------------------------------------------------------------------
# Monte Carlo oracle


def _walk_chunk(rng, n_walkers, x0, sqrt_D, dt, n_steps):
    """Euler–Maruyama walkers with Brownian-bridge crossing correction.

    Returns first-crossing times (np.inf where the walker survives).
    """
    x = np.full(n_walkers, x0)
    alive = np.ones(n_walkers, dtype=bool)
    t_hit = np.full(n_walkers, np.inf)
    for k in range(n_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        step = sqrt_D * np.sqrt(dt) * rng.standard_normal(idx.size)
        x_new = x[idx] + step
        crossed = x_new >= 0.0
        # bridge: crossing within the step despite both endpoints at x < 0
        both_neg = ~crossed
        if np.any(both_neg):
            u = rng.random(both_neg.sum())
            p_bridge = np.exp(-2.0 * x[idx[both_neg]] * x_new[both_neg] / (sqrt_D**2 * dt))
            crossed[both_neg] = u < p_bridge
        hit = idx[crossed]
        t_hit[hit] = (k + 0.5) * dt
        alive[hit] = False
        x[idx] = x_new
    return t_hit


def monte_carlo_first_passage(gen: StochasticGenerator, x0: float, T: float,
                              n_walkers: int, seed: int, n_steps: int = 2000,
                              n_threads: int = 1, n_bins: int = 200) -> ToaDistribution:
    """Empirical first-passage distribution from n_walkers diffusion paths.

    Walkers are partitioned into n_threads chunks with independent spawned
    substreams, so the result is deterministic given (seed, n_threads).
    """
    if gen.kind != "diffusion":
        raise ValueError("Monte Carlo oracle is defined for the diffusion kind")
    if n_walkers < 10**4:
        raise ValueError("need at least 1e4 walkers")
    sqrt_D = np.sqrt(gen.diffusion_const)
    dt = T / n_steps
    seqs = np.random.SeedSequence(seed).spawn(n_threads)
    sizes = [n_walkers // n_threads] * n_threads
    sizes[-1] += n_walkers - sum(sizes)

    def job(args):
        sq, m = args
        return _walk_chunk(np.random.default_rng(sq), m, x0, sqrt_D, dt, n_steps)

    if n_threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=n_threads) as ex:
            parts = list(ex.map(job, zip(seqs, sizes)))
    else:
        parts = [job(a) for a in zip(seqs, sizes)]
    t_hit = np.concatenate(parts)

    detected = t_hit[np.isfinite(t_hit)]
    p_N = 1.0 - detected.size / n_walkers
    counts, edges = np.histogram(detected, bins=n_bins, range=(0.0, T))
    centers = 0.5 * (edges[:-1] + edges[1:])
    density = counts / (n_walkers * (edges[1] - edges[0]))
    return ToaDistribution(centers, density, p_N,
                           meta={"scheme": "monte_carlo", "seed": seed,
                                 "n_walkers": n_walkers, "n_threads": n_threads,
                                 "n_steps": n_steps,
                                 "p_N_stderr": float(np.sqrt(p_N * (1 - p_N) / n_walkers)),
                                 "samples": detected})


def ks_distance(samples: np.ndarray, cdf_values_at_samples: np.ndarray) -> float:
    """Kolmogorov–Smirnov distance between an empirical sample set and a
    reference CDF (both conditioned on the same window)."""
    n = samples.size
    order = np.argsort(samples)
    ref = cdf_values_at_samples[order]
    emp_hi = np.arange(1, n + 1) / n
    emp_lo = np.arange(0, n) / n
    return float(np.max(np.maximum(np.abs(emp_hi - ref), np.abs(ref - emp_lo))))
