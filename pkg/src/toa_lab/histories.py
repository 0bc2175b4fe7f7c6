"""Decoherence-functional machinery for first-crossing histories.

The class amplitude for "still in x < 0 at every step, crossed in
[t, t+dt]" has a continuum limit built from the restricted (Dirichlet)
propagator Ĉ_t.  For a pure left-supported state the crossing branch at
time s is U(T-s)|x=0⟩·c(s) with boundary amplitude

    c(s) = (p̂/M Û_s ψ₀)(0)           (free particle),

and the pulled-back decoherence functional is the complex bi-density

    ρ(t, t') = c(t)·c̄(t')·√(M / 2πi(t'-t)),

singular on its diagonal (the 1/√|t-t'| divergence is integrable, so all
quantities of interest are window integrals).  The no-detection branch is
C_Tψ₀ with d(N,N) = ‖C_Tψ₀‖² → 1 (the Zeno ghost); exhaustiveness gives
d([0,T],[0,T]) + 2Re d([0,T],N) + d(N,N) = 1.

Window integrals are evaluated spectrally,

    d(α, α') = ∫ dp/2π  A_α(p) conj(A_{α'}(p)),
    A_w(p)   = ∫_w dt c(t) e^{iE_p t},

which treats the diagonal singularity exactly and makes d(α, α) ≥ 0
manifest.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .core import (
    Grid1D,
    WavePacket,
    evolve_free,
    integrate,
    simpson_weights,
    to_momentum,
)

METHODS = ("images", "trotter_projection", "dirichlet_pde")


def _left_supported(psi: WavePacket, tol=1e-6):
    if psi.right_mass() >= tol:
        raise ValueError(f"state not supported in x < 0: <P+> = {psi.right_mass():.2e}")


def _reflect(amplitudes: np.ndarray) -> np.ndarray:
    out = np.empty_like(amplitudes)
    out[1:] = amplitudes[:0:-1]
    out[0] = amplitudes[0]
    return out


def restricted_propagate(psi: WavePacket, t: float, method: str = "images",
                         n_steps: int = 512, potential=None) -> WavePacket:
    """Apply the restricted propagator Ĉ_t (evolution confined to x < 0).

    "images" is exact for the free particle; "trotter_projection" is the
    projected-evolution product (P̂₋e^{-iĤδt})ⁿ; "dirichlet_pde" is
    Crank-Nicolson on the half line with an absorbing wall (the limit
    object, and the only method supporting a potential).
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    _left_supported(psi)
    g = psi.grid
    if t == 0:
        return replace(psi, amplitudes=np.where(g.x < 0, psi.amplitudes, 0))
    if method == "images":
        if potential is not None:
            raise ValueError("the image method is exact for the free particle only")
        odd = psi.amplitudes - _reflect(psi.amplitudes)
        evolved = evolve_free(replace(psi, amplitudes=odd), t)
        return replace(psi, amplitudes=np.where(g.x < 0, evolved.amplitudes, 0))
    if method == "trotter_projection":
        if potential is not None:
            raise ValueError("use dirichlet_pde for a nonzero potential")
        left = g.x < 0
        dt = t / n_steps
        p_unshifted = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx)
        kin = np.exp(-1j * p_unshifted**2 * dt / (2 * psi.mass))
        amp = np.where(left, psi.amplitudes, 0)
        for _ in range(n_steps):
            amp = np.where(left, np.fft.ifft(kin * np.fft.fft(amp)), 0)
        return replace(psi, amplitudes=amp)
    # dirichlet_pde: complex CN on the x < 0 block, psi(0) = 0
    n_left = int(np.sum(g.x < 0))
    dx = g.dx
    dt = t / n_steps
    V = np.zeros(n_left) if potential is None else np.asarray(potential)[:n_left]
    c = 1.0 / (2 * psi.mass * dx**2)
    main = 2 * c * np.ones(n_left) + V
    off = -c * np.ones(n_left)
    lam = 0.5j * dt
    ab = np.zeros((3, n_left), dtype=complex)
    ab[0, 1:] = lam * off[1:]
    ab[1] = 1.0 + lam * main
    ab[2, :-1] = lam * off[:-1]
    amp = psi.amplitudes[:n_left].astype(complex)
    for _ in range(n_steps):
        rhs = (1.0 - lam * main) * amp
        rhs[:-1] -= lam * off[1:] * amp[1:]
        rhs[1:] -= lam * off[:-1] * amp[:-1]
        amp = solve_banded((1, 1), ab, rhs)
    out = np.zeros(g.n_points, dtype=complex)
    out[:n_left] = amp
    return replace(psi, amplitudes=out)


def boundary_derivative(psi_restricted: WavePacket) -> complex:
    """∂ₓφ(0) of a half-line (Dirichlet) field, evaluated spectrally on the
    odd extension of the field through the wall."""
    g = psi_restricted.grid
    j0 = g.index_origin
    amp = psi_restricted.amplitudes.copy()
    # odd extension: φ(x) := -φ(-x) for x > 0
    m = min(j0, g.n_points - j0 - 1)
    idx = np.arange(1, m + 1)
    amp[j0 + idx] = -amp[j0 - idx]
    amp[j0] = 0.0
    p = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx)
    dfield = np.fft.ifft(1j * p * np.fft.fft(amp))
    return complex(dfield[j0])


def crossing_amplitude(psi0: WavePacket, times, method: str = "images",
                       n_steps: int = 512) -> np.ndarray:
    """Boundary crossing amplitude c(t).

    For the free particle (images) this is the closed form
    (p̂/M Û_tψ₀)(0) = (1/2πM)∫dp p ψ̃₀(p) e^{-iE_p t}; the other methods
    reconstruct it as ∂ₓ(Ĉ_tψ₀)(0)/(2iM) from the restricted field.
    """
    _left_supported(psi0)
    times = np.asarray(times, dtype=float)
    if method == "images":
        phi = to_momentum(psi0)
        p = psi0.grid.momentum_grid().p
        dp = psi0.grid.momentum_grid().dp
        keep = np.abs(phi.amplitudes) > 1e-13 * np.abs(phi.amplitudes).max()
        pk = p[keep]
        ck = pk * phi.amplitudes[keep] * dp / (2 * np.pi * psi0.mass)
        phase = np.exp(-1j * np.outer(pk**2 / (2 * psi0.mass), times))
        return ck @ phase
    out = np.empty(len(times), dtype=complex)
    for i, t in enumerate(times):
        rest = restricted_propagate(psi0, t, method=method, n_steps=n_steps)
        out[i] = boundary_derivative(rest) / (2j * psi0.mass)
    return out


@dataclass
class HistoryProposition:
    """Time window [t1, t2] ⊂ [0, T], or the no-detection point N."""

    t1: float | None = None
    t2: float | None = None
    is_no_detect: bool = False

    def __post_init__(self):
        if not self.is_no_detect:
            if self.t1 is None or self.t2 is None or not self.t1 <= self.t2:
                raise ValueError("need a window t1 <= t2 (or is_no_detect)")

    @classmethod
    def no_detect(cls):
        return cls(is_no_detect=True)

    def overlaps(self, other: "HistoryProposition") -> bool:
        if self.is_no_detect or other.is_no_detect:
            return False
        return self.t1 < other.t2 and other.t1 < self.t2


@dataclass
class DecoherenceDensity:
    """Bi-density ρ(t,t') on [0,T]², the column d(t,N) and the scalar d(N,N).

    ``singular_diagonal`` marks the continuum 1/√|t-t'| kernel whose ρ(t,t)
    diverges; window integrals remain finite and are evaluated spectrally.
    The conditioned functional divides every entry by ``norm_factor``.
    """

    times: np.ndarray
    amplitude: np.ndarray          # crossing amplitude c(t) (None for matrix form)
    no_detect_column: np.ndarray | None
    dNN: float
    mass: float
    norm_factor: float = 1.0
    rho_matrix: np.ndarray | None = None   # finite-kernel variant (detector model)
    singular_diagonal: bool = True
    diag_singularity_note: str = ("continuum kernel ~ (t'-t)^{-1/2}: diagonal entries "
                                  "are NaN; use window integrals")
    p_max: float = 0.0
    n_p: int = 4097
    meta: dict = field(default_factory=dict)

    # -- raw matrix ---------------------------------------------------------

    def rho(self) -> np.ndarray:
        """Matrix ρ(t_i, t_j) (NaN on the diagonal in the singular case)."""
        if self.rho_matrix is not None:
            return self.rho_matrix / self.norm_factor
        t = self.times
        dtm = np.subtract.outer(t, t).T          # (i,j) -> t_j - t_i
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = np.sqrt(self.mass / (2j * np.pi * dtm))
        np.fill_diagonal(kern, np.nan + 0j)
        c = self.amplitude
        return np.outer(c, np.conj(c)) * kern / self.norm_factor

    def diagonal_profile(self) -> np.ndarray:
        """|c(t)|², the finite envelope of the (divergent) diagonal |ρ(t,t)|."""
        if self.rho_matrix is not None:
            return np.abs(np.diagonal(self.rho_matrix)) / self.norm_factor
        return np.abs(self.amplitude) ** 2 / self.norm_factor

    # -- window integrals ----------------------------------------------------

    def _window_weights(self, t1: float, t2: float) -> np.ndarray:
        t = self.times
        if t1 < t[0] - 1e-12 or t2 > t[-1] + 1e-12:
            raise ValueError("window outside [0, T]")
        i1 = int(np.searchsorted(t, t1 - 1e-12))
        i2 = int(np.searchsorted(t, t2 + 1e-12)) - 1
        n = i2 - i1 + 1
        w = np.zeros(len(t))
        if n < 2:
            return w
        if n % 2 == 0:  # trapezoid patch on the first cell, Simpson on the rest
            w[i1] += 0.5 * self.dt
            w[i1 + 1] += 0.5 * self.dt
            i1 += 1
            n -= 1
        if n >= 3:
            w[i1:i1 + n] += simpson_weights(n, self.dt)
        return w

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def window_pair(self, alpha: HistoryProposition, beta: HistoryProposition) -> complex:
        """d(α, β) for window or no-detection propositions."""
        if alpha.is_no_detect and beta.is_no_detect:
            return complex(self.dNN / self.norm_factor)
        if beta.is_no_detect:
            return np.conj(self.window_pair(beta, alpha))
        if alpha.is_no_detect:
            w = self._window_weights(beta.t1, beta.t2)
            return complex(np.conj(w @ self.no_detect_column) / self.norm_factor)
        if self.rho_matrix is not None:
            wa = self._window_weights(alpha.t1, alpha.t2)
            wb = self._window_weights(beta.t1, beta.t2)
            return complex(wa @ (self.rho_matrix / self.norm_factor) @ np.conj(wb))
        return self._window_pair_spectral(alpha, beta)

    def _energy_amplitude(self, t1: float, t2: float, p: np.ndarray) -> np.ndarray:
        w = self._window_weights(t1, t2)
        sel = w != 0
        phase = np.exp(1j * np.outer(p**2 / (2 * self.mass), self.times[sel]))
        return phase @ (w[sel] * self.amplitude[sel])

    def _window_pair_spectral(self, alpha, beta) -> complex:
        p = np.linspace(0.0, self.p_max, self.n_p)
        Aa = self._energy_amplitude(alpha.t1, alpha.t2, p)
        Ab = Aa if (beta.t1, beta.t2) == (alpha.t1, alpha.t2) else \
            self._energy_amplitude(beta.t1, beta.t2, p)
        vals = Aa * np.conj(Ab)
        # even in p -> twice the p > 0 half, measure dp/2π
        return complex(integrate(vals, p[1] - p[0]) / np.pi / self.norm_factor)

    def detected_pair_mass(self) -> float:
        """d([0,T],[0,T]) — real and nonnegative by construction."""
        full = HistoryProposition(self.times[0], self.times[-1])
        return float(np.real(self.window_pair(full, full)))

    def no_detect_overlap(self) -> complex:
        """d([0,T], N)."""
        full = HistoryProposition(self.times[0], self.times[-1])
        return self.window_pair(full, HistoryProposition.no_detect())

    def normalization_defect(self) -> float:
        """d([0,T],[0,T]) + 2Re d([0,T],N) + d(N,N) - 1 (→ 0 in the limit)."""
        return float(self.detected_pair_mass()
                     + 2 * np.real(self.no_detect_overlap())
                     + self.dNN / self.norm_factor - 1.0 / self.norm_factor)


def decoherence_density(psi0: WavePacket, T: float, n_bins: int,
                        method: str = "images", p_max: float | None = None,
                        n_p: int = 4097, trotter_steps: int = 512) -> DecoherenceDensity:
    """Continuum first-crossing bi-density for a pure left-supported state."""
    _left_supported(psi0)
    if n_bins % 2 == 1:
        n_bins += 1  # even bin count -> odd sample count for Simpson
    times = np.linspace(0.0, T, n_bins + 1)
    c = crossing_amplitude(psi0, times, method=method, n_steps=trotter_steps)

    # no-detection branch C_T psi0 and its backward evolution to each t
    CT = restricted_propagate(psi0, T, method=method, n_steps=trotter_steps)
    dNN = float(np.sum(np.abs(CT.amplitudes) ** 2) * psi0.grid.dx)
    g = psi0.grid
    p_unshifted = 2 * np.pi * np.fft.fftfreq(g.n_points, d=g.dx)
    FCT = np.fft.fft(CT.amplitudes)
    j0 = g.index_origin
    w = np.empty(len(times), dtype=complex)
    for i, t in enumerate(times):
        back = np.fft.ifft(FCT * np.exp(1j * p_unshifted**2 * (T - t) / (2 * psi0.mass)))
        w[i] = back[j0]
    dtn = np.conj(c) * w

    if p_max is None:
        # high enough to cover the spectrum of the windowed amplitude, low
        # enough that e^{iE t} stays resolved on the time grid (dt·E ≲ 1)
        phi = to_momentum(psi0)
        p = g.momentum_grid().p
        big = np.abs(phi.amplitudes) > 1e-10 * np.abs(phi.amplitudes).max()
        p_max = float(max(2.5 * np.abs(p[big]).max(), 2.0))
    return DecoherenceDensity(times=times, amplitude=c, no_detect_column=dtn,
                              dNN=dNN, mass=psi0.mass, p_max=p_max, n_p=n_p,
                              meta={"method": method, "T": T})


def condition_decoherence(d: DecoherenceDensity) -> DecoherenceDensity:
    """Condition on arrival: divide by d([0,T],[0,T]) and drop the N column."""
    mass_pair = d.detected_pair_mass()
    if mass_pair <= 1e-12:
        raise ValueError("vanishing arrival mass: cannot condition")
    return replace(d, norm_factor=d.norm_factor * mass_pair,
                   no_detect_column=None,
                   meta={**d.meta, "conditioned": True})


def coarse_grained_consistency(d: DecoherenceDensity, alpha: HistoryProposition,
                               alpha_prime: HistoryProposition) -> dict:
    """Conditioned window values and the consistency defect |Re d_c(α,α')|."""
    if alpha.overlaps(alpha_prime):
        raise ValueError("windows must be disjoint")
    dc = condition_decoherence(d) if "conditioned" not in d.meta else d
    cross = dc.window_pair(alpha, alpha_prime)
    return {
        "d_alpha_alpha": float(np.real(dc.window_pair(alpha, alpha))),
        "d_alpha_prime_alpha_prime": float(np.real(dc.window_pair(alpha_prime, alpha_prime))),
        "d_cross": complex(cross),
        "consistency_defect": float(abs(np.real(cross))),
    }


def fit_diagonal_width(d: DecoherenceDensity) -> tuple[float, float]:
    """(peak time, width) of |ρ(t,t)| from a log-parabola fit of the
    diagonal envelope; the width convention is √2 × the Gaussian σ of the
    envelope, directly comparable to the arrival width M|σ(t_cl)|/p̄."""
    prof = d.diagonal_profile()
    i = int(np.argmax(prof))
    half = prof[i] * np.exp(-0.5)
    j1 = i
    while j1 > 0 and prof[j1] > half:
        j1 -= 1
    j2 = i
    while j2 < len(prof) - 1 and prof[j2] > half:
        j2 += 1
    sel = slice(max(j1, 1), min(j2 + 1, len(prof)))
    t = d.times[sel]
    y = np.log(prof[sel])
    coeff = np.polyfit(t, y, 2)
    if coeff[0] >= 0:
        raise ValueError("diagonal profile has no interior peak")
    sigma = np.sqrt(-1.0 / (2 * coeff[0]))
    t_peak = -coeff[1] / (2 * coeff[0])
    return float(t_peak), float(np.sqrt(2.0) * sigma)


# ---------------------------------------------------------------------------
# §-style detector model: two-level pointer coupled through P̂₊


@dataclass(frozen=True)
class TwoLevelDetectorModel:
    """Pointer with energy gap Omega, flipped at rate ε while the particle
    occupies x > 0; densities below are the leading perturbative order."""

    omega: float
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("coupling must be nonnegative")

    def perturbative_ok(self, T: float) -> bool:
        return self.epsilon**2 * T < 0.1


def detector_model_density(model: TwoLevelDetectorModel, psi0: WavePacket,
                           T: float, n_bins: int) -> DecoherenceDensity:
    """Pointer-transition bi-density ρ(t,t') = ε²⟨P̂₊ψ_{t'}|e^{-iĤ₀(t'-t)}|P̂₊ψ_t⟩
    (+O(ε⁴)), with d(t,N) = ε⟨e^{iĤ₀(T-t)}ψ₀|P̂₊ψ_t⟩ and d(N,N) = 1."""
    _left_supported(psi0)
    if n_bins % 2 == 1:
        n_bins += 1
    times = np.linspace(0.0, T, n_bins + 1)
    g = psi0.grid
    plus = g.x >= 0
    eta = np.empty((len(times), g.n_points), dtype=complex)
    col = np.empty(len(times), dtype=complex)
    for i, t in enumerate(times):
        psi_t = evolve_free(psi0, t)
        proj = np.where(plus, psi_t.amplitudes, 0)
        # Heisenberg-picture branch e^{+iH t} P+ psi_t
        eta[i] = evolve_free(replace(psi0, amplitudes=proj), -t).amplitudes
        back = evolve_free(psi0, -(T - t))
        col[i] = model.epsilon * np.vdot(back.amplitudes, proj) * g.dx
    rho = model.epsilon**2 * (eta @ np.conj(eta.T)) * g.dx
    warn = not model.perturbative_ok(T)
    return DecoherenceDensity(times=times, amplitude=None, no_detect_column=col,
                              dNN=1.0, mass=psi0.mass, rho_matrix=rho,
                              singular_diagonal=False,
                              diag_singularity_note="finite diagonal (pointer model)",
                              meta={"model": "two_level_pointer",
                                    "epsilon": model.epsilon, "omega": model.omega,
                                    "perturbative_warning": warn})


# ---------------------------------------------------------------------------
# Zeno non-robustness: 2×2 toy model and smeared projectors


@dataclass(frozen=True)
class ZenoToyModel:
    """Spin Hamiltonian H = ε σ₁ with the regulated projector e^{-V δt},
    V = diag(x, y): the x → ∞ limit of e^{-iHt - Vt} replaces the Zeno
    freeze by an exponential decay e^{-yt}."""

    epsilon_h: float
    x_rate: float = 1e6
    y_rate: float = 0.0

    def __post_init__(self):
        if not (self.x_rate >= self.y_rate >= 0):
            raise ValueError("need x_rate >= y_rate >= 0")

    @property
    def projector(self) -> np.ndarray:
        return np.array([[0.0, 0.0], [0.0, 1.0]], dtype=complex)


def _expm_2x2(A: np.ndarray) -> np.ndarray:
    """Closed-form exponential of a 2×2 matrix (stable for eigenvalues of
    very different magnitude, where scaling-and-squaring underflows)."""
    tr = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = np.sqrt(tr * tr - 4 * det + 0j)
    if np.real(np.conj(tr) * disc) < 0:
        disc = -disc
    lam1 = (tr + disc) / 2            # the larger-|.| root, no cancellation
    lam2 = det / lam1 if lam1 != 0 else (tr - disc) / 2
    if abs(lam1 - lam2) < 1e-14 * max(1.0, abs(lam1)):
        e = np.exp(lam1)
        return e * (np.eye(2, dtype=complex) + (A - lam1 * np.eye(2)))
    I2 = np.eye(2, dtype=complex)

    def safe_exp(z):
        return 0.0 if z.real < -700 else np.exp(z)

    e1, e2 = safe_exp(lam1), safe_exp(lam2)
    return (e1 * (A - lam2 * I2) - e2 * (A - lam1 * I2)) / (lam1 - lam2)


def zeno_robustness_2x2(model: ZenoToyModel, t: float, tol: float = 1e-10) -> np.ndarray:
    """K̂ᵗ_y = lim_{x→∞} e^{-iHt - Vt}, by direct 2×2 exponentials at
    increasing x until entrywise convergence; equals e^{-yt}Ê.

    At t = 0 the product form (Ê e^{-iĤ·0})ⁿ = Ê defines the value (the
    x-regularized exponential alone would give the identity).
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    E = model.projector
    if t == 0.0:
        return E.copy()
    eps = model.epsilon_h
    H = np.array([[0.0, eps], [eps, 0.0]], dtype=complex)
    y = model.y_rate
    x = max(10.0, 10.0 * y + 1.0)
    prev = None
    for _ in range(200):
        V = np.array([[x, 0.0], [0.0, y]], dtype=complex)
        K = _expm_2x2((-1j * H - V) * t)
        if prev is not None and np.max(np.abs(K - prev)) < tol:
            return K
        prev = K
        x *= 4.0
    raise RuntimeError("x-regularized limit did not converge")


def smeared_zeno_defect(psi0: WavePacket, T: float, n: int, width: float) -> float:
    """Survival deficit 1 - ‖(Ŝ e^{-iĤδt})ⁿ ψ₀‖² for a smeared mask Ŝ with
    overlap ~ width; unlike the sharp-projector deficit it does not vanish
    as δt → 0 (the Zeno effect is not robust under approximate projectors)."""
    g = psi0.grid
    from scipy.special import erfc
    mask = 0.5 * erfc(g.x / width)
    dt = T / n
    amp = mask * psi0.amplitudes
    for _ in range(n):
        amp = mask * evolve_free(replace(psi0, amplitudes=amp), dt).amplitudes
    return 1.0 - float(np.sum(np.abs(amp) ** 2) * psi0.grid.dx)
