"""Dividing-surface statistics and transition-rate formulas.

The dividing surface is the hyperplane through the index-1 saddle u^s
orthogonal (in the discrete L2 inner product) to its unstable eigenvector
phi1; the signed distance

    d(u) = (1/N) sum_j (u_j - u^s_j) phi1_j

labels the two metastable regions (d > 0 around u^+), and its sign
changes along a trajectory are the surface crossings.  The mean crossing
frequency of an equilibrium ensemble is, in the large-beta quadratic
approximation,

    nu = (1/2pi) [prod_{j>=2} (lam_j^s)^{-1/2} e^{-beta E^s}]
         / sum_{+-} [prod_j (lam_j^+-)^{-1/2} e^{-beta E^+-}]

with mean residency times tau_+- = w_+- / nu, where w_+- are the
partition weights of the two regions.  For a symmetric double well this
reduces to tau = 2 pi Lambda e^{beta dE}, which also equals the
zero-damping limit of the damped-noisy residency time

    tau_gamma = pi (gamma + sqrt(gamma^2 + 4 |lam_1^s|)) / sqrt(|lam_1^s|)
                * Lambda e^{beta dE}.

All eigenvalue products are accumulated in log space so the finite-N
formulas neither overflow nor underflow at large N and beta.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .critical import CriticalPoint, Spectrum, find_saddle, hessian_spectrum
from .lattice import SystemParams

__all__ = [
    "DividingSurface",
    "CrossingRecord",
    "RateEstimate",
    "RateTheory",
    "RateReport",
    "build_surface",
    "surface_distance",
    "count_crossings",
    "empirical_rate",
    "tst_rate_theory",
    "microcanonical_tau",
    "langevin_tau",
    "ergodicity_diagnostics",
    "residency_correlation",
]


@dataclass(frozen=True)
class DividingSurface:
    """Saddle field u^s and unit unstable mode phi1 ((1/N) sum phi^2 = 1),
    oriented so the '+' minimizer has positive distance."""

    u_s: np.ndarray
    phi1: np.ndarray

    @property
    def n(self) -> int:
        return self.u_s.size


def build_surface(params: SystemParams, saddle: CriticalPoint | None = None,
                  saddle_spec: Spectrum | None = None) -> DividingSurface:
    """Assemble the surface from the saddle and its unstable eigenvector."""
    if saddle is None:
        saddle = find_saddle(params)
    if saddle_spec is None:
        saddle_spec = hessian_spectrum(params, saddle.u)
    if saddle_spec.morse_index != 1:
        raise ValueError("dividing surface needs an index-1 saddle spectrum")
    phi1 = saddle_spec.vector(0).copy()
    # orient toward u^+ = +1 side: d(+1) > 0
    if float(np.sum((1.0 - saddle.u) * phi1)) < 0:
        phi1 = -phi1
    return DividingSurface(saddle.u.copy(), phi1)


def surface_distance(surface: DividingSurface, u: np.ndarray) -> float:
    """Signed distance d(u); positive in the region containing u^+."""
    u = np.asarray(u, dtype=float)
    if u.shape != surface.u_s.shape:
        raise ValueError(f"field shape {u.shape} does not match surface {surface.u_s.shape}")
    return float((u - surface.u_s) @ surface.phi1) / surface.n


@dataclass
class CrossingRecord:
    """Interpolated crossing times of one trajectory over [0, horizon].

    ``total_count`` may exceed len(times) when a bounded recording buffer
    overflowed; rate estimates use the count, interval statistics the
    stored times.
    """

    times: np.ndarray
    horizon: float
    trajectory_id: int = 0
    total_count: int | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if self.times.size and (
            np.any(np.diff(self.times) <= 0)
            or self.times[0] < 0
            or self.times[-1] > self.horizon + 1e-12
        ):
            raise ValueError("crossing times must be strictly increasing within [0, horizon]")
        if self.total_count is None:
            self.total_count = self.times.size

    @property
    def count(self) -> int:
        return self.total_count


def count_crossings(times, distances, trajectory_id: int = 0) -> CrossingRecord:
    """Crossings of a sampled distance series (t_i, d_i).

    A crossing is a sign change between consecutive samples, located by
    linear interpolation.  A sample that is exactly zero inherits the
    sign of the next nonzero sample (trailing zeros inherit the previous
    sign), so touching the surface counts at most once.
    """
    t = np.asarray(times, dtype=float)
    d = np.asarray(distances, dtype=float)
    if t.size == 0:
        raise ValueError("empty distance series")
    if t.shape != d.shape:
        raise ValueError("times and distances must have equal length")
    s = np.sign(d)
    nz = np.flatnonzero(s)
    if nz.size == 0:
        return CrossingRecord(np.zeros(0), float(t[-1] - t[0]), trajectory_id)
    # attribute zero samples to the next nonzero sign, trailing to the last
    idx = np.searchsorted(nz, np.arange(s.size), side="left")
    idx = np.minimum(idx, nz.size - 1)
    s_filled = s[nz[idx]]
    flips = np.flatnonzero(s_filled[:-1] != s_filled[1:])
    cross_t = np.empty(flips.size)
    for k, i in enumerate(flips):
        d0, d1 = d[i], d[i + 1]
        if d0 == d1 or d0 == 0.0:
            cross_t[k] = t[i]
        else:
            cross_t[k] = t[i] + (t[i + 1] - t[i]) * d0 / (d0 - d1)
    return CrossingRecord(cross_t, float(t[-1] - t[0]), trajectory_id)


@dataclass
class RateEstimate:
    """Empirical crossing frequency and residency time with standard errors."""

    nu: float
    tau: float
    nu_stderr: float
    tau_stderr: float
    total_crossings: int
    n_records: int
    lower_bound_only: bool = False


def empirical_rate(records, horizon: float | None = None) -> RateEstimate:
    """nu = mean(N_T) / (2T) over the ensemble; tau = 1/(2 nu) for the
    symmetric partition.

    All records must share the horizon.  If no record crosses at all, tau
    is only lower-bounded by the simulated time and the estimate is
    flagged.
    """
    records = list(records)
    if not records:
        raise ValueError("need at least one crossing record")
    T = horizon if horizon is not None else records[0].horizon
    for r in records:
        if abs(r.horizon - T) > 1e-9 * max(1.0, T):
            raise ValueError("records have mismatched horizons")
    counts = np.array([r.count for r in records], dtype=float)
    m = counts.size
    total = int(counts.sum())
    nu = counts.mean() / (2.0 * T)
    if total == 0:
        return RateEstimate(0.0, math.inf, 0.0, math.inf, 0, m, lower_bound_only=True)
    nu_se = counts.std(ddof=1) / (2.0 * T * math.sqrt(m)) if m > 1 else nu / math.sqrt(total)
    tau = 1.0 / (2.0 * nu)
    tau_se = tau * nu_se / nu
    return RateEstimate(nu, tau, nu_se, tau_se, total, m)


def _log_half_sum(eigenvalues, skip_first: bool) -> float:
    lam = np.asarray(eigenvalues, dtype=float)
    start = 1 if skip_first else 0
    return 0.5 * float(np.sum(np.log(lam[start:])))


def _exp_clipped(x: float) -> float:
    """exp that saturates to inf instead of raising once the residency
    time leaves the representable range (beta dE beyond ~700)."""
    return math.inf if x > 709.0 else math.exp(x)


@dataclass
class RateTheory:
    """Quadratic-approximation rate formulas evaluated at finite N."""

    nu: float
    tau: tuple
    tau_limit: tuple
    weights: tuple
    barriers: tuple
    prefactors: tuple


def tst_rate_theory(saddle: CriticalPoint, saddle_spec: Spectrum, minima, beta: float) -> RateTheory:
    """Evaluate the mean crossing frequency and residency times.

    ``minima`` is a sequence of (CriticalPoint, Spectrum) pairs, one per
    metastable region (two for a double well; passing the same pair twice
    expresses the symmetric case).  Region weights come from the
    quadratic-approximation partition integrals, not from sampling.
    """
    lam_s = np.asarray(saddle_spec.eigenvalues)
    if np.sum(lam_s < 0) != 1:
        raise ValueError("saddle spectrum must have exactly one negative eigenvalue")
    log_num = -_log_half_sum(lam_s, skip_first=True) - beta * saddle.energy
    log_dens = []
    for point, spec in minima:
        lam = np.asarray(spec.eigenvalues)
        if np.any(lam <= 0):
            raise ValueError("minimizer spectra must be positive")
        log_dens.append(-_log_half_sum(lam, skip_first=False) - beta * point.energy)
    log_den_total = float(logsumexp(log_dens))

    nu = _exp_clipped(log_num - log_den_total) / (2.0 * math.pi)
    weights = tuple(math.exp(ld - log_den_total) for ld in log_dens)
    taus = []
    tau_limits = []
    barriers = []
    prefactors = []
    for (point, spec), ld in zip(minima, log_dens):
        dE = saddle.energy - point.energy
        barriers.append(dE)
        # log of Lambda(N): the finite-N residency time is 2 pi Lambda e^{beta dE}
        log_lambda = (
            _log_half_sum(saddle_spec.eigenvalues, skip_first=True)
            - _log_half_sum(spec.eigenvalues, skip_first=False)
        )
        lam_factor = math.exp(log_lambda)
        prefactors.append(lam_factor)
        taus.append(2.0 * math.pi * _exp_clipped(log_lambda + beta * dE))
        tau_limits.append(2.0 * math.pi * lam_factor * _exp_clipped(beta * dE))
    return RateTheory(nu, tuple(taus), tuple(tau_limits), weights, tuple(barriers), tuple(prefactors))


def microcanonical_tau(saddle: CriticalPoint, saddle_spec: Spectrum, minima, beta: float, N: int):
    """Residency times for the shell ensemble at energy N/beta:
    tau = 2 pi (spectral ratio) (1 - beta E^min/N)^{N-1} / (1 - beta E^s/N)^{N-1}.

    Requires the shell to sit above the saddle (beta E^s / N < 1).
    """
    shell_s = 1.0 - beta * saddle.energy / N
    if shell_s <= 0:
        raise ValueError(f"energy shell N/beta is below the saddle energy (beta E^s/N = {beta * saddle.energy / N:.3g})")
    taus = []
    for point, spec in minima:
        shell_m = 1.0 - beta * point.energy / N
        if shell_m <= 0:
            raise ValueError("energy shell is below a minimizer energy")
        log_lambda = (
            _log_half_sum(saddle_spec.eigenvalues, skip_first=True)
            - _log_half_sum(spec.eigenvalues, skip_first=False)
        )
        log_shell = (N - 1) * (math.log(shell_m) - math.log(shell_s))
        taus.append(2.0 * math.pi * math.exp(log_lambda + log_shell))
    return tuple(taus)


def langevin_tau(gamma: float, lambda1_s: float, prefactor: float, barrier: float, beta: float) -> float:
    """Damped-noisy residency time
    tau = pi (gamma + sqrt(gamma^2 + 4|lam_1^s|)) / sqrt(|lam_1^s|) * Lambda e^{beta dE};
    at gamma = 0 this is exactly the conservative limit 2 pi Lambda e^{beta dE}.
    """
    if gamma < 0:
        raise ValueError("damping gamma must be nonnegative")
    if lambda1_s >= 0:
        raise ValueError("lambda_1^s must be negative (unstable saddle mode)")
    a = abs(lambda1_s)
    surd = math.sqrt(gamma * gamma + 4.0 * a)
    return math.pi * ((gamma + surd) / math.sqrt(a)) * prefactor * _exp_clipped(beta * barrier)


@dataclass
class ErgodicityReport:
    """Time-average diagnostics of the reduced (mean-field) variables."""

    times: np.ndarray
    pbar_sq_running: np.ndarray
    pbar_sq_target: float
    reduced_energy: np.ndarray
    reduced_energy_mean: float
    reduced_energy_std: float
    reduced_energy_drift: float
    ubar: np.ndarray
    pbar: np.ndarray


def ergodicity_diagnostics(times, ubar, pbar, params: SystemParams) -> ErgodicityReport:
    """Running time-average of pbar^2 (target 1/beta) and the reduced
    Hamiltonian Hbar = pbar^2/2 + V(ubar) along a trajectory dump."""
    t = np.asarray(times, dtype=float)
    ub = np.asarray(ubar, dtype=float)
    pb = np.asarray(pbar, dtype=float)
    if not (t.size == ub.size == pb.size) or t.size < 2:
        raise ValueError("dump needs matching t, ubar, pbar columns with >= 2 rows")
    p2 = pb * pb
    # trapezoid running average of pbar^2 over [t0, t_k]
    seg = 0.5 * (p2[1:] + p2[:-1]) * np.diff(t)
    running = np.concatenate(([p2[0]], np.cumsum(seg) / (t[1:] - t[0])))
    hbar = 0.5 * p2 + params.potential.value(ub)
    return ErgodicityReport(
        times=t,
        pbar_sq_running=running,
        pbar_sq_target=1.0 / params.beta,
        reduced_energy=hbar,
        reduced_energy_mean=float(hbar.mean()),
        reduced_energy_std=float(hbar.std()),
        reduced_energy_drift=float(hbar[-1] - hbar[0]),
        ubar=ub,
        pbar=pb,
    )


def residency_correlation(record: CrossingRecord):
    """Lag-1 Pearson correlation of successive inter-crossing intervals.

    Returns (correlation, band) with band the 95% null band 1.96/sqrt(m)
    for m interval pairs, or (None, None) when fewer than 10 crossings
    make the estimate meaningless.
    """
    if record.count < 10:
        return None, None
    intervals = np.diff(record.times)
    x, y = intervals[:-1], intervals[1:]
    sx, sy = x.std(), y.std()
    if sx == 0.0 or sy == 0.0:
        return 0.0, 1.96 / math.sqrt(x.size)
    corr = float(np.mean((x - x.mean()) * (y - y.mean())) / (sx * sy))
    return corr, 1.96 / math.sqrt(x.size)


@dataclass
class RateReport:
    """Everything measured and predicted for one parameter set."""

    N: int
    delta: float
    beta: float
    nu_empirical: float
    tau_empirical: float
    tau_empirical_stderr: float
    nu_theory: float
    tau_theory_finiteN: float
    tau_theory_limit: float
    tau_theory_microcanonical: float
    barrier: float
    prefactor: float
    prefactor_limit: float
    langevin_gammas: list = field(default_factory=list)
    langevin_taus: list = field(default_factory=list)
    total_crossings: int = 0
    ensemble: int = 0
    horizon: float = 0.0

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "delta": self.delta,
            "beta": self.beta,
            "nu_empirical": self.nu_empirical,
            "tau_empirical": self.tau_empirical,
            "tau_empirical_stderr": self.tau_empirical_stderr,
            "nu_theory_canonical": self.nu_theory,
            "tau_theory_finiteN": self.tau_theory_finiteN,
            "tau_theory_limit": self.tau_theory_limit,
            "tau_theory_microcanonical": self.tau_theory_microcanonical,
            "delta_E": self.barrier,
            "Lambda": self.prefactor,
            "Lambda_limit": self.prefactor_limit,
            "langevin_gammas": list(self.langevin_gammas),
            "langevin_taus": list(self.langevin_taus),
            "total_crossings": self.total_crossings,
            "ensemble": self.ensemble,
            "horizon": self.horizon,
        }
