"""Invariant-measure machinery: covariance kernels and initial-condition samplers.

In the large-N limit the momentum field is spatial white noise with
covariance delta(x-y)/beta and the displacement field is Gaussian with
covariance C(x,y)/beta, where C inverts the massive Laplacian
(-delta^2 d^2/dx^2 + V'') with the system's boundary conditions.  Three
closed forms are provided (massive Dirichlet / massive Neumann with unit
mass, and the zero-mass Dirichlet limit, a scaled Brownian bridge) plus a
numeric inverse for arbitrary nonnegative mass profiles.

Two samplers generate energy-N/beta initial data:

* canonical: independent Gaussian momenta p = sqrt(N/beta) h and a
  Gaussian field built in the minimizer eigenbasis with mode standard
  deviation 1/sqrt(beta lambda_k), rescaled by a scalar amplitude so the
  total energy is N/beta exactly;
* microcanonical (quadratic potentials only): exactly uniform on the
  energy ellipsoid, by normalizing a 2N-dimensional Gaussian onto the
  shell in whitened coordinates.

Mode amplitudes use 1/sqrt(lambda_k): this is the standard deviation that
makes the quadratic Gibbs weight exp(-(beta/2) sum lambda_k b_k^2) hold,
and the sampled field covariance then matches the kernel above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .lattice import (
    LatticeState,
    SystemParams,
    kinetic_energy,
    potential_energy,
    _check_field,
)
from .critical import Spectrum, hessian_diagonals

__all__ = [
    "CovarianceKernel",
    "EnsembleSpec",
    "covariance_closed_form",
    "covariance_numeric",
    "sample_canonical_ic",
    "sample_microcanonical_quadratic",
    "ensemble_checkpoint_rows",
    "empirical_char_functional",
    "limit_char_functional",
    "concentration_bound",
]

_KERNEL_KINDS = ("dirichlet-massive", "neumann-massive", "brownian-bridge")


def covariance_closed_form(kind: str, delta: float, x, y):
    """Closed-form covariance C(x,y) for unit-mass Dirichlet/Neumann fields
    or the zero-mass Dirichlet limit (Brownian bridge, (min(x,y) - xy)/delta^2).

    x and y must lie in [0,1]; inputs broadcast elementwise.
    """
    if kind not in _KERNEL_KINDS:
        raise ValueError(f"unknown kernel kind {kind!r}")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(y < 0) or np.any(y > 1):
        raise ValueError("kernel coordinates must lie in [0, 1]")
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    if kind == "brownian-bridge":
        return (lo - x * y) / delta**2
    sign = -1.0 if kind == "dirichlet-massive" else 1.0
    num = (np.exp(lo / delta) + sign * np.exp(-lo / delta)) * (
        np.exp((1.0 - hi) / delta) + sign * np.exp(-(1.0 - hi) / delta)
    )
    den = 2.0 * delta * (np.exp(1.0 / delta) - np.exp(-1.0 / delta))
    return num / den


@dataclass(frozen=True)
class CovarianceKernel:
    """Covariance C(x,y): a named closed form or a gridded numeric inverse."""

    kind: str
    delta: float
    grid_values: np.ndarray | None = None

    def __call__(self, x, y):
        if self.kind == "numeric":
            raise ValueError("numeric kernels are grid tables; index grid_values")
        return covariance_closed_form(self.kind, self.delta, x, y)


def covariance_numeric(params: SystemParams, mass_profile) -> np.ndarray:
    """Grid covariance N * A^{-1} for A = -delta^2 N^2 Lap + diag(f), f >= 0.

    Entry (j,k) approximates the continuum kernel C(x_j, x_k) to O(1/N).
    A singular operator (e.g. Neumann with f = 0, which has the constant
    null mode) raises.
    """
    f = np.asarray(mass_profile, dtype=float)
    if f.ndim == 0:
        f = np.full(params.N, float(f))
    f = _check_field(params, f)
    if np.any(f < 0):
        raise ValueError("mass profile must be nonnegative")
    c = params.coupling
    diag = 2.0 * c + f
    if not params.bc.is_dirichlet:
        diag = diag.copy()
        diag[0] -= c
        diag[-1] -= c
    A = np.diag(diag) + np.diag(np.full(params.N - 1, -c), 1) + np.diag(
        np.full(params.N - 1, -c), -1
    )
    try:
        factor = cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"operator is singular or indefinite: {exc}") from exc
    inv = cho_solve(factor, np.eye(params.N))
    cov = params.N * inv
    return 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class EnsembleSpec:
    """Reproducible ensemble request: system, draw count, seed and the
    minimizer the fluctuations are centered on."""

    params: SystemParams
    count: int
    seed: int
    center: str = "+"
    energy_target: float | None = None

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("ensemble count must be >= 1")
        if self.center not in ("+", "-"):
            raise ValueError("center must be '+' or '-'")

    @property
    def energy(self) -> float:
        if self.energy_target is not None:
            return self.energy_target
        return self.params.N / self.params.beta


def _center_field(spec: EnsembleSpec) -> np.ndarray:
    params = spec.params
    if params.potential.family == "double-well" and not params.bc.is_dirichlet:
        return np.full(params.N, 1.0 if spec.center == "+" else -1.0)
    if params.potential.family == "quadratic":
        return np.zeros(params.N)
    raise ValueError(
        "canonical sampler needs an explicit center for this potential/bc; "
        "pass the minimizer via sample_canonical_ic(..., center_field=...)"
    )


def _fluctuation_energy_coeffs(params: SystemParams, center: np.ndarray, w: np.ndarray):
    """U_N(center + a*w) as a polynomial in the amplitude a.

    Exact for the double-well (quartic) and quadratic families about a
    critical center; used by the amplitude solver.
    """
    N = params.N
    if params.bc.is_dirichlet:
        wg = np.concatenate(([0.0], w, [0.0]))
    else:
        wg = np.concatenate(([w[0]], w, [w[-1]]))
    bond = 0.5 * N * params.delta**2 * float(np.diff(wg) @ np.diff(wg))
    if params.potential.family == "quadratic":
        a2 = bond + 0.5 * params.potential.alpha * float(w @ w) / N
        return np.array([0.0, 0.0, a2, 0.0, 0.0])
    if params.potential.family == "double-well":
        # V(c + aw) summed, with c = +-1: (a w)^2 terms from V'' = 2 at c,
        # cubic +-a^3 w^3 and quartic a^4 w^4 / 4.
        sgn = float(np.sign(center[0]))
        w2 = float(w @ w) / N
        w3 = sgn * float(np.sum(w**3)) / N
        w4 = float(np.sum(w**4)) / N
        return np.array([0.0, 0.0, bond + w2, w3, 0.25 * w4])
    raise ValueError("amplitude solver supports double-well and quadratic potentials")


def _solve_amplitude(coeffs: np.ndarray, target: float, tol: float = 1e-12) -> float:
    """Bisection for a >= 0 with U(a) = target on the monotone branch.

    Quadratic case (only the a^2 coefficient): exact root.
    """
    if coeffs[3] == 0.0 and coeffs[4] == 0.0:
        return math.sqrt(target / coeffs[2])
    poly = lambda a: coeffs[2] * a * a + coeffs[3] * a**3 + coeffs[4] * a**4
    hi = 1.0
    for _ in range(200):
        if poly(hi) >= target:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if poly(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def sample_canonical_ic(
    spec: EnsembleSpec,
    min_spec: Spectrum,
    center_field: np.ndarray | None = None,
    indices=None,
) -> Iterator[LatticeState]:
    """Stream of canonical-measure initial conditions at exact energy N/beta.

    p = sqrt(N/beta) h with h standard normal; u = center + (a/sqrt(beta))
    * sum_k g_k psi_k / sqrt(lambda_k), with the scalar a > 0 solved so
    that H_N = N/beta exactly.  When the momenta alone exceed the target
    energy, h is redrawn from the same substream; the redraw count is
    attached to each state as ``state.redraws``.

    Draw i depends only on (seed, i): passing ``indices`` regenerates any
    subset of an ensemble, which is how checkpoints are restored.
    """
    params = spec.params
    lam = np.asarray(min_spec.eigenvalues)
    if np.any(lam <= 0):
        raise ValueError("canonical sampler needs a positive minimizer spectrum")
    center = _center_field(spec) if center_field is None else _check_field(params, center_field)
    basis = min_spec.eigenvectors / np.sqrt(lam)  # columns psi_k / sqrt(lambda_k)
    target_total = spec.energy
    root_nb = math.sqrt(params.N / params.beta)
    children = np.random.SeedSequence(spec.seed).spawn(spec.count)
    if indices is None:
        indices = range(spec.count)
    for i in indices:
        rng = np.random.default_rng(children[i])
        redraws = 0
        while True:
            h = rng.standard_normal(params.N)
            p = root_nb * h
            target_u = target_total - kinetic_energy(params, p)
            if target_u > 0:
                break
            redraws += 1
        g = rng.standard_normal(params.N)
        w = basis @ g / math.sqrt(params.beta)
        coeffs = _fluctuation_energy_coeffs(params, center, w)
        a = _solve_amplitude(coeffs, target_u)
        state = LatticeState(center + a * w, p, 0.0)
        state.redraws = redraws
        state.amplitude = a
        state.substream = i
        yield state


def ensemble_checkpoint_rows(spec: EnsembleSpec, states) -> list:
    """Portable checkpoint of a sampled ensemble: (seed, substream, energy)
    per draw.  Together with the EnsembleSpec these rows regenerate the
    states exactly (see sample_canonical_ic(..., indices=...))."""
    params = spec.params
    from .lattice import total_energy

    return [
        (spec.seed, getattr(s, "substream", i), total_energy(params, s))
        for i, s in enumerate(states)
    ]


def sample_microcanonical_quadratic(
    params: SystemParams, energy: float, seed: int, count: int = 1
) -> Iterator[LatticeState]:
    """Uniform draws on the shell H_N = energy for a quadratic potential.

    In coordinates (p/sqrt(N), q) with q the whitened field, the shell is
    the sphere of radius sqrt(2 E); a normalized 2N-dimensional Gaussian
    is exactly uniform on it.
    """
    if params.potential.family != "quadratic":
        raise ValueError("microcanonical shell sampler requires a quadratic potential")
    if not energy > 0:
        raise ValueError("shell energy must be positive")
    from scipy.linalg import eigh_tridiagonal

    diag, off = hessian_diagonals(params, np.zeros(params.N))
    lam, vec = eigh_tridiagonal(diag, off)
    if np.any(lam <= 0):
        raise ValueError("quadratic operator must be positive definite")
    psi = vec * np.sqrt(params.N)
    unwhiten = psi / np.sqrt(lam)  # maps shell coordinates q to the field u
    children = np.random.SeedSequence(seed).spawn(count)
    radius = math.sqrt(2.0 * energy)
    root_n = math.sqrt(params.N)
    for i in range(count):
        rng = np.random.default_rng(children[i])
        z = rng.standard_normal(2 * params.N)
        z *= radius / np.linalg.norm(z)
        p = root_n * z[: params.N]
        u = unwhiten @ z[params.N :]
        yield LatticeState(u, p, 0.0)


def empirical_char_functional(samples, s_grid, t_grid):
    """Monte-Carlo estimate of E exp(i (s.p)/N + i (t.u)/N).

    ``samples`` is an iterable of LatticeState (consumed).  Returns
    (estimate, standard_error) where the error combines the real and
    imaginary component standard errors in quadrature.
    """
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    vals = []
    for state in samples:
        n = state.u.size
        vals.append(np.exp(1j * (s @ state.p + t @ state.u) / n))
    vals = np.asarray(vals)
    if vals.size < 2:
        raise ValueError("need at least two samples")
    m = vals.size
    est = vals.mean()
    se = math.sqrt(vals.real.var(ddof=1) / m + vals.imag.var(ddof=1) / m)
    return est, se


def limit_char_functional(s_grid, t_grid, beta: float, covariance: np.ndarray) -> complex:
    """Closed-form limit exp(-(1/2 beta)[ <s^2> + <t, C t> ]).

    ``covariance`` is the grid kernel from covariance_numeric (or a closed
    form evaluated on the grid); quadratures use the 1/N grid weight.
    """
    s = np.asarray(s_grid, dtype=float)
    t = np.asarray(t_grid, dtype=float)
    n = s.size
    quad_s = float(s @ s) / n
    quad_t = float(t @ covariance @ t) / n**2
    return complex(np.exp(-(quad_s + quad_t) / (2.0 * beta)))


def concentration_bound(beta: float, eigenvalues, epsilon: float, box_constant: float = 1.0) -> float:
    """prod_j (1 - exp(-beta delta_j^2 lambda_j / 2)) with delta_j^2 = C/j^(1+eps).

    Lower-bounds (after a square root of the squared two-dimensional
    comparison) the Gaussian mass of the box with half-widths delta_j.
    Accumulated via log1p for stability over many terms.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    if not 0 < epsilon < 1:
        raise ValueError("need 0 < epsilon < 1")
    j = np.arange(1, lam.size + 1, dtype=float)
    exponent = -0.5 * beta * box_constant / j ** (1.0 + epsilon) * lam
    # exp(exponent) may round to 1 for tiny exponents; those factors vanish.
    log_terms = np.log1p(-np.exp(exponent))
    if np.any(np.isinf(log_terms)):
        return 0.0
    return float(np.exp(np.sum(log_terms)))
