"""Critical points of the lattice potential energy and their spectra.

The Hessian of the zero-force condition is the symmetric tridiagonal
operator

    (A w)_j = -delta^2 N^2 (w_{j-1} - 2 w_j + w_{j+1}) + V''(u*_j) w_j

with the same ghost rule as the force.  Its eigenpairs (ascending, with
eigenvectors normalized to (1/N) sum_j psi_j^2 = 1) feed every rate
formula: the Morse index classifies the critical point, and the
square-rooted eigenvalue ratio between saddle and minimizer spectra is
the transition-time prefactor.

For the symmetric double well with Neumann ends the uniform states are
exact: u = +-1 are the minimizers (energy 0) and u = 0 is a stationary
point of energy 1/4 whose index grows by one every time delta drops
through 1/(n pi).  Below 1/pi the index-1 saddle is nonuniform and is
tracked by continuation in delta seeded with the cos(pi x) mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

from .lattice import SystemParams, force, potential_energy, _check_field

__all__ = [
    "CriticalPoint",
    "Spectrum",
    "ConvergenceError",
    "hessian_diagonals",
    "hessian_matrix",
    "hessian_spectrum",
    "newton_critical_point",
    "find_minimizer",
    "find_saddle",
    "prefactor_lambda",
    "barrier",
    "bifurcation_scan",
    "BIFURCATION_DELTA_1",
]

# Neumann double-well: u = 0 stops being the index-1 saddle below 1/pi.
BIFURCATION_DELTA_1 = 1.0 / np.pi


class ConvergenceError(RuntimeError):
    """Newton or eigenvalue iteration failed; carries the iteration count."""

    def __init__(self, message: str, iterations: int = -1):
        super().__init__(message)
        self.iterations = iterations


@dataclass
class CriticalPoint:
    """Stationary field with its potential energy and Morse index."""

    u: np.ndarray
    energy: float
    morse_index: int
    residual_norm: float


@dataclass
class Spectrum:
    """Full eigendecomposition of the tridiagonal Hessian at a field u*.

    ``eigenvalues`` are ascending; column k of ``eigenvectors`` satisfies
    (1/N) sum_j psi_jk^2 = 1.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def morse_index(self) -> int:
        return int(np.sum(self.eigenvalues < 0.0))

    def vector(self, k: int) -> np.ndarray:
        return self.eigenvectors[:, k]


def hessian_diagonals(params: SystemParams, u_star: np.ndarray):
    """(diagonal, off-diagonal) of the Hessian operator at u_star."""
    u_star = _check_field(params, u_star)
    c = params.coupling
    diag = 2.0 * c + params.potential.second_derivative(u_star)
    if not params.bc.is_dirichlet:
        diag = diag.copy()
        diag[0] -= c
        diag[-1] -= c
    off = np.full(params.N - 1, -c)
    return diag, off


def hessian_matrix(params: SystemParams, u_star: np.ndarray) -> np.ndarray:
    """Dense Hessian; used as an oracle against the tridiagonal path."""
    diag, off = hessian_diagonals(params, u_star)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def hessian_spectrum(params: SystemParams, u_star: np.ndarray) -> Spectrum:
    """Diagonalize the tridiagonal Hessian at u_star.

    Raises ConvergenceError if the LAPACK tridiagonal solver fails.
    """
    diag, off = hessian_diagonals(params, u_star)
    try:
        lam, vec = eigh_tridiagonal(diag, off)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise ConvergenceError(f"tridiagonal eigensolver failed: {exc}") from exc
    # unit 2-norm columns -> discrete L2 normalization (1/N) sum psi^2 = 1
    return Spectrum(lam, vec * np.sqrt(params.N))


def _solve_tridiagonal(diag, off, rhs):
    ab = np.zeros((3, diag.size))
    ab[0, 1:] = off
    ab[1] = diag
    ab[2, :-1] = off
    return solve_banded((1, 1), ab, rhs)


def newton_critical_point(
    params: SystemParams,
    seed_field: np.ndarray,
    tol: float = 1e-10,
    max_iter: int = 200,
) -> CriticalPoint:
    """Damped Newton iteration on force(u) = 0 with the tridiagonal Jacobian.

    The Jacobian of the force is -A (A the Hessian operator), so each step
    solves A du = F(u).  Steps are halved until the residual max-norm
    decreases; convergence is ||F||_inf <= tol.
    """
    u = _check_field(params, seed_field).copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("seed field must be finite")
    f = force(params, u)
    res = float(np.max(np.abs(f)))
    for it in range(max_iter):
        if res <= tol:
            break
        diag, off = hessian_diagonals(params, u)
        try:
            du = _solve_tridiagonal(diag, off, f)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Jacobian at iteration {it}", it) from exc
        step = 1.0
        for _ in range(40):
            u_try = u + step * du
            f_try = force(params, u_try)
            res_try = float(np.max(np.abs(f_try)))
            if res_try < res or res_try <= tol:
                break
            step *= 0.5
        u, f, res = u_try, f_try, res_try
    else:
        raise ConvergenceError(
            f"Newton stalled after {max_iter} iterations, ||F||_inf = {res:.3e}",
            max_iter,
        )
    spec = hessian_spectrum(params, u)
    return CriticalPoint(u, potential_energy(params, u), spec.morse_index, res)


def find_minimizer(params: SystemParams, seed_field: np.ndarray, tol: float = 1e-10,
                   max_iter: int = 500) -> CriticalPoint:
    """Damped Newton descent on U_N landing on a local minimizer (index 0).

    The Newton direction is taken only where it decreases the energy;
    in indefinite regions (e.g. between the wells, where V'' < 0 along
    the constant mode) the step falls back to steepest descent, so the
    iteration stays in the seeded basin instead of tunnelling across.
    Converging to a stationary point of nonzero index raises.
    """
    u = _check_field(params, seed_field).copy()
    if not np.all(np.isfinite(u)):
        raise ValueError("seed field must be finite")
    energy = potential_energy(params, u)
    for it in range(max_iter):
        f = force(params, u)
        res = float(np.max(np.abs(f)))
        if res <= tol:
            break
        # grad U_N = -f/N; Newton direction solves A du = f.  If the raw
        # Newton direction is not a descent direction (indefinite Hessian
        # between the wells), re-solve with a Gershgorin diagonal shift
        # (lambda_min >= min V'') so the step cannot tunnel to another basin.
        diag, off = hessian_diagonals(params, u)
        du = None
        try:
            du = _solve_tridiagonal(diag, off, f)
        except np.linalg.LinAlgError:
            pass
        if du is None or float(du @ f) <= 0.0:
            vpp_min = float(np.min(params.potential.second_derivative(u)))
            du = _solve_tridiagonal(diag + (-vpp_min + 0.5), off, f)
        step = 1.0
        accepted = False
        for _ in range(60):
            u_try = u + step * du
            e_try = potential_energy(params, u_try)
            if e_try < energy:
                accepted = True
                break
            # endgame: energy differences below resolution, certify by residual
            if abs(e_try - energy) <= 1e-12 * max(abs(energy), 1.0):
                res_try = float(np.max(np.abs(force(params, u_try))))
                if res_try < res:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            raise ConvergenceError(f"line search failed at iteration {it}", it)
        u, energy = u_try, e_try
    else:
        raise ConvergenceError(
            f"minimizer search stalled after {max_iter} iterations, ||F||_inf = {res:.3e}",
            max_iter,
        )
    spec = hessian_spectrum(params, u)
    point = CriticalPoint(u, potential_energy(params, u), spec.morse_index,
                          float(np.max(np.abs(force(params, u)))))
    if point.morse_index != 0:
        raise ConvergenceError(
            f"converged to a stationary point of Morse index {point.morse_index}, not a minimizer"
        )
    return point


def _continuation_deltas(delta_target: float, step: float, mode: int = 1) -> np.ndarray:
    """Descending delta path from just below the mode-n bifurcation to the target."""
    start = 1.0 / (mode * np.pi) - 2e-3 / mode
    if delta_target >= start:
        return np.array([delta_target])
    n = int(np.ceil((start - delta_target) / step))
    path = start - step * np.arange(n + 1)
    path[-1] = delta_target
    return path


def _branch_amplitude(delta: float, mode: int) -> float:
    """Leading-order amplitude of the cos(n pi x) branch below 1/(n pi)."""
    eps = 1.0 - (delta * mode * np.pi) ** 2
    return np.sqrt(4.0 / 3.0 * max(eps, 0.0))


def find_saddle(
    params: SystemParams,
    tol: float = 1e-10,
    continuation_step: float = 0.01,
    seed_amplitude: float = 0.1,
) -> CriticalPoint:
    """Minimum-energy index-1 saddle of the double-well lattice.

    Neumann ends: for delta > 1/pi this is the uniform zero field (energy
    1/4).  Below the bifurcation the nonuniform branch is tracked by
    continuation in delta, seeded at 1/pi - 1e-3 with the unstable mode
    seed_amplitude * cos(pi x); of the two mirror saddles the one with
    u(0) > 0 is returned (both define the same dividing hyperplane).
    """
    if params.potential.family != "double-well":
        raise ValueError("saddle search is defined for the double-well potential")
    if params.bc.is_dirichlet:
        raise NotImplementedError("saddle continuation is implemented for Neumann ends")

    if params.delta > BIFURCATION_DELTA_1:
        u0 = np.zeros(params.N)
        spec = hessian_spectrum(params, u0)
        point = CriticalPoint(u0, potential_energy(params, u0), spec.morse_index, 0.0)
    else:
        point = _continue_branch(params, params.delta, mode=1, tol=tol,
                                 step=continuation_step, seed_amplitude=seed_amplitude)
        if point.u[0] < 0:
            point = CriticalPoint(-point.u, point.energy, point.morse_index, point.residual_norm)
    if point.morse_index != 1:
        raise ConvergenceError(
            f"saddle candidate has Morse index {point.morse_index}, expected 1"
        )
    return point


def _continue_branch(
    params: SystemParams,
    delta_target: float,
    mode: int,
    tol: float = 1e-10,
    step: float = 0.01,
    seed_amplitude: float = 0.1,
) -> CriticalPoint:
    """Track the cos(n pi x) saddle branch down to delta_target.

    Between continuation steps the field is rescaled by the leading-order
    amplitude ratio, which keeps Newton outside the attraction basin of
    the uniform zero solution right below the pitchfork.
    """
    x = params.grid
    path = _continuation_deltas(delta_target, step, mode)
    amp0 = max(_branch_amplitude(path[0], mode), seed_amplitude)
    u = amp0 * np.cos(mode * np.pi * x)
    point = None
    prev_amp = amp0
    for d in path:
        amp = _branch_amplitude(d, mode)
        if prev_amp > 0 and amp > 0:
            u = u * (amp / prev_amp)
        pd = SystemParams(params.N, d, params.beta, params.bc, params.potential)
        point = newton_critical_point(pd, u, tol=tol)
        if np.max(np.abs(point.u)) < 1e-8:
            raise ConvergenceError(
                f"continuation collapsed onto the uniform zero branch at delta={d:.4f}"
            )
        u = point.u
        prev_amp = max(float(np.max(np.abs(u))), 1e-30)
    return point


def prefactor_lambda(saddle_spec: Spectrum, min_spec: Spectrum, N: int) -> float:
    """Lambda(N) = lambda_1^{min -1/2} * prod_{j>=2} sqrt(lambda_j^s / lambda_j^min).

    The single negative saddle eigenvalue is excluded.  The product is
    accumulated in log space; for N = 1 it is empty.
    """
    lam_s = np.asarray(saddle_spec.eigenvalues)[:N]
    lam_m = np.asarray(min_spec.eigenvalues)[:N]
    if np.sum(lam_s < 0) != 1:
        raise ValueError("saddle spectrum must have exactly one negative eigenvalue")
    if np.any(lam_m <= 0):
        raise ValueError("minimizer spectrum must be positive")
    log_prod = 0.5 * float(np.sum(np.log(lam_s[1:]) - np.log(lam_m[1:])))
    return float(np.exp(log_prod - 0.5 * np.log(lam_m[0])))


def barrier(saddle: CriticalPoint, minimum: CriticalPoint) -> float:
    """Energy barrier E^s - E^min; negative values mean mislabeled inputs."""
    dE = saddle.energy - minimum.energy
    if dE < 0:
        raise ValueError(
            f"negative barrier {dE:.3e}: saddle/minimum inputs are mislabeled"
        )
    return dE


def bifurcation_scan(params: SystemParams, deltas, branches=(1, 2, 3)):
    """Scan delta: index of the uniform zero field and saddle-branch energies.

    Returns a list of row dicts with keys ``delta``, ``energy`` (index-1
    saddle energy), ``index`` (Morse index of u = 0) and ``branch_energies``
    (per requested branch n, the energy of the nonuniform branch born at
    1/(n pi), or the uniform energy 1/4 above its bifurcation).  Solver
    failures are recorded per row as None entries and the scan continues.
    """
    deltas = np.sort(np.asarray(deltas, dtype=float))[::-1]
    zero = np.zeros(params.N)
    e_uniform = None
    # One continuation state per branch, advanced as delta descends.
    branch_u = {}
    rows = []
    for d in deltas:
        pd = SystemParams(params.N, d, params.beta, params.bc, params.potential)
        if e_uniform is None:
            e_uniform = potential_energy(pd, zero)
        lam0 = hessian_spectrum(pd, zero).eigenvalues
        index0 = int(np.sum(lam0 < 0))
        row = {"delta": float(d), "index": index0, "branch_energies": {}}
        for n in branches:
            d_star = 1.0 / (n * np.pi)
            if d >= d_star:
                row["branch_energies"][n] = e_uniform
                continue
            amp = _branch_amplitude(d, n)
            if n not in branch_u:
                seed = max(amp, 0.02) * np.cos(n * np.pi * pd.grid)
            else:
                u_prev, amp_prev = branch_u[n]
                seed = u_prev * (amp / amp_prev) if amp_prev > 0 and amp > 0 else u_prev
            try:
                point = newton_critical_point(pd, seed)
                if np.max(np.abs(point.u)) < 1e-8:
                    raise ConvergenceError("collapsed onto the uniform branch")
                branch_u[n] = (point.u, max(float(np.max(np.abs(point.u))), 1e-30))
                row["branch_energies"][n] = point.energy
            except ConvergenceError:
                row["branch_energies"][n] = None
                branch_u.pop(n, None)
        row["energy"] = row["branch_energies"].get(1, e_uniform)
        if row["energy"] is None:
            row["energy"] = e_uniform
        rows.append(row)
    return rows[::-1]
