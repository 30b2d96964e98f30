"""Velocity-Verlet time integration of the lattice Hamiltonian system.

One step of size dt maps (u, p) to

    u' = u + dt p + (dt^2/2) F(u)
    p' = p + (dt/2) (F(u) + F(u'))

which is second order, time reversible and symplectic, so the energy
error stays bounded (no secular drift).  ``stable_dt`` recommends a step
from the stiffest mode estimate lambda_max ~ 4 delta^2 N^2 + max V''.

``integrate`` runs a single trajectory and feeds registered observers at
a fixed cadence; observers receive the live state and must not mutate it.
Ensembles use the compiled batch driver in ``_kernels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import LatticeState, SystemParams, force, total_energy

__all__ = [
    "IntegratorConfig",
    "TrajectorySummary",
    "EnsembleResult",
    "verlet_step",
    "integrate",
    "run_ensemble",
    "stable_dt",
    "DEFAULT_SAFETY",
    "STABILITY_SAFETY",
]

# dt^2 * lambda_max for the recommended step.  0.1 would already keep the
# stiffest mode far from the Verlet stability limit (dt^2 lambda = 4), but
# measured endpoint energy errors at equilibrium initial data are then a
# few 1e-4 relative; 0.0025 holds them below 1e-4 with margin.
DEFAULT_SAFETY = 0.0025
STABILITY_SAFETY = 0.1


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float
    horizon: float
    cadence: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.cadence < 1:
            raise ValueError("observer cadence must be >= 1 steps")

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass
class TrajectorySummary:
    final_state: LatticeState
    drift_times: np.ndarray
    drift_energies: np.ndarray
    observer_outputs: dict = field(default_factory=dict)
    aborted: str | None = None


@dataclass
class EnsembleResult:
    """Batch integration output: final phase-space arrays, per-trajectory
    crossing times/counts, and cadence records of (ubar, pbar, H)."""

    u: np.ndarray
    p: np.ndarray
    cross_times: list
    cross_counts: np.ndarray
    record_times: np.ndarray
    ubar: np.ndarray
    pbar: np.ndarray
    energy: np.ndarray
    distance: np.ndarray
    horizon: float


def run_ensemble(
    params: SystemParams,
    states,
    dt: float,
    horizon: float,
    surface=None,
    cadence: int = 0,
    cross_cap: int = 0,
) -> EnsembleResult:
    """Integrate a batch of initial states with the compiled driver.

    ``surface`` (a tst.DividingSurface) switches on per-step crossing
    detection; ``cadence`` > 0 records mean field, mean momentum and
    energy every that many steps.  The effective horizon is
    round(horizon/dt) * dt.
    """
    from . import _kernels

    u = np.ascontiguousarray([s.u for s in states], dtype=float)
    p = np.ascontiguousarray([s.p for s in states], dtype=float)
    nbatch = u.shape[0]
    n_steps = int(round(horizon / dt))
    if cadence > 0 and n_steps % cadence != 0:
        raise ValueError("horizon must span a whole number of record cadences")

    if params.potential.family not in ("double-well", "quadratic"):
        raise ValueError("compiled driver supports double-well and quadratic potentials")
    pot = _kernels.POT_DOUBLE_WELL if params.potential.family == "double-well" else _kernels.POT_QUADRATIC
    bc = _kernels.BC_DIRICHLET if params.bc.is_dirichlet else _kernels.BC_NEUMANN

    if surface is not None:
        phi_over_n = surface.phi1 / params.N
        d_base = float(surface.phi1 @ surface.u_s) / params.N
        track = True
        if cross_cap <= 0:
            cross_cap = 64
    else:
        phi_over_n = np.zeros(params.N)
        d_base = 0.0
        track = False
        cross_cap = 1
    cross_times = np.zeros((nbatch, cross_cap))
    cross_counts = np.zeros(nbatch, dtype=np.int64)

    n_rec = (n_steps // cadence + 1) if cadence > 0 else 0
    rec_ubar = np.zeros((nbatch, n_rec))
    rec_pbar = np.zeros((nbatch, n_rec))
    rec_energy = np.zeros((nbatch, n_rec))
    rec_dist = np.zeros((nbatch, n_rec))

    _kernels.verlet_batch(
        u, p, params.coupling, pot, params.potential.alpha, bc, dt, n_steps,
        phi_over_n, d_base, track, cross_times, cross_counts,
        max(cadence, 1), rec_ubar, rec_pbar, rec_energy, rec_dist,
    )

    times = [cross_times[b, : min(cross_counts[b], cross_cap)].copy() for b in range(nbatch)]
    rec_t = np.arange(n_rec) * (cadence * dt) if cadence > 0 else np.zeros(0)
    return EnsembleResult(
        u, p, times, cross_counts, rec_t, rec_ubar, rec_pbar, rec_energy, rec_dist,
        n_steps * dt,
    )


def stable_dt(params: SystemParams, spectrum_hint=None, safety: float = DEFAULT_SAFETY) -> float:
    """Recommended step with dt^2 * lambda_max <= safety (conservative).

    lambda_max comes from the spectrum hint when given, else from the
    stiff-mode estimate 4 delta^2 N^2 + max V'' over a sampled range.
    """
    if spectrum_hint is not None:
        lam_max = float(np.max(np.asarray(spectrum_hint)))
    else:
        # states live near the wells; sample the physical range |u| <= 1
        u_probe = np.linspace(-1.0, 1.0, 41)
        vmax = float(np.max(params.potential.second_derivative(u_probe)))
        lam_max = 4.0 * params.coupling + max(vmax, 0.0)
    return math.sqrt(safety / lam_max)


def verlet_step(params: SystemParams, state: LatticeState, dt: float, f=None) -> LatticeState:
    """One velocity-Verlet step; pass f = force(params, state.u) to reuse it."""
    if f is None:
        f = force(params, state.u)
    u_new = state.u + dt * state.p + 0.5 * dt * dt * f
    f_new = force(params, u_new)
    p_new = state.p + 0.5 * dt * (f + f_new)
    out = LatticeState(u_new, p_new, state.t + dt)
    out._force = f_new
    return out


def integrate(
    params: SystemParams,
    state: LatticeState,
    config: IntegratorConfig,
    observers: dict | None = None,
) -> TrajectorySummary:
    """Run to the horizon, recording the energy and calling observers
    every ``cadence`` steps (including step 0).

    Observers map name -> callable(state); return values are collected per
    observer.  An observer exception aborts the run and the partial
    summary records the failure.
    """
    observers = observers or {}
    state = state.copy()
    outputs = {name: [] for name in observers}
    times = [state.t]
    energies = [total_energy(params, state)]
    aborted = None

    def notify(s):
        for name, fn in observers.items():
            outputs[name].append(fn(s))

    try:
        notify(state)
    except Exception as exc:
        return TrajectorySummary(
            state, np.array(times), np.array(energies),
            {k: list(v) for k, v in outputs.items()}, f"observer failed at t=0: {exc}",
        )

    f = force(params, state.u)
    for step in range(1, config.n_steps + 1):
        state = verlet_step(params, state, config.dt, f)
        f = state._force
        if step % config.cadence == 0 or step == config.n_steps:
            times.append(state.t)
            energies.append(total_energy(params, state))
            try:
                notify(state)
            except Exception as exc:
                aborted = f"observer failed at t={state.t:.6g}: {exc}"
                break
    return TrajectorySummary(
        state,
        np.array(times),
        np.array(energies),
        {k: list(v) for k, v in outputs.items()},
        aborted,
    )
