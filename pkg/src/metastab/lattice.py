"""Discretized 1D nonlinear wave lattice: potentials, boundary handling, energy, forces.

The continuum field u(x,t) on [0,1] is truncated to N interior points
x_j = j/(N+1), j = 1..N, with ghost values u_0 and u_{N+1} fixed by the
boundary condition.  The discrete energy is

    H_N(p, u) = (1/N) sum_j ( p_j^2/2 + V(u_j) )
              + N sum_{j=0..N} (delta^2/2) (u_{j+1} - u_j)^2

and the equations of motion are

    du_j/dt = p_j
    dp_j/dt = delta^2 N^2 (u_{j-1} - 2 u_j + u_{j+1}) - V'(u_j).

Note the nonstandard weights: on-site terms carry 1/N, bond terms carry N,
so grad U_N = -(1/N) * force.  H_N is conserved by the flow above.

The bond sum runs over the N+1 intervals but keeps the coefficient N^2
(not (N+1)^2); the O(1/N) difference is immaterial in every limit used here.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Potential",
    "BoundaryCondition",
    "SystemParams",
    "LatticeState",
    "DimensionMismatchError",
    "DIRICHLET",
    "NEUMANN",
    "potential_eval",
    "total_energy",
    "kinetic_energy",
    "potential_energy",
    "force",
    "apply_ghosts",
]


class DimensionMismatchError(ValueError):
    """State array length does not match the lattice size."""


@dataclass(frozen=True)
class Potential:
    """On-site potential V(u) with exact first and second derivatives.

    Families:
      * ``double-well``:  V(u) = (1 - u^2)^2 / 4, minima at u = +-1.
      * ``quadratic``:    V(u) = alpha u^2 / 2 with stiffness alpha > 0.
      * ``tabulated``:    user-supplied callables (v, dv, d2v).
    """

    family: str = "double-well"
    alpha: float = 1.0
    v: Callable[[np.ndarray], np.ndarray] | None = None
    dv: Callable[[np.ndarray], np.ndarray] | None = None
    d2v: Callable[[np.ndarray], np.ndarray] | None = None

    def __post_init__(self):
        if self.family not in ("double-well", "quadratic", "tabulated"):
            raise ValueError(f"unknown potential family {self.family!r}")
        if self.family == "quadratic" and not self.alpha > 0:
            raise ValueError("quadratic potential needs stiffness alpha > 0")
        if self.family == "tabulated" and None in (self.v, self.dv, self.d2v):
            raise ValueError("tabulated potential needs v, dv and d2v callables")

    def value(self, u):
        if self.family == "double-well":
            return 0.25 * (1.0 - np.asarray(u) ** 2) ** 2
        if self.family == "quadratic":
            return 0.5 * self.alpha * np.asarray(u) ** 2
        return self.v(u)

    def derivative(self, u):
        if self.family == "double-well":
            u = np.asarray(u)
            return u**3 - u
        if self.family == "quadratic":
            return self.alpha * np.asarray(u)
        return self.dv(u)

    def second_derivative(self, u):
        if self.family == "double-well":
            return 3.0 * np.asarray(u) ** 2 - 1.0
        if self.family == "quadratic":
            return self.alpha * np.ones_like(np.asarray(u, dtype=float))
        return self.d2v(u)


def potential_eval(potential: Potential, u):
    """Return the consistent triple (V(u), V'(u), V''(u))."""
    return (
        potential.value(u),
        potential.derivative(u),
        potential.second_derivative(u),
    )


@dataclass(frozen=True)
class BoundaryCondition:
    """Ghost-value rule: Dirichlet pins u_0 = u_{N+1} = 0, Neumann copies
    the nearest interior value (u_0 = u_1, u_{N+1} = u_N)."""

    kind: str = "neumann"

    def __post_init__(self):
        if self.kind not in ("dirichlet", "neumann"):
            raise ValueError(f"unknown boundary condition {self.kind!r}")

    @property
    def is_dirichlet(self) -> bool:
        return self.kind == "dirichlet"


DIRICHLET = BoundaryCondition("dirichlet")
NEUMANN = BoundaryCondition("neumann")


@dataclass(frozen=True)
class SystemParams:
    """Lattice size N, coupling length delta, inverse temperature beta,
    boundary condition and on-site potential."""

    N: int
    delta: float
    beta: float = 1.0
    bc: BoundaryCondition = NEUMANN
    potential: Potential = field(default_factory=Potential)

    def __post_init__(self):
        if self.N < 2:
            raise ValueError("need N >= 2 lattice points")
        if not self.delta > 0:
            raise ValueError("coupling delta must be positive")
        if not self.beta > 0:
            raise ValueError("inverse temperature beta must be positive")

    @property
    def coupling(self) -> float:
        """Bond stiffness delta^2 N^2 entering the discrete Laplacian."""
        return self.delta**2 * self.N**2

    @property
    def grid(self) -> np.ndarray:
        """Interior grid points x_j = j/(N+1), j = 1..N."""
        return np.arange(1, self.N + 1) / (self.N + 1)


@dataclass
class LatticeState:
    """Phase-space point (u, p) of the truncated system at time t."""

    u: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.p = np.asarray(self.p, dtype=float)
        if self.u.shape != self.p.shape or self.u.ndim != 1:
            raise DimensionMismatchError(
                f"u and p must be 1d arrays of equal length, got {self.u.shape} and {self.p.shape}"
            )

    def copy(self) -> "LatticeState":
        return LatticeState(self.u.copy(), self.p.copy(), self.t)


def _check_field(params: SystemParams, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (params.N,):
        raise DimensionMismatchError(
            f"field has shape {u.shape}, lattice expects ({params.N},)"
        )
    return u


def apply_ghosts(params: SystemParams, u: np.ndarray) -> np.ndarray:
    """Return the length-(N+2) field including ghost values per the bc."""
    u = _check_field(params, u)
    if params.bc.is_dirichlet:
        return np.concatenate(([0.0], u, [0.0]))
    return np.concatenate(([u[0]], u, [u[-1]]))


def kinetic_energy(params: SystemParams, p: np.ndarray) -> float:
    """T_N = (1/2N) sum_j p_j^2."""
    p = _check_field(params, p)
    return 0.5 * float(p @ p) / params.N


def potential_energy(params: SystemParams, u: np.ndarray) -> float:
    """U_N = (1/N) sum_j V(u_j) + (N delta^2 / 2) sum of squared bond jumps."""
    ug = apply_ghosts(params, u)
    du = np.diff(ug)
    onsite = float(np.sum(params.potential.value(ug[1:-1]))) / params.N
    bonds = 0.5 * params.N * params.delta**2 * float(du @ du)
    return onsite + bonds


def total_energy(params: SystemParams, state: LatticeState) -> float:
    """H_N = T_N + U_N; raises on dimension mismatch."""
    return kinetic_energy(params, state.p) + potential_energy(params, state.u)


def force(params: SystemParams, u: np.ndarray) -> np.ndarray:
    """Right-hand side of dp/dt:
    F_j = delta^2 N^2 (u_{j-1} - 2 u_j + u_{j+1}) - V'(u_j)."""
    ug = apply_ghosts(params, u)
    lap = ug[:-2] - 2.0 * ug[1:-1] + ug[2:]
    return params.coupling * lap - params.potential.derivative(ug[1:-1])
