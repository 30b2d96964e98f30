"""Desk-scale study of metastability in the discretized 1D nonlinear wave
equation: symplectic dynamics, invariant-measure sampling, and
transition-state-theory rate formulas with their empirical validation."""

__version__ = "0.1.0"

from .lattice import (
    BoundaryCondition,
    DIRICHLET,
    NEUMANN,
    LatticeState,
    Potential,
    SystemParams,
    force,
    kinetic_energy,
    potential_energy,
    potential_eval,
    total_energy,
)
from .critical import (
    CriticalPoint,
    Spectrum,
    barrier,
    bifurcation_scan,
    find_minimizer,
    find_saddle,
    hessian_spectrum,
    prefactor_lambda,
)
from .dynamics import (
    IntegratorConfig,
    TrajectorySummary,
    integrate,
    run_ensemble,
    stable_dt,
    verlet_step,
)
from .measures import (
    CovarianceKernel,
    EnsembleSpec,
    concentration_bound,
    covariance_closed_form,
    covariance_numeric,
    empirical_char_functional,
    limit_char_functional,
    sample_canonical_ic,
    sample_microcanonical_quadratic,
)
from .tst import (
    CrossingRecord,
    DividingSurface,
    RateReport,
    build_surface,
    count_crossings,
    empirical_rate,
    ergodicity_diagnostics,
    langevin_tau,
    microcanonical_tau,
    residency_correlation,
    surface_distance,
    tst_rate_theory,
)
