"""Named experiments: configuration, execution and artifact writing.

Each experiment takes a validated JSON config, runs at desk scale by
default, and writes CSV/JSON artifacts plus a ``manifest.json`` listing
every produced file with a content checksum.  Identical configs and seeds
produce byte-identical data files; floats are written with 17 significant
digits so values round-trip exactly.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import jsonschema

from . import __version__
from .critical import (
    ConvergenceError,
    bifurcation_scan,
    find_minimizer,
    find_saddle,
    hessian_spectrum,
    prefactor_lambda,
)
from .dynamics import run_ensemble, stable_dt
from .lattice import (
    BoundaryCondition,
    LatticeState,
    Potential,
    SystemParams,
)
from .measures import (
    EnsembleSpec,
    concentration_bound,
    covariance_numeric,
    empirical_char_functional,
    ensemble_checkpoint_rows,
    limit_char_functional,
    sample_canonical_ic,
    sample_microcanonical_quadratic,
)
from . import tst

__all__ = [
    "ConfigError",
    "NumericalFailure",
    "EXPERIMENTS",
    "validate_config",
    "run_experiment",
]


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


class NumericalFailure(RuntimeError):
    """A solver failure that aborts the whole experiment."""


_SYSTEM_SCHEMA = {
    "type": "object",
    "properties": {
        "N": {"type": "integer", "minimum": 2},
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "beta": {"type": "number", "exclusiveMinimum": 0},
        "bc": {"enum": ["neumann", "dirichlet"]},
        "potential": {
            "type": "object",
            "properties": {
                "family": {"enum": ["double-well", "quadratic"]},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

_SCHEMA = {
    "type": "object",
    "properties": {
        "experiment": {
            "enum": [
                "transition-sweep",
                "prefactor-curve",
                "bifurcation",
                "ergodicity",
                "measure-check",
                "single-trajectory",
            ]
        },
        "system": _SYSTEM_SCHEMA,
        "seed": {"type": "integer", "minimum": 0},
        "out": {"type": "string"},
        "workers": {"type": "integer", "minimum": 1},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "dt_safety": {"type": "number", "exclusiveMinimum": 0},
        "beta_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "delta_grid": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
        "ensemble": {"type": "integer", "minimum": 1},
        "horizon": {"type": "number", "exclusiveMinimum": 0},
        "horizon_mult": {"type": "number", "exclusiveMinimum": 0},
        "cadence": {"type": "integer", "minimum": 1},
        "record_dt": {"type": "number", "exclusiveMinimum": 0},
        "seeds": {"type": "integer", "minimum": 1},
        "samples": {"type": "integer", "minimum": 1},
        "reference_N": {"type": "integer", "minimum": 2},
        "langevin_gammas": {"type": "array", "items": {"type": "number", "minimum": 0}},
        "compare_ensemble": {"type": "integer", "minimum": 0},
        "horizon_ensemble": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["experiment"],
    "additionalProperties": False,
}

_DEFAULTS = {
    "transition-sweep": {
        "system": {"N": 128, "delta": 1.0, "bc": "neumann", "potential": {"family": "double-well"}},
        "beta_grid": [10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
        "ensemble": 200,
        "horizon_mult": 1.5,
        "reference_N": 1024,
        "langevin_gammas": [0.0, 0.1, 1.0],
        "seed": 0,
        "workers": 1,
    },
    "single-trajectory": {
        "system": {"N": 128, "delta": 0.2, "beta": 21.437, "bc": "neumann", "potential": {"family": "double-well"}},
        "horizon_mult": 50.0,
        "compare_ensemble": 0,
        "reference_N": 1024,
        "record_dt": 0.5,
        "seed": 0,
        "workers": 1,
    },
    "prefactor-curve": {
        "system": {"N": 1024, "delta": 1.0, "bc": "neumann", "potential": {"family": "double-well"}},
        "delta_grid": list(np.round(np.arange(0.34, 1.21, 0.02), 10)),
        "seed": 0,
        "workers": 1,
    },
    "bifurcation": {
        "system": {"N": 256, "delta": 0.5, "bc": "neumann", "potential": {"family": "double-well"}},
        "delta_grid": list(np.round(np.arange(0.085, 0.4301, 0.005), 10)),
        "seed": 0,
        "workers": 1,
    },
    "ergodicity": {
        "system": {"N": 1024, "delta": 0.05, "beta": 12.0, "bc": "neumann", "potential": {"family": "double-well"}},
        "horizon": 600.0,
        "seeds": 9,
        "record_dt": 0.25,
        "seed": 0,
        "workers": 1,
    },
    "measure-check": {
        "system": {"N": 512, "delta": 1.0, "beta": 4.0, "bc": "neumann", "potential": {"family": "quadratic", "alpha": 1.0}},
        "samples": 10000,
        "seed": 0,
        "workers": 1,
    },
}


def _merge(defaults, override):
    out = dict(defaults)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def validate_config(raw: dict) -> dict:
    """Schema-check the config and fill in experiment defaults."""
    try:
        jsonschema.validate(raw, _SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"config rejected: {exc.message}") from exc
    name = raw["experiment"]
    cfg = _merge(_DEFAULTS[name], raw)
    sysblock = dict(cfg["system"])
    sysblock["potential"] = dict(sysblock.get("potential", {"family": "double-well"}))
    cfg["system"] = sysblock
    if name in ("ergodicity", "measure-check", "single-trajectory"):
        if "beta" not in sysblock:
            raise ConfigError(f"{name} needs system.beta")
        raw_sys = raw.get("system", {})
        if "delta" in raw_sys and "beta" not in raw_sys:
            raise ConfigError(
                f"{name}: overriding system.delta requires an explicit system.beta "
                "(the default beta is calibrated to the default delta)"
            )
    if name == "measure-check" and sysblock["potential"]["family"] != "quadratic":
        raise ConfigError("measure-check requires a quadratic potential")
    return cfg


def _system(cfg: dict, beta: float | None = None) -> SystemParams:
    s = cfg["system"]
    pot = s.get("potential", {})
    potential = Potential(pot.get("family", "double-well"), alpha=pot.get("alpha", 1.0))
    return SystemParams(
        N=s["N"],
        delta=s["delta"],
        beta=beta if beta is not None else s.get("beta", 1.0),
        bc=BoundaryCondition(s.get("bc", "neumann")),
        potential=potential,
    )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


class ArtifactWriter:
    """Serializes all file output and collects the manifest."""

    def __init__(self, out_dir: Path):
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.files = []

    def _register(self, path: Path):
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.files.append({"name": path.name, "sha256": digest})

    def csv(self, name: str, header, rows):
        path = self.out_dir / name
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join("" if v is None else _fmt(v) for v in row) + "\n")
        self._register(path)
        return path

    def json(self, name: str, payload: dict):
        path = self.out_dir / name
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        self._register(path)
        return path

    def manifest(self, cfg: dict, wall_time: float, task_seeds, failures):
        path = self.out_dir / "manifest.json"
        payload = {
            "config": cfg,
            "code_version": __version__,
            "wall_time_s": wall_time,
            "task_seeds": list(map(int, task_seeds)),
            "files": self.files,
            "failures": failures,
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return path


def _chunks(seq, k):
    n = len(seq)
    size = (n + k - 1) // k
    return [seq[i : i + size] for i in range(0, n, size)]


def _run_batches(params, states, dt, horizon, surface, cadence, cross_cap, workers):
    """Integrate an ensemble in worker chunks; the merged result does not
    depend on the worker count (chunks are concatenated in task order)."""
    if workers <= 1 or len(states) <= 1:
        return run_ensemble(params, states, dt, horizon, surface, cadence, cross_cap)
    parts = _chunks(states, workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(
            pool.map(
                lambda chunk: run_ensemble(params, chunk, dt, horizon, surface, cadence, cross_cap),
                parts,
            )
        )
    first = results[0]
    merged_times = []
    for r in results:
        merged_times.extend(r.cross_times)
    from .dynamics import EnsembleResult

    return EnsembleResult(
        np.concatenate([r.u for r in results]),
        np.concatenate([r.p for r in results]),
        merged_times,
        np.concatenate([r.cross_counts for r in results]),
        first.record_times,
        np.concatenate([r.ubar for r in results]) if first.ubar.size else first.ubar,
        np.concatenate([r.pbar for r in results]) if first.pbar.size else first.pbar,
        np.concatenate([r.energy for r in results]) if first.energy.size else first.energy,
        np.concatenate([r.distance for r in results]) if first.distance.size else first.distance,
        first.horizon,
    )


def _rate_infrastructure(params: SystemParams, reference_N: int):
    """Saddle, minima, spectra, surface, and the large-N prefactor."""
    saddle = find_saddle(params)
    saddle_spec = hessian_spectrum(params, saddle.u)
    plus = find_minimizer(params, np.full(params.N, 0.5))
    minus = find_minimizer(params, np.full(params.N, -0.5))
    plus_spec = hessian_spectrum(params, plus.u)
    minus_spec = hessian_spectrum(params, minus.u)
    surface = tst.build_surface(params, saddle, saddle_spec)

    if reference_N != params.N:
        pref_params = SystemParams(reference_N, params.delta, params.beta, params.bc, params.potential)
        ref_saddle = find_saddle(pref_params)
        ref_plus = find_minimizer(pref_params, np.full(reference_N, 0.5))
        lambda_limit = prefactor_lambda(
            hessian_spectrum(pref_params, ref_saddle.u),
            hessian_spectrum(pref_params, ref_plus.u),
            reference_N,
        )
    else:
        lambda_limit = prefactor_lambda(saddle_spec, plus_spec, params.N)
    return saddle, saddle_spec, (plus, plus_spec), (minus, minus_spec), surface, lambda_limit


def _rate_report(params, beta, saddle, saddle_spec, plus_pair, minus_pair,
                 lambda_limit, estimate, gammas, ensemble, horizon):
    theory = tst.tst_rate_theory(saddle, saddle_spec, [plus_pair, minus_pair], beta)
    tau_micro = tst.microcanonical_tau(saddle, saddle_spec, [plus_pair], beta, params.N)[0]
    dE = theory.barriers[0]
    lam1 = float(saddle_spec.eigenvalues[0])
    tau_limit = 2.0 * math.pi * lambda_limit * math.exp(beta * dE)
    return tst.RateReport(
        N=params.N,
        delta=params.delta,
        beta=beta,
        nu_empirical=estimate.nu,
        tau_empirical=estimate.tau,
        tau_empirical_stderr=estimate.tau_stderr,
        nu_theory=theory.nu,
        tau_theory_finiteN=theory.tau[0],
        tau_theory_limit=tau_limit,
        tau_theory_microcanonical=tau_micro,
        barrier=dE,
        prefactor=theory.prefactors[0],
        prefactor_limit=lambda_limit,
        langevin_gammas=list(gammas),
        langevin_taus=[tst.langevin_tau(g, lam1, lambda_limit, dE, beta) for g in gammas],
        total_crossings=estimate.total_crossings,
        ensemble=ensemble,
        horizon=horizon,
    )


def run_transition_sweep(cfg: dict, writer: ArtifactWriter):
    params0 = _system(cfg)
    betas = cfg["beta_grid"]
    saddle, saddle_spec, plus_pair, minus_pair, surface, lambda_limit = _rate_infrastructure(
        params0, cfg["reference_N"]
    )
    failures = []
    rows = []
    task_seeds = []
    base_seed = np.random.SeedSequence(cfg["seed"])
    per_beta_seeds = [int(s.generate_state(1)[0]) for s in base_seed.spawn(len(betas))]
    for beta, bseed in zip(betas, per_beta_seeds):
        task_seeds.append(bseed)
        try:
            params = _system(cfg, beta=beta)
            dt = cfg.get("dt") or stable_dt(params, safety=cfg.get("dt_safety", 0.0025))
            theory = tst.tst_rate_theory(saddle, saddle_spec, [plus_pair, minus_pair], beta)
            horizon = cfg.get("horizon") or cfg["horizon_mult"] * theory.tau[0]
            spec = EnsembleSpec(params, count=cfg["ensemble"], seed=bseed)
            states = list(sample_canonical_ic(spec, plus_pair[1], center_field=plus_pair[0].u))
            writer.csv(
                f"ensemble_checkpoint_beta{beta:g}.csv",
                ["seed", "substream", "energy"],
                ensemble_checkpoint_rows(spec, states),
            )
            expected = max(int(3.0 * horizon / theory.tau[0]) + 16, 32)
            result = _run_batches(params, states, dt, horizon, surface, 0, expected, cfg["workers"])
            records = [
                tst.CrossingRecord(t, result.horizon, i, total_count=int(c))
                for i, (t, c) in enumerate(zip(result.cross_times, result.cross_counts))
            ]
            estimate = tst.empirical_rate(records)
            report = _rate_report(
                params, beta, saddle, saddle_spec, plus_pair, minus_pair, lambda_limit,
                estimate, cfg["langevin_gammas"], cfg["ensemble"], result.horizon,
            )
            writer.json(f"rate_report_beta{beta:g}.json", report.to_dict())
            rows.append(
                (beta, estimate.tau, estimate.tau_stderr, report.tau_theory_finiteN,
                 report.tau_theory_limit, report.tau_theory_microcanonical)
            )
        except (ConvergenceError, ValueError, OverflowError) as exc:
            failures.append({"beta": beta, "error": str(exc)})
    writer.csv(
        "sweep.csv",
        ["beta", "tau_emp", "tau_emp_stderr", "tau_theory_finiteN", "tau_theory_limit", "tau_micro"],
        rows,
    )
    return task_seeds, failures


def run_single_trajectory(cfg: dict, writer: ArtifactWriter):
    params = _system(cfg)
    beta = params.beta
    saddle, saddle_spec, plus_pair, minus_pair, surface, lambda_limit = _rate_infrastructure(
        params, cfg["reference_N"]
    )
    theory = tst.tst_rate_theory(saddle, saddle_spec, [plus_pair, minus_pair], beta)
    dt = cfg.get("dt") or stable_dt(params, safety=cfg.get("dt_safety", 0.0025))
    horizon = cfg.get("horizon") or cfg["horizon_mult"] * theory.tau[0]
    cadence = max(int(round(cfg["record_dt"] / dt)), 1)
    n_steps = int(round(horizon / dt))
    n_steps -= n_steps % cadence
    horizon = n_steps * dt

    seed = int(np.random.SeedSequence(cfg["seed"]).generate_state(1)[0])
    spec = EnsembleSpec(params, count=1, seed=seed)
    state = next(sample_canonical_ic(spec, plus_pair[1], center_field=plus_pair[0].u))
    u_init = state.u.copy()
    expected = max(int(5.0 * horizon / theory.tau[0]) + 64, 64)

    # run in two legs so a mid-trajectory field snapshot is available;
    # crossing bookkeeping is continuous across the split
    legs = 2
    leg_steps = (n_steps // legs // cadence) * cadence
    snapshots = [("u_initial", u_init)]
    all_times = []
    total_crossings = 0
    rec_parts = []
    current = state
    elapsed = 0.0
    for leg in range(legs):
        steps = leg_steps if leg < legs - 1 else n_steps - leg_steps * (legs - 1)
        part = run_ensemble(params, [current], dt, steps * dt, surface, cadence, expected)
        all_times.append(part.cross_times[0] + elapsed)
        total_crossings += int(part.cross_counts[0])
        rec_parts.append((part.record_times + elapsed, part.ubar[0], part.pbar[0],
                          part.energy[0], part.distance[0]))
        elapsed += part.horizon
        current = LatticeState(part.u[0], part.p[0], elapsed)
        if leg < legs - 1:
            snapshots.append((f"u_t{elapsed:g}", part.u[0].copy()))
    snapshots.append(("u_final", current.u.copy()))
    horizon = elapsed
    record = tst.CrossingRecord(np.concatenate(all_times), horizon, 0, total_count=total_crossings)
    estimate = tst.empirical_rate([record])
    report = _rate_report(
        params, beta, saddle, saddle_spec, plus_pair, minus_pair, lambda_limit,
        estimate, cfg.get("langevin_gammas", [0.0]), 1, horizon,
    )
    payload = report.to_dict()

    task_seeds = [seed]
    failures = []
    if cfg["compare_ensemble"] > 0:
        eseed = int(np.random.SeedSequence(cfg["seed"] + 1).generate_state(1)[0])
        task_seeds.append(eseed)
        espec = EnsembleSpec(params, count=cfg["compare_ensemble"], seed=eseed)
        estates = list(sample_canonical_ic(espec, plus_pair[1], center_field=plus_pair[0].u))
        ehorizon = cfg.get("horizon_ensemble") or 2.0 * theory.tau[0]
        eresult = _run_batches(params, estates, dt, ehorizon, surface, 0,
                               max(int(5.0 * ehorizon / theory.tau[0]) + 16, 32), cfg["workers"])
        erecords = [
            tst.CrossingRecord(t, eresult.horizon, i, total_count=int(c))
            for i, (t, c) in enumerate(zip(eresult.cross_times, eresult.cross_counts))
        ]
        eest = tst.empirical_rate(erecords)
        payload["ensemble_tau"] = eest.tau
        payload["ensemble_tau_stderr"] = eest.tau_stderr
        payload["ensemble_size"] = cfg["compare_ensemble"]

    corr, band = tst.residency_correlation(record)
    payload["residency_lag1_correlation"] = corr
    payload["residency_lag1_band"] = band
    writer.json("rate_report.json", payload)

    rec_t = np.concatenate([rp[0] if i == 0 else rp[0][1:] for i, rp in enumerate(rec_parts)])
    rec_cols = [
        np.concatenate([rp[k] if i == 0 else rp[k][1:] for i, rp in enumerate(rec_parts)])
        for k in range(1, 5)
    ]
    writer.csv(
        "trajectory.csv",
        ["t", "ubar", "pbar", "H", "distance"],
        zip(rec_t, *rec_cols),
    )
    writer.csv("crossings.csv", ["t_cross"], [(t,) for t in record.times])
    x = params.grid
    writer.csv(
        "critical_points.csv",
        ["x", "u_minus", "u_plus", "u_saddle"],
        zip(x, minus_pair[0].u, plus_pair[0].u, saddle.u),
    )
    writer.csv(
        "snapshots.csv",
        ["x"] + [name for name, _ in snapshots],
        zip(x, *[u for _, u in snapshots]),
    )
    return task_seeds, failures


def run_prefactor_curve(cfg: dict, writer: ArtifactWriter):
    failures = []
    rows = []
    n = cfg["system"]["N"]
    for d in cfg["delta_grid"]:
        try:
            params = _system({"system": {**cfg["system"], "delta": float(d)}})
            saddle = find_saddle(params)
            plus = find_minimizer(params, np.full(n, 0.5))
            lam = prefactor_lambda(
                hessian_spectrum(params, saddle.u), hessian_spectrum(params, plus.u), n
            )
            rows.append((d, lam))
        except (ConvergenceError, ValueError) as exc:
            failures.append({"delta": d, "error": str(exc)})
    writer.csv("prefactor.csv", ["delta", "Lambda"], rows)
    return [], failures


def run_bifurcation(cfg: dict, writer: ArtifactWriter):
    params = _system(cfg)
    rows = bifurcation_scan(params, cfg["delta_grid"])
    failures = [
        {"delta": r["delta"], "branch": n, "error": "solver failure"}
        for r in rows
        for n, e in r["branch_energies"].items()
        if e is None
    ]
    writer.csv(
        "bifurcation.csv",
        ["delta", "energy", "index"],
        [(r["delta"], r["energy"], r["index"]) for r in rows],
    )
    writer.csv(
        "bifurcation_branches.csv",
        ["delta", "branch", "energy"],
        [
            (r["delta"], n, e)
            for r in rows
            for n, e in sorted(r["branch_energies"].items())
            if e is not None
        ],
    )
    return [], failures


def run_ergodicity(cfg: dict, writer: ArtifactWriter):
    params = _system(cfg)
    nseeds = cfg["seeds"]
    dt = cfg.get("dt") or stable_dt(params, safety=cfg.get("dt_safety", 0.0025))
    cadence = max(int(round(cfg["record_dt"] / dt)), 1)
    n_steps = int(round(cfg["horizon"] / dt))
    n_steps -= n_steps % cadence
    horizon = n_steps * dt

    plus = find_minimizer(params, np.full(params.N, 0.5))
    plus_spec = hessian_spectrum(params, plus.u)
    seed = int(np.random.SeedSequence(cfg["seed"]).generate_state(1)[0])
    spec = EnsembleSpec(params, count=nseeds, seed=seed)
    states = list(sample_canonical_ic(spec, plus_spec, center_field=plus.u))
    result = _run_batches(params, states, dt, horizon, None, cadence, 0, cfg["workers"])

    stats = []
    for k in range(nseeds):
        rep = tst.ergodicity_diagnostics(result.record_times, result.ubar[k], result.pbar[k], params)
        writer.csv(
            f"traj_seed{k}.csv",
            ["t", "ubar", "pbar", "H"],
            zip(result.record_times, result.ubar[k], result.pbar[k], result.energy[k]),
        )
        stats.append(
            {
                "seed_index": k,
                "pbar_sq_time_average": rep.pbar_sq_running[-1],
                "pbar_sq_target": rep.pbar_sq_target,
                "reduced_energy_mean": rep.reduced_energy_mean,
                "reduced_energy_std": rep.reduced_energy_std,
                "reduced_energy_drift": rep.reduced_energy_drift,
                "energy_drift_rel": abs(result.energy[k][-1] - result.energy[k][0])
                / abs(result.energy[k][0]),
            }
        )
    writer.json(
        "diagnostics.json",
        {
            "beta": params.beta,
            "delta": params.delta,
            "N": params.N,
            "horizon": horizon,
            "dt": dt,
            "per_seed": stats,
        },
    )
    return [seed], []


def _grid_functions(params: SystemParams):
    x = params.grid
    return np.sin(np.pi * x), np.cos(np.pi * x)


def run_measure_check(cfg: dict, writer: ArtifactWriter):
    params = _system(cfg)
    if params.potential.family != "quadratic":
        raise ConfigError("measure-check requires a quadratic potential")
    n, beta = params.N, params.beta
    count = cfg["samples"]
    energy = n / beta
    s_grid, t_grid = _grid_functions(params)

    plus = find_minimizer(params, np.zeros(n))
    plus_spec = hessian_spectrum(params, plus.u)
    sseq = np.random.SeedSequence(cfg["seed"])
    seed_can, seed_mic = (int(s.generate_state(1)[0]) for s in sseq.spawn(2))

    spec = EnsembleSpec(params, count=count, seed=seed_can)
    canonical = list(sample_canonical_ic(spec, plus_spec, center_field=plus.u))
    micro = list(sample_microcanonical_quadratic(params, energy, seed_mic, count))

    cov_theory = covariance_numeric(params, params.potential.alpha) / beta
    phi_limit = limit_char_functional(s_grid, t_grid, beta, cov_theory * beta)

    from scipy.stats import kstest

    def block(samples):
        est, se = empirical_char_functional(iter(samples), s_grid, t_grid)
        U = np.array([s.u for s in samples])
        emp = (U - U.mean(axis=0)).T @ (U - U.mean(axis=0)) / (len(samples) - 1)
        # per-entry sampling std of the covariance estimator
        diag = np.diag(cov_theory)
        cov_se = np.sqrt((np.outer(diag, diag) + cov_theory**2) / len(samples))
        dev = np.abs(emp - cov_theory) / cov_se
        # white-noise marginal: p_j / sqrt(N) is N(0, 1/beta) in the limit
        p0 = np.array([s.p[0] for s in samples]) / math.sqrt(n)
        ks = kstest(p0, "norm", args=(0.0, math.sqrt(1.0 / beta)))
        return est, se, emp, float(np.max(dev)), float(np.mean(np.abs(emp - cov_theory))), ks.pvalue

    est_c, se_c, cov_c, dev_c, mae_c, ks_c = block(canonical)
    est_m, se_m, cov_m, dev_m, mae_m, ks_m = block(micro)

    betas = [float(b) for b in np.linspace(2.0, 40.0, 20)]
    lam_box = np.arange(1.0, 1001.0) ** 2
    conc_rows = [(b, concentration_bound(b, lam_box, 0.5, 1.0)) for b in betas]

    writer.json(
        "measure_check.json",
        {
            "N": n,
            "beta": beta,
            "samples": count,
            "energy_shell": energy,
            "phi_limit": [phi_limit.real, phi_limit.imag],
            "canonical": {
                "phi": [est_c.real, est_c.imag],
                "phi_stderr": se_c,
                "phi_sigmas": abs(est_c - phi_limit) / se_c,
                "cov_max_dev_sigmas": dev_c,
                "cov_mean_abs_err": mae_c,
                "p_marginal_ks_pvalue": ks_c,
            },
            "microcanonical": {
                "phi": [est_m.real, est_m.imag],
                "phi_stderr": se_m,
                "phi_sigmas": abs(est_m - phi_limit) / se_m,
                "cov_max_dev_sigmas": dev_m,
                "cov_mean_abs_err": mae_m,
                "p_marginal_ks_pvalue": ks_m,
            },
        },
    )
    grid = params.grid
    writer.csv("covariance_theory.csv", ["x"] + [_fmt(g) for g in grid],
               [(grid[i], *cov_theory[i]) for i in range(n)])
    writer.csv("covariance_canonical.csv", ["x"] + [_fmt(g) for g in grid],
               [(grid[i], *cov_c[i]) for i in range(n)])
    writer.csv("covariance_microcanonical.csv", ["x"] + [_fmt(g) for g in grid],
               [(grid[i], *cov_m[i]) for i in range(n)])
    writer.csv("concentration.csv", ["beta", "bound"], conc_rows)
    return [seed_can, seed_mic], []


EXPERIMENTS = {
    "transition-sweep": run_transition_sweep,
    "single-trajectory": run_single_trajectory,
    "prefactor-curve": run_prefactor_curve,
    "bifurcation": run_bifurcation,
    "ergodicity": run_ergodicity,
    "measure-check": run_measure_check,
}


def run_experiment(cfg: dict, out_dir) -> Path:
    """Validate, run and write artifacts; returns the manifest path."""
    cfg = validate_config(cfg)
    writer = ArtifactWriter(Path(out_dir))
    start = time.monotonic()
    try:
        task_seeds, failures = EXPERIMENTS[cfg["experiment"]](cfg, writer)
    except (ConvergenceError, NotImplementedError, np.linalg.LinAlgError) as exc:
        raise NumericalFailure(str(exc)) from exc
    return writer.manifest(cfg, time.monotonic() - start, task_seeds, failures)
