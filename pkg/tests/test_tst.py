import math

import numpy as np
import pytest

from metastab.critical import Spectrum, find_minimizer, find_saddle, hessian_spectrum
from metastab.lattice import SystemParams
from metastab.tst import (
    CrossingRecord,
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


def dw(N, delta, beta=1.0):
    return SystemParams(N, delta, beta)


@pytest.fixture(scope="module")
def uniform_setup():
    p = dw(64, 0.5)
    sad = find_saddle(p)
    ss = hessian_spectrum(p, sad.u)
    mn = find_minimizer(p, np.full(64, 0.5))
    ms = hessian_spectrum(p, mn.u)
    return p, sad, ss, mn, ms


class TestSurface:
    def test_distance_zero_at_saddle(self, uniform_setup):
        p, sad, ss, _, _ = uniform_setup
        surf = build_surface(p, sad, ss)
        assert surface_distance(surf, sad.u) == pytest.approx(0.0, abs=1e-12)

    def test_uniform_saddle_distance_to_plus_minimizer_is_one(self, uniform_setup):
        # phi1 is the constant mode, normalized to one: d(+1) = 1
        p, sad, ss, _, _ = uniform_setup
        surf = build_surface(p, sad, ss)
        assert surface_distance(surf, np.ones(64)) == pytest.approx(1.0, rel=1e-10)
        assert surface_distance(surf, -np.ones(64)) == pytest.approx(-1.0, rel=1e-10)

    def test_antisymmetry_about_the_surface(self, uniform_setup):
        p, sad, ss, _, _ = uniform_setup
        surf = build_surface(p, sad, ss)
        rng = np.random.default_rng(4)
        v = rng.standard_normal(64)
        assert surface_distance(surf, sad.u + v) == pytest.approx(
            -surface_distance(surf, sad.u - v), rel=1e-12
        )

    def test_nonuniform_saddle_orientation(self):
        p = dw(96, 0.2)
        surf = build_surface(p)
        assert surface_distance(surf, np.ones(96)) > 0
        assert surface_distance(surf, -np.ones(96)) < 0

    def test_dimension_mismatch(self, uniform_setup):
        p, sad, ss, _, _ = uniform_setup
        surf = build_surface(p, sad, ss)
        with pytest.raises(ValueError):
            surface_distance(surf, np.ones(65))


class TestCountCrossings:
    def test_constant_sign_no_crossings(self):
        rec = count_crossings([0.0, 1.0, 2.0], [1.0, 1.0, 1.0])
        assert rec.count == 0

    def test_down_up_two_crossings(self):
        rec = count_crossings([0.0, 1.0, 2.0], [1.0, -1.0, 1.0])
        assert rec.count == 2
        assert rec.times == pytest.approx([0.5, 1.5])

    def test_three_periods_of_a_sine_cross_six_times(self):
        # 2 crossings per period; sample through the end of the third period
        dt = 1e-3
        t = np.arange(0, 3.0 + 2 * dt, dt)
        rec = count_crossings(t, np.sin(2 * np.pi * t))
        assert rec.count == 6
        assert rec.times == pytest.approx([0.5, 1.0, 1.5, 2.0, 2.5, 3.0], abs=1e-5)

    def test_exact_zero_sample_counts_once(self):
        rec = count_crossings([0.0, 1.0, 2.0], [1.0, 0.0, -1.0])
        assert rec.count == 1
        assert rec.times == pytest.approx([1.0])

    def test_exact_zero_touch_without_crossing_counts_zero(self):
        rec = count_crossings([0.0, 1.0, 2.0], [1.0, 0.0, 1.0])
        assert rec.count == 0

    def test_leading_zero_attributed_to_next_sign(self):
        rec = count_crossings([0.0, 1.0, 2.0], [0.0, 1.0, -1.0])
        assert rec.count == 1

    def test_empty_series_rejected(self):
        with pytest.raises(ValueError):
            count_crossings([], [])

    def test_parity_matches_endpoint_regions(self):
        # a path starting and ending in the same region crosses evenly
        rng = np.random.default_rng(0)
        for _ in range(20):
            d = np.cumsum(rng.standard_normal(400)) + 5.0
            rec = count_crossings(np.arange(400.0), d)
            same_side = d[0] * d[-1] > 0
            assert (rec.count % 2 == 0) == same_side


class TestEmpiricalRate:
    def test_arithmetic_example(self):
        rec = CrossingRecord(np.linspace(5, 95, 10), horizon=100.0)
        est = empirical_rate([rec])
        assert est.nu == pytest.approx(0.05)
        assert est.tau == pytest.approx(10.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(1)
        recs = [
            CrossingRecord(np.sort(rng.uniform(0, 50, rng.integers(1, 9))), horizon=50.0, trajectory_id=i)
            for i in range(6)
        ]
        a = empirical_rate(recs)
        b = empirical_rate(recs[::-1])
        assert (a.nu, a.tau) == (b.nu, b.tau)

    def test_zero_crossings_flagged_as_lower_bound(self):
        recs = [CrossingRecord(np.zeros(0), horizon=10.0) for _ in range(3)]
        est = empirical_rate(recs)
        assert est.lower_bound_only
        assert est.tau == math.inf

    def test_mismatched_horizons_rejected(self):
        with pytest.raises(ValueError):
            empirical_rate([CrossingRecord(np.zeros(0), 1.0), CrossingRecord(np.zeros(0), 2.0)])

    def test_recovers_telegraph_switching_rate(self):
        # oracle: exponential residencies with mean tau give nu = 1/(2 tau)
        rng = np.random.default_rng(7)
        tau_true, T, m = 4.0, 400.0, 60
        recs = []
        for i in range(m):
            t, times = 0.0, []
            while True:
                t += rng.exponential(tau_true)
                if t > T:
                    break
                times.append(t)
            recs.append(CrossingRecord(np.array(times), horizon=T, trajectory_id=i))
        est = empirical_rate(recs)
        assert est.tau == pytest.approx(tau_true, rel=0.05)
        assert est.nu == pytest.approx(1 / (2 * tau_true), rel=0.05)


class TestRateTheory:
    def test_symmetric_well_identity_tau_equals_half_inverse_nu(self, uniform_setup):
        p, sad, ss, mn, ms = uniform_setup
        th = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], beta=12.0)
        assert th.tau[0] == th.tau[1]
        assert th.tau[0] * 2.0 * th.nu == pytest.approx(1.0, rel=1e-12)
        assert th.weights[0] == pytest.approx(0.5, rel=1e-12)

    def test_exponential_beta_dependence(self, uniform_setup):
        p, sad, ss, mn, ms = uniform_setup
        t1 = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], beta=10.0)
        t2 = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], beta=18.0)
        dE = t1.barriers[0]
        assert math.log(t2.tau_limit[0]) - math.log(t1.tau_limit[0]) == pytest.approx(
            dE * 8.0, rel=1e-10
        )

    def test_known_value_at_delta_one_beta_twenty(self):
        # tau ~ 2 pi Lambda e^5 with the continuum Lambda ~ 0.5545 -> ~517
        p = dw(1024, 1.0)
        sad = find_saddle(p)
        ss = hessian_spectrum(p, sad.u)
        mn = find_minimizer(p, np.full(1024, 0.5))
        ms = hessian_spectrum(p, mn.u)
        th = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], beta=20.0)
        target = 2 * math.pi * 0.554516 * math.exp(5.0)
        assert th.tau[0] == pytest.approx(target, rel=0.02)

    def test_log_space_products_survive_large_N_and_beta(self):
        p = dw(1024, 1.0)
        sad = find_saddle(p)
        ss = hessian_spectrum(p, sad.u)
        mn = find_minimizer(p, np.full(1024, 0.5))
        ms = hessian_spectrum(p, mn.u)
        th = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], beta=40.0)
        assert 0.0 < th.nu < math.inf
        assert 0.0 < th.tau[0] < math.inf
        # naive products overflow: the eigenvalue product alone spans ~1e3500
        assert np.sum(np.log(ms.eigenvalues)) > 3000.0

    def test_asymmetric_wells_weight_and_residency_identity(self):
        # fabricated asymmetric pair: the lower well carries more weight and
        # tau_pm = w_pm / nu holds exactly
        lam_s = np.array([-0.5, 1.5, 2.5, 4.0])
        lam_a = np.array([1.0, 2.0, 3.0, 5.0])
        lam_b = np.array([1.2, 2.2, 3.1, 5.5])
        sad_spec = Spectrum(lam_s, np.eye(4))

        class Point:
            def __init__(self, energy):
                self.energy = energy

        beta = 6.0
        minima = [(Point(0.0), Spectrum(lam_a, np.eye(4))),
                  (Point(0.3), Spectrum(lam_b, np.eye(4)))]
        th = tst_rate_theory(Point(1.0), sad_spec, minima, beta)
        assert th.weights[0] > th.weights[1]
        assert sum(th.weights) == pytest.approx(1.0, rel=1e-12)
        for k in (0, 1):
            assert th.tau[k] * th.nu == pytest.approx(th.weights[k], rel=1e-12)
        # deeper well waits longer
        assert th.tau[0] > th.tau[1]

    def test_contract_checks(self, uniform_setup):
        p, sad, ss, mn, ms = uniform_setup
        with pytest.raises(ValueError):
            tst_rate_theory(sad, ms, [(mn, ms)], beta=4.0)
        with pytest.raises(ValueError):
            tst_rate_theory(sad, ss, [(mn, ss)], beta=4.0)


class TestMicrocanonicalTau:
    def test_ratio_to_canonical_tends_to_one(self):
        betas_fixed_product = 16.0  # beta * dE = 4 with dE = 1/4
        ratios = []
        for N in (64, 128, 256, 512, 1024):
            p = dw(N, 1.0)
            sad = find_saddle(p)
            ss = hessian_spectrum(p, sad.u)
            mn = find_minimizer(p, np.full(N, 0.5))
            ms = hessian_spectrum(p, mn.u)
            tau_c = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], betas_fixed_product).tau[0]
            tau_m = microcanonical_tau(sad, ss, [(mn, ms)], betas_fixed_product, N)[0]
            ratios.append(tau_m / tau_c)
        gaps = [abs(r - 1.0) for r in ratios]
        assert all(a > b for a, b in zip(gaps, gaps[1:]))
        assert gaps[-1] < 0.02

    def test_no_barrier_is_beta_independent(self):
        lam_s = np.array([-1.0, 2.0, 3.0])
        lam_m = np.array([1.0, 2.0, 3.0])
        sad_spec = Spectrum(lam_s, np.eye(3))
        min_spec = Spectrum(lam_m, np.eye(3))

        class Point:
            energy = 0.7

        taus = [
            microcanonical_tau(Point(), sad_spec, [(Point(), min_spec)], beta, N=3)[0]
            for beta in (0.3, 0.9)
        ]
        assert taus[0] == pytest.approx(taus[1], rel=1e-12)

    def test_shell_below_saddle_rejected(self, uniform_setup):
        p, sad, ss, mn, ms = uniform_setup
        # beta E^s / N >= 1 puts the shell below the saddle
        with pytest.raises(ValueError):
            microcanonical_tau(sad, ss, [(mn, ms)], beta=5000.0, N=p.N)


class TestLangevinTau:
    def test_zero_damping_equals_conservative_limit_bitwise(self, uniform_setup):
        p, sad, ss, mn, ms = uniform_setup
        beta = 14.0
        th = tst_rate_theory(sad, ss, [(mn, ms), (mn, ms)], beta)
        lam1 = float(ss.eigenvalues[0])
        tau0 = langevin_tau(0.0, lam1, th.prefactors[0], th.barriers[0], beta)
        assert tau0 == th.tau_limit[0]  # bit-for-bit

    def test_large_damping_asymptote(self):
        gamma = 1e8
        tau = langevin_tau(gamma, -1.0, 1.0, 0.0, 1.0)
        assert tau == pytest.approx(2 * math.pi * gamma, rel=1e-7)

    def test_plugin_value(self):
        # gamma = sqrt|lam1| = 1, Lambda = 1, beta dE = 0: pi (1 + sqrt 5)
        tau = langevin_tau(1.0, -1.0, 1.0, 0.0, 1.0)
        assert tau == pytest.approx(math.pi * (1 + math.sqrt(5.0)), rel=1e-12)

    def test_domain_checks(self):
        with pytest.raises(ValueError):
            langevin_tau(-0.1, -1.0, 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            langevin_tau(0.1, 1.0, 1.0, 0.0, 1.0)


class TestErgodicityDiagnostics:
    def test_conserved_case_flat_reduced_energy(self):
        p = dw(16, 0.5, beta=4.0)
        t = np.linspace(0, 10, 101)
        ub = np.full_like(t, 1.0)
        pb = np.full_like(t, 0.25)
        rep = ergodicity_diagnostics(t, ub, pb, p)
        assert rep.reduced_energy_std == pytest.approx(0.0, abs=1e-15)
        assert rep.pbar_sq_running[-1] == pytest.approx(0.0625)
        assert rep.pbar_sq_target == pytest.approx(0.25)

    def test_running_average_converges_to_mean_square(self):
        p = dw(16, 0.5, beta=4.0)
        t = np.linspace(0, 200, 20001)
        pb = np.sqrt(2 * 0.25) * np.sin(1.3 * t)  # time-avg pb^2 = 0.25
        rep = ergodicity_diagnostics(t, np.ones_like(t), pb, p)
        assert rep.pbar_sq_running[-1] == pytest.approx(0.25, rel=0.01)

    def test_column_validation(self):
        p = dw(16, 0.5)
        with pytest.raises(ValueError):
            ergodicity_diagnostics([0.0], [1.0], [1.0], p)


class TestResidencyCorrelation:
    def test_iid_exponential_intervals_uncorrelated(self):
        rng = np.random.default_rng(3)
        times = np.cumsum(rng.exponential(1.0, 600))
        corr, band = residency_correlation(CrossingRecord(times, horizon=float(times[-1] + 1)))
        assert abs(corr) < band

    def test_alternating_intervals_anticorrelated(self):
        gaps = np.array([1.0, 10.0] * 40)
        times = np.cumsum(gaps)
        corr, band = residency_correlation(CrossingRecord(times, horizon=float(times[-1] + 1)))
        assert corr == pytest.approx(-1.0, abs=1e-9)

    def test_insufficient_crossings_flagged(self):
        corr, band = residency_correlation(CrossingRecord(np.arange(1.0, 6.0), horizon=10.0))
        assert corr is None and band is None

    @pytest.mark.slow
    def test_interval_correlation_contrast_between_regimes(self):
        # frozen regression: mixing dynamics (delta=0.05) gives lag-1
        # correlation within the null band; at delta=1 the rare crossing
        # trajectory oscillates across the surface and correlates strongly
        # (measured +0.74 at this seed)
        from metastab.dynamics import run_ensemble, stable_dt
        from metastab.measures import EnsembleSpec, sample_canonical_ic

        def lag1(delta, beta, horizon):
            p = dw(128, delta, beta)
            sad = find_saddle(p)
            ss = hessian_spectrum(p, sad.u)
            mn = find_minimizer(p, np.full(128, 0.5))
            ms = hessian_spectrum(p, mn.u)
            surf = build_surface(p, sad, ss)
            state = next(
                sample_canonical_ic(EnsembleSpec(p, 1, seed=0), ms, center_field=mn.u)
            )
            res = run_ensemble(p, [state], stable_dt(p), horizon, surface=surf,
                               cross_cap=120_000)
            rec = CrossingRecord(res.cross_times[0], res.horizon, 0)
            return residency_correlation(rec)

        corr_mix, band_mix = lag1(0.05, 3.0 / 0.04712124, 6000.0)
        corr_frozen, band_frozen = lag1(1.0, 10.0, 4000.0)
        assert abs(corr_mix) <= max(1.5 * band_mix, 0.12)
        assert corr_frozen > 0.5
        assert corr_frozen > 5 * band_frozen
