import math

import numpy as np
import pytest

from skshuffle.dynamics import (PLAIN, UNIT_BOUNDARIES, WITH_BOUNDARIES, CensoringSchedule,
                                ShuffleVariant, make_cutoff_censoring)
from skshuffle.montecarlo import (Estimate, LowerBoundInputs, TVBracket, boundary_exit_experiment,
                                  card_exit_times, censoring_dominance_check, coupling_tv_upper,
                                  height_decay_experiment, heights_batch,
                                  negative_dependence_check, no_precutoff_experiment, phi_batch,
                                  phi_variance_estimate, scaled_lower_bound_inputs,
                                  second_moment_lower_bound, simulate_replicas, statistic_tv_lower,
                                  uniform_samples, wilson)
from skshuffle.perm import Permutation, height_numerators, identity
from skshuffle.seeding import replica_seed
from skshuffle.spectral import lambda_approx, phi


def reference_bound(lam, c, R, psi_max, eps):
    # t with psi_max * exp(-lam t) = sqrt(4 max(2R, c) / eps)
    return math.log(psi_max / math.sqrt(4 * max(2 * R, c) / eps)) / lam


class TestSecondMomentBound:
    def test_hand_example(self):
        val = second_moment_lower_bound(LowerBoundInputs(0.25, 0.01, 2.0, 100.0, 0.5))
        assert val == pytest.approx(4 * math.log(100) - 2 * math.log(32), abs=1e-12)
        assert val == pytest.approx(11.4892, abs=1e-4)

    def test_random_tuples(self):
        g = np.random.default_rng(2024)
        for _ in range(10):
            lam = g.uniform(1e-3, 2)
            c = g.uniform(0, 50)
            R = g.uniform(0.1, 1e4)
            psi = g.uniform(1, 1e5)
            eps = g.uniform(0.01, 0.99)
            got = second_moment_lower_bound(LowerBoundInputs(lam, c, R, psi, eps))
            assert got == pytest.approx(reference_bound(lam, c, R, psi, eps), rel=1e-12, abs=1e-12)

    def test_c_guard(self):
        a = second_moment_lower_bound(LowerBoundInputs(1.0, 0.0, 2.0, 10.0, 0.5))
        b = second_moment_lower_bound(LowerBoundInputs(1.0, 100.0, 2.0, 10.0, 0.5))
        assert b < a

    def test_monotone_in_eps(self):
        vals = [second_moment_lower_bound(LowerBoundInputs(0.3, 0.1, 5.0, 50.0, e))
                for e in (0.1, 0.3, 0.6, 0.9)]
        assert vals == sorted(vals)

    def test_validation(self):
        with pytest.raises(ValueError):
            LowerBoundInputs(0.0, 0.0, 1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            LowerBoundInputs(1.0, 0.0, 1.0, 0.0, 0.5)
        with pytest.raises(ValueError):
            LowerBoundInputs(1.0, -1.0, 1.0, 1.0, 0.5)
        with pytest.raises(ValueError):
            LowerBoundInputs(1.0, 0.0, 1.0, 1.0, 1.0)

    def test_leading_order_constant(self):
        N, k, eps = 10_000, 3, 0.5
        inp = scaled_lower_bound_inputs(N, k, eps)
        norm = k * (k * k - 1) / (N * N * math.log(N))
        # the log N part of the bound; the rest is O(1/lambda)
        leading = second_moment_lower_bound(inp) + math.log(8 / eps) / (2 * inp.lam)
        assert leading * norm == pytest.approx(6 / math.pi ** 2, rel=0.05)
        full = second_moment_lower_bound(inp) * norm
        assert 0.5 * 6 / math.pi ** 2 < full < 6 / math.pi ** 2


class TestObservables:
    def test_heights_and_phi_batch(self, rng):
        N = 9
        states = np.stack([rng.permutation(N) + 1 for _ in range(20)])
        for y in (1, 4, 9):
            h = heights_batch(states, y)
            for row, hr in zip(states, h):
                assert np.allclose(hr, height_numerators(Permutation(row), y) / N)
        p = phi_batch(states, 2, 3)
        for row, val in zip(states, p):
            assert val == pytest.approx(phi(Permutation(row), 2, 3))

    def test_simulate_replicas_worker_independent(self):
        v = ShuffleVariant(WITH_BOUNDARIES, 16, 3)
        a = simulate_replicas(v, [1.0, 4.0], 40, 99, "t", workers=1)
        b = simulate_replicas(v, [1.0, 4.0], 40, 99, "t", workers=3)
        assert a.shape == (40, 2, 16)
        assert np.array_equal(a, b)

    def test_replica_seed_distinct(self):
        seeds = {replica_seed(1, "x", 10, 2, r) for r in range(1000)}
        assert len(seeds) == 1000
        assert replica_seed(1, "x", 10, 2, 0) != replica_seed(1, "y", 10, 2, 0)

    def test_uniform_samples(self):
        s = uniform_samples(5, 3000, 7, "u")
        counts = np.bincount(s[:, 0], minlength=6)[1:]
        assert np.all(np.abs(counts / 3000 - 0.2) < 4 * math.sqrt(0.16 / 3000))


class TestVariance:
    def test_time_zero(self):
        rep = phi_variance_estimate(16, 3, WITH_BOUNDARIES, 0.0, 200, 1)
        assert rep.variance == pytest.approx(0.0, abs=1e-20)

    def test_bound_n32(self):
        N, k = 32, 3
        t = N * N * math.log(N) / (2 * k ** 3)
        rep = phi_variance_estimate(N, k, WITH_BOUNDARIES, t, 2000, 3)
        assert rep.passed and rep.bound == 32 ** 3
        assert rep.ci_lo <= rep.variance <= rep.ci_hi

    def test_stationary_start(self):
        rep = phi_variance_estimate(32, 3, WITH_BOUNDARIES, 5.0, 2000, 4, start="uniform")
        assert rep.passed

    def test_min_replicas(self):
        with pytest.raises(ValueError):
            phi_variance_estimate(8, 2, PLAIN, 1.0, 50, 0)


class TestNegativeDependence:
    def test_time_zero(self):
        rep = negative_dependence_check(8, 3, 4, WITH_BOUNDARIES, 0.0)
        assert rep.passed and rep.max_excess <= 1e-12

    @pytest.mark.parametrize("t", [0.5, 2.0, 10.0])
    def test_exact_n8(self, t):
        rep = negative_dependence_check(8, 3, 4, WITH_BOUNDARIES, t, sizes=(2,))
        assert rep.checked == 28
        assert rep.passed, rep.violations

    def test_mc_n24(self):
        rep = negative_dependence_check(24, 4, 12, WITH_BOUNDARIES, 20.0, mode="mc", rng=5,
                                        replicas=50_000, sizes=(2,))
        assert rep.checked == math.comb(24, 2)
        assert rep.passed, rep.violations[:5]

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            negative_dependence_check(6, 2, 3, PLAIN, 1.0, mode="approx")


class TestCensoring:
    def test_empty_schedule_shared_blocks(self):
        res = censoring_dominance_check(12, 3, None, 10.0, 200, 1, share_blocks=True)
        for r in res:
            assert r.diff == 0.0

    def test_full_censoring(self):
        N = 24
        sched = CensoringSchedule.constant(N, range(1, N))
        res = {r.statistic: r for r in censoring_dominance_check(N, 3, sched, 50.0, 400, 2)}
        assert res["phi"].mean_censored == pytest.approx(phi(identity(N)))
        for r in res.values():
            assert r.passed and r.diff > 0

    def test_cutoff_schedule(self):
        N, k = 24, 3
        sched, t1, _, _ = make_cutoff_censoring(N, k, 3, 0.5)
        res = censoring_dominance_check(N, k, sched, t1, 4000, 3, K=3)
        assert {r.statistic for r in res} == {"phi", "height_mid", "skeleton_sum"}
        for r in res:
            assert r.passed, r


class TestStatisticTV:
    def test_identical(self):
        x = np.random.default_rng(1).normal(size=4000)
        est = statistic_tv_lower(x, x.copy())
        assert est.point <= 0.05

    def test_point_mass_vs_stationary(self):
        N = 32
        dyn = np.full(2000, phi(identity(N)))
        stat = phi_batch(uniform_samples(N, 2000, 3, "s"))
        assert statistic_tv_lower(dyn, stat).point >= 0.97

    def test_errors(self):
        with pytest.raises(ValueError):
            statistic_tv_lower([], [1.0])
        with pytest.raises(ValueError):
            statistic_tv_lower([1.0, 1.0], [1.0])

    def test_consistent_with_second_moment_bound(self):
        N, k, eps = 64, 2, 0.5
        t = second_moment_lower_bound(scaled_lower_bound_inputs(N, k, eps))
        dyn = phi_batch(simulate_replicas(ShuffleVariant(WITH_BOUNDARIES, N, k), [t], 2000, 8,
                                          "lb")[:, 0, :])
        stat = phi_batch(uniform_samples(N, 2000, 8, "lbs"))
        est = statistic_tv_lower(dyn, stat)
        assert est.point >= 1 - eps - est.half_width


class TestCoupling:
    def test_time_zero(self):
        est = coupling_tv_upper(10, 3, WITH_BOUNDARIES, [0.0], 200, 1)[0]
        assert est.point >= 0.99

    def test_monotone(self):
        est = coupling_tv_upper(16, 3, WITH_BOUNDARIES, np.linspace(0, 120, 9), 300, 2)
        pts = [e.point for e in est]
        assert pts == sorted(pts, reverse=True)

    def test_upper_scale_n64(self):
        N, k = 64, 3
        t = 2 * 6 * N * N * math.log(N) / (math.pi ** 2 * k ** 3)
        # at t itself the coupling tail sits near 0.53 (measured with 2000 replicas);
        # half the coupled pairs have not merged, so check just past it
        at_t, later = coupling_tv_upper(N, k, WITH_BOUNDARIES, [t, 1.25 * t], 400, 3)
        assert at_t.point < 0.6
        assert later.point < 0.5

    def test_reverse_start(self):
        est, taus = coupling_tv_upper(10, 3, PLAIN, [5.0, 1e4], 100, 4, start="reverse",
                                      return_taus=True)
        assert est[1].point == 0.0 and np.all(np.isfinite(taus))

    def test_min_replicas(self):
        with pytest.raises(ValueError):
            coupling_tv_upper(8, 2, PLAIN, [1.0], 10, 0)

    def test_wilson_and_bracket(self):
        w = wilson(30, 100)
        assert w.point == 0.3 and w.ci_lo < 0.3 < w.ci_hi
        b = TVBracket(1.0, Estimate(0.5, 0.45, 0.55, 100), Estimate(0.48, 0.44, 0.52, 100))
        assert b.consistent()
        assert not TVBracket(1.0, Estimate(0.9, 0.89, 0.91, 100),
                             Estimate(0.2, 0.19, 0.21, 100)).consistent()


class TestExitTimes:
    def test_guard(self):
        with pytest.raises(ValueError):
            boundary_exit_experiment(16, 4, WITH_BOUNDARIES, 10, 0)

    def test_threshold_range(self):
        with pytest.raises(ValueError):
            card_exit_times(ShuffleVariant(PLAIN, 10, 2), [10], 5, 0)

    def test_exit_times_ordered(self):
        t, done = card_exit_times(ShuffleVariant(PLAIN, 40, 3), [5, 20], 200, 1)
        assert done.all()
        assert np.all(t[:, 0] <= t[:, 1])

    def test_horizon_marks_unfinished(self):
        t, done = card_exit_times(ShuffleVariant(PLAIN, 200, 2), [150], 20, 1, horizon=1.0)
        assert not done.any() and np.all(t == 1.0)

    def test_k8_vs_k16_n512(self):
        med = {k: boundary_exit_experiment(512, k, WITH_BOUNDARIES, 400, 11).near["median"]
               for k in (8, 16)}
        assert 1.0 <= med[8] / med[16] <= 4.0

    def test_unit_boundaries_runs(self):
        rep = boundary_exit_experiment(128, 8, UNIT_BOUNDARIES, 200, 12)
        assert rep.unfinished == 0.0
        assert rep.near["q10"] <= rep.near["median"] <= rep.near["q90"]


class TestNoPrecutoff:
    def test_small_run(self):
        rep = no_precutoff_experiment([64, 128], delta=0.75, eps_grid=(0.5, 0.25, 0.1),
                                      replicas=1500, rng=3, control=False)
        assert rep.ks == [22, 38]
        assert rep.grows_as_eps_shrinks
        assert all(m > 0 for m in rep.medians)

    def test_delta_range(self):
        with pytest.raises(ValueError):
            no_precutoff_experiment([64], delta=0.5)


class TestDecay:
    def test_rate_matches_lambda_n64(self):
        N, k = 64, 3
        lam = lambda_approx(N, k, 1)
        times = np.linspace(0.25, 2.5, 10) / lam
        rep = height_decay_experiment(N, k, times, 2000, 21)
        assert rep.rate == pytest.approx(lam, rel=0.15)
        assert np.all(rep.max_mean <= rep.bound + 1e-9)

    def test_doubling_n_divides_rate_by_four(self):
        k = 3
        rates = {}
        for N, reps in ((32, 2000), (64, 1000)):
            lam = lambda_approx(N, k, 1)
            rates[N] = height_decay_experiment(N, k, np.linspace(0.25, 2.0, 8) / lam, reps, 22).rate
        assert rates[32] / rates[64] == pytest.approx(4.0, rel=0.2)
