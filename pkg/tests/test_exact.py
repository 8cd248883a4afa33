import json
import math
from pathlib import Path

import numpy as np
import pytest
from scipy.linalg import expm

from skshuffle.dynamics import PLAIN, WITH_BOUNDARIES
from skshuffle.exact import (dirac, evolve, exact_mixing_time, full_mixing_time, identity_index,
                             projection_mixing_lower, tv_curve, tv_distance, uniform_distribution)
from skshuffle.spectral import _encode, build_exclusion_generator, build_sparse_generator

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def gen_n4_k2():
    return build_sparse_generator(4, 2, PLAIN)


class TestTV:
    def test_identical(self):
        mu = np.array([0.2, 0.3, 0.5])
        assert tv_distance(mu, mu) == 0.0

    def test_dirac_vs_uniform_s3(self):
        g = build_sparse_generator(3, 2, PLAIN)
        assert tv_distance(dirac(g, 0), uniform_distribution(g)) == pytest.approx(5 / 6)

    def test_disjoint(self):
        assert tv_distance([1, 0, 0], [0, 0, 1]) == 1.0

    def test_mismatch(self):
        with pytest.raises(ValueError):
            tv_distance([1, 0], [1, 0, 0])


class TestEvolve:
    def test_time_zero(self, gen_n4_k2):
        mu = dirac(gen_n4_k2, 3)
        assert np.array_equal(evolve(gen_n4_k2, mu, 0.0), mu)

    def test_matches_dense_exponential(self, gen_n4_k2):
        L = gen_n4_k2.generator().toarray()
        mu = dirac(gen_n4_k2, identity_index(gen_n4_k2))
        for t in (0.3, 2.0, 7.5, 40.0):
            assert np.abs(evolve(gen_n4_k2, mu, t) - mu @ expm(t * L)).sum() <= 1e-10

    def test_long_time(self, gen_n4_k2):
        mu = evolve(gen_n4_k2, dirac(gen_n4_k2, 0), 200.0)
        assert tv_distance(mu, uniform_distribution(gen_n4_k2)) < 1e-6

    def test_semigroup(self):
        g = build_sparse_generator(5, 3, WITH_BOUNDARIES)
        tol = 1e-12
        mu = dirac(g, identity_index(g))
        once = evolve(g, mu, 3.7, tol)
        twice = evolve(g, evolve(g, mu, 1.2, tol), 2.5, tol)
        assert np.abs(once - twice).sum() <= 2 * tol + 1e-13

    def test_uniform_fixed_point(self):
        g = build_sparse_generator(5, 4, WITH_BOUNDARIES)
        pi = uniform_distribution(g)
        assert np.abs(evolve(g, pi, 5.0) - pi).max() <= 1e-12

    def test_probability_vector(self):
        g = build_exclusion_generator(12, 3, 6, WITH_BOUNDARIES)
        mu = evolve(g, dirac(g, identity_index(g)), 50.0)
        assert mu.min() >= 0 and abs(mu.sum() - 1) <= 1e-12

    def test_errors(self, gen_n4_k2):
        with pytest.raises(ValueError):
            evolve(gen_n4_k2, dirac(gen_n4_k2, 0), -1.0)
        with pytest.raises(ValueError):
            evolve(gen_n4_k2, np.ones(3) / 3, 1.0)

    def test_lumping_consistency_n5_k3(self):
        full = build_sparse_generator(5, 3, WITH_BOUNDARIES)
        K = 2
        excl = build_exclusion_generator(5, 3, K, WITH_BOUNDARIES)
        codes = _encode((full.states <= K).astype(np.int64), 2)
        labels = np.array([excl.index_of(row) for row in (full.states <= K).astype(np.int64)])
        assert len(np.unique(codes)) == excl.size
        mu_full = evolve(full, dirac(full, identity_index(full)), 2.3)
        projected = np.bincount(labels, weights=mu_full, minlength=excl.size)
        direct = evolve(excl, dirac(excl, identity_index(excl)), 2.3)
        assert np.abs(projected - direct).max() <= 1e-10


class TestMixingTime:
    def test_golden_n4_k2(self, gen_n4_k2):
        golden = json.loads((GOLDEN / "tmix_n4_k2.json").read_text())
        res = exact_mixing_time(gen_n4_k2, eps=golden["eps"])
        assert res.t_mix == pytest.approx(golden["t_mix"], rel=0.01)

    def test_eps_near_one(self, gen_n4_k2):
        assert exact_mixing_time(gen_n4_k2, eps=0.99).t_mix == 0.0
        assert exact_mixing_time(gen_n4_k2, eps=0.95).t_mix < 0.2

    def test_monotone_in_eps(self, gen_n4_k2):
        times = [exact_mixing_time(gen_n4_k2, eps=e).t_mix for e in (0.05, 0.1, 0.25, 0.5, 0.8)]
        assert times == sorted(times, reverse=True)

    def test_curve_nonincreasing(self):
        g = build_sparse_generator(6, 3, WITH_BOUNDARIES)
        res = exact_mixing_time(g, eps=0.1)
        tvs = [d for _, d in res.curve]
        assert all(b <= a + 1e-12 for a, b in zip(tvs, tvs[1:]))
        grid = tv_curve(g, identity_index(g), np.linspace(0, 10, 21))
        assert np.all(np.diff(grid) <= 1e-12)

    def test_bad_eps(self, gen_n4_k2):
        with pytest.raises(ValueError):
            exact_mixing_time(gen_n4_k2, eps=1.0)

    def test_projection_below_full_n8(self):
        lower = projection_mixing_lower(8, 2, 4, 0.25).t_mix
        full = full_mixing_time(8, 2, 0.25).t_mix
        assert lower <= full

    def test_single_card_trend_in_k(self):
        # K=1 follows one card; its mixing time shrinks roughly like k^-3
        t = {k: projection_mixing_lower(24, k, 1, 0.25, WITH_BOUNDARIES).t_mix for k in (2, 3, 4)}
        assert t[2] > t[3] > t[4]
        assert t[2] / t[4] > 3

    @pytest.mark.parametrize("k", [2, 3])
    def test_normalized_projection_constant(self, k):
        N = 16
        t = projection_mixing_lower(N, k, 8, 0.5, WITH_BOUNDARIES).t_mix
        c = t * k * (k * k - 1) / (N * N * math.log(N))
        # finite-size value sits below 6/pi^2 but on the same scale
        assert 0.3 < c < 6 / math.pi ** 2
