import math
from itertools import combinations, product

import numpy as np
import pytest

from rctkit import (ClusterSample, EstimationError, Sample, arm_robust_variance, cluster_eq_variance,
                    cluster_robust_wls_variance, cluster_size_variance, confidence_interval,
                    design_based_strat_variance, finite_pop_bound, match_pairs, matched_pairs_variance,
                    normal_quantile, regression_robust_variance, saturated_estimate, sbr_variance)
from rctkit.variance import pairs_of_pairs_product


def bisect_quantile(p, lo=-10.0, hi=10.0):
    cdf = lambda z: 0.5 * (1 + math.erf(z / math.sqrt(2)))
    for _ in range(200):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if cdf(mid) < p else (lo, mid)
    return (lo + hi) / 2


def assignments(n, n1):
    for t in combinations(range(n), n1):
        d = np.zeros(n, int)
        d[list(t)] = 1
        yield d


class TestArmRobust:
    def test_example(self):
        assert arm_robust_variance(Sample([0, 2, 1, 1], [1, 1, 0, 0])) == 1.0

    def test_constant(self):
        assert arm_robust_variance(Sample([3.0] * 6, [1, 0] * 3)) == 0

    def test_small_arm(self):
        with pytest.raises(EstimationError):
            arm_robust_variance(Sample([1, 2, 3], [1, 0, 0]))

    def test_equals_hc2_on_treatment_dummy(self, eight_rows):
        s = eight_rows
        hc2 = regression_robust_variance(s.y, np.column_stack([np.ones(8), s.d]), kind="HC2")
        assert arm_robust_variance(s) == pytest.approx(hc2, rel=1e-10)


class TestFinitePopBound:
    y1 = np.array([3.0, 1.5, 4.0, 2.2, 0.0, 6.1])

    def test_equal_spread(self):
        s = Sample([0, 2, 1, 3], [1, 1, 0, 0])
        assert finite_pop_bound(s, 10, improved=True) == finite_pop_bound(s, 10)

    def test_population_too_small(self, four_rows):
        with pytest.raises(EstimationError):
            finite_pop_bound(four_rows, 3)

    def _bound_and_exact(self, y0):
        y1 = self.y1
        bounds, est = [], []
        for d in assignments(6, 3):
            s = Sample(np.where(d == 1, y1, y0), d)
            bounds.append(finite_pop_bound(s, 6))
            est.append(s.y[d == 1].mean() - s.y[d == 0].mean())
        return np.mean(bounds), np.var(est)

    def test_constant_effect_exact(self):
        bound, exact = self._bound_and_exact(self.y1 - 2.0)
        assert bound == pytest.approx(exact, rel=1e-12)

    def test_heterogeneous_effect_conservative(self):
        bound, exact = self._bound_and_exact(np.array([1.0, 1.0, 2.5, 0.3, -1.0, 2.0]))
        assert bound > exact


def strat_sample(seed=0, sizes=(6, 8, 10)):
    rng = np.random.default_rng(seed)
    labels = np.repeat([f"s{j}" for j in range(len(sizes))], sizes)
    d = np.concatenate([rng.permutation(np.r_[np.ones(m // 2), np.zeros(m - m // 2)]) for m in sizes]).astype(int)
    y = rng.normal(size=labels.size) + np.repeat(np.arange(len(sizes)) * 2.0, sizes) * (1 + d)
    return Sample(y, d, stratum=labels)


class TestStratified:
    def test_one_stratum_collapse(self, eight_rows):
        s = eight_rows.replace(stratum=["a"] * 8)
        assert abs(sbr_variance(s) / arm_robust_variance(s) - 1) <= 2 / s.n

    def test_ordering(self):
        s = strat_sample()
        assert design_based_strat_variance(s) <= sbr_variance(s)

    def test_equal_effects(self):
        y = np.array([1.0, 2.0, 0.0, 1.0, 5.0, 7.0, 4.0, 6.0])
        d = np.array([1, 1, 0, 0, 1, 1, 0, 0])
        s = Sample(y, d, stratum=["a"] * 4 + ["b"] * 4)
        assert sbr_variance(s) == pytest.approx(design_based_strat_variance(s), abs=1e-15)

    def test_hand_computed(self):
        s = strat_sample(sizes=(4, 6))
        p = np.array([0.4, 0.6])
        v, eff = [], []
        for lab in ("s0", "s1"):
            m = s.stratum == lab
            a, b = s.y[m & (s.d == 1)], s.y[m & (s.d == 0)]
            pi = a.size / m.sum()
            v.append(np.var(a, ddof=1) / pi + np.var(b, ddof=1) / (1 - pi))
            eff.append(a.mean() - b.mean())
        tau = np.dot(p, eff)
        ref = (np.dot(p, v) + np.dot(p, (np.array(eff) - tau) ** 2)) / 10
        assert sbr_variance(s) == pytest.approx(ref, rel=1e-12)
        assert saturated_estimate(s) == pytest.approx(tau, rel=1e-12)

    def test_small_stratum_named(self):
        s = Sample([1, 2, 3, 4, 5, 6, 7], [1, 1, 0, 0, 1, 0, 0], stratum=["a"] * 4 + ["b"] * 3)
        with pytest.raises(EstimationError, match="'b'"):
            sbr_variance(s)

    def test_enumeration_conservative(self):
        # n=8, two strata of 4, two treated per stratum
        y1 = np.array([2.0, 3.5, 1.0, 4.0, 6.0, 5.5, 9.0, 7.0])
        y0 = np.array([1.0, 1.5, 0.0, 2.5, 3.0, 4.0, 5.0, 4.5])
        strata = np.array(["a"] * 4 + ["b"] * 4)
        est, dbsv = [], []
        for da, db in product(assignments(4, 2), assignments(4, 2)):
            d = np.r_[da, db]
            s = Sample(np.where(d == 1, y1, y0), d, stratum=strata)
            est.append(saturated_estimate(s))
            dbsv.append(design_based_strat_variance(s))
        assert np.var(est) < np.mean(dbsv)


class TestMatchedPairs:
    def test_lambda_example(self):
        assert pairs_of_pairs_product([2, 2, 4, 4]) == 10

    def test_odd_pair_dropped(self):
        assert pairs_of_pairs_product([2, 2, 4, 4, 100]) == 10

    def pairs_sample(self, K, rng, y):
        x = rng.uniform(0, 1, 2 * K)
        pairing = match_pairs(x)
        pair = np.empty(2 * K, int)
        d = np.zeros(2 * K, int)
        for j, (a, b) in enumerate(pairing):
            pair[[a, b]] = j
            d[a if rng.random() < 0.5 else b] = 1
        return Sample(y(x, d), d, x, pair=pair)

    def test_too_few_pairs(self):
        s = self.pairs_sample(3, np.random.default_rng(0), lambda x, d: x + d)
        with pytest.raises(EstimationError, match="too few pairs"):
            matched_pairs_variance(s)

    def test_unsplit_pair(self):
        s = Sample([1, 2, 3, 4, 5, 6, 7, 8], [1, 1, 0, 0, 1, 0, 1, 0], pair=[0, 0, 1, 1, 2, 2, 3, 3])
        with pytest.raises(EstimationError, match="pair 0"):
            matched_pairs_variance(s)

    def test_hand_computed(self):
        y = np.array([1.0, 0.0, 2.0, 1.5, 3.0, 2.5, 5.0, 3.0, 4.0, 4.0])
        d = np.array([1, 0, 1, 0, 1, 0, 1, 0, 0, 1])
        s = Sample(y, d, pair=np.repeat(np.arange(5), 2))
        sums = np.array([1.0, 3.5, 5.5, 8.0, 8.0])
        lam = (sums[0] * sums[1] + sums[2] * sums[3]) / 2
        m = 2 * y.mean()
        ref = (2 * np.var(y[d == 1], ddof=1) + 2 * np.var(y[d == 0], ddof=1) - max(0, lam - m * m)) / 10
        assert matched_pairs_variance(s) == pytest.approx(ref, rel=1e-12)

    def test_pair_order(self):
        y = np.array([1.0, 0.0, 2.0, 1.5, 3.0, 2.5, 5.0, 3.0])
        s = Sample(y, [1, 0, 1, 0, 1, 0, 1, 0], pair=[3, 3, 1, 1, 0, 0, 2, 2])
        t = Sample(y, [1, 0, 1, 0, 1, 0, 1, 0], pair=[0, 0, 1, 1, 2, 2, 3, 3])
        assert matched_pairs_variance(s, pair_order=[3, 1, 0, 2]) == pytest.approx(matched_pairs_variance(t))

    def test_deterministic_outcomes_vanish(self):
        rng = np.random.default_rng(1)
        s = self.pairs_sample(2000, rng, lambda x, d: x + d)
        assert s.n * matched_pairs_variance(s) < 0.01 * s.n * arm_robust_variance(s)

    def test_irrelevant_covariate(self):
        rng = np.random.default_rng(2)
        s = self.pairs_sample(5000, rng, lambda x, d: rng.normal(size=x.size) + d)
        assert matched_pairs_variance(s) / arm_robust_variance(s) == pytest.approx(1, abs=0.05)


def rows_clusters(seed=0, G=12, equal=False):
    rng = np.random.default_rng(seed)
    size = np.full(G, 3) if equal else rng.integers(1, 8, G)
    counts = size if equal else np.minimum(size, rng.integers(1, 4, G))
    d = np.r_[np.ones(G // 2), np.zeros(G - G // 2)].astype(int)
    member_of = np.repeat(np.arange(G), counts)
    y = rng.normal(size=member_of.size) + size[member_of] * (1 + d[member_of])
    return ClusterSample(np.arange(G), d, y, member_of, size=size)


class TestClusterVariances:
    def test_singletons(self, eight_rows):
        s = eight_rows
        cs = ClusterSample.from_rows(list(range(8)), s.y, s.d)
        assert cluster_eq_variance(cs) == pytest.approx(arm_robust_variance(s), rel=1e-12)

    def test_constant_means(self):
        cs = ClusterSample.from_rows([0, 0, 1, 2, 3], [1, 1, 1, 0, 0], [1, 1, 1, 0, 0])
        assert cluster_eq_variance(cs) == 0

    def test_size_equal_sizes(self):
        cs = rows_clusters(equal=True)
        assert cluster_size_variance(cs) == pytest.approx(cluster_eq_variance(cs), rel=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_size_equals_wls_sandwich(self, seed):
        cs = rows_clusters(seed)
        rows = cs.rows()
        g = cs.member_of
        w = cs.size[g] / cs.counts[g]
        ref = cluster_robust_wls_variance(rows.y, np.column_stack([np.ones(rows.n), rows.d]), g, w,
                                          correction="arm", arm=rows.d)
        assert cluster_size_variance(cs) == pytest.approx(ref, rel=1e-8)

    def test_missing_size(self):
        cs = ClusterSample.from_rows([0, 1, 2, 3], [1, 2, 3, 4], [1, 1, 0, 0])
        with pytest.raises(EstimationError):
            cluster_size_variance(cs)


class TestConfidenceInterval:
    def test_example(self):
        lo, hi = confidence_interval(1.0, 0.25)
        assert lo == pytest.approx(1 - 1.959963984540054 * 0.5, abs=1e-12)
        assert (round(lo, 2), round(hi, 2)) == (0.02, 1.98)

    def test_zero_variance(self):
        assert confidence_interval(2.0, 0.0) == (2.0, 2.0)

    def test_negative_variance(self):
        with pytest.raises(EstimationError):
            confidence_interval(0.0, -1.0)

    @pytest.mark.parametrize("p", [0.6, 0.95, 0.975, 0.995, 0.9999])
    def test_quantile_accuracy(self, p):
        assert normal_quantile(p) == pytest.approx(bisect_quantile(p), abs=1e-8)

    def test_ninety_percent(self):
        lo, hi = confidence_interval(0.0, 1.0, level=0.90)
        assert hi == pytest.approx(1.6449, abs=1e-4)
        assert hi == pytest.approx(bisect_quantile(0.95), abs=1e-8)
