import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rctkit import (ClusterSample, PotentialPopulation, Sample, aipw, arm_robust_variance, assign_complete,
                    assign_stratified_block, cluster_eq_variance, cluster_robust_wls_variance, cluster_size,
                    cluster_size_variance, design_based_strat_variance, diff_in_means, finite_pop_bound,
                    least_squares, lin_interacted, matched_pairs_variance, permutation_test, pooled_adjusted,
                    saturated_estimate, sbr_variance)
from rctkit.oracle import Dgp, enumerate_complete, theoretical_variances

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)
SETTINGS = settings(max_examples=60, deadline=None)


@st.composite
def samples(draw, k=1, min_arm=3):
    n1 = draw(st.integers(min_arm, 10))
    n0 = draw(st.integers(min_arm, 10))
    n = n1 + n0
    y = draw(arrays(float, n, elements=finite))
    x = draw(arrays(float, (n, k), elements=finite))
    d = np.r_[np.ones(n1, int), np.zeros(n0, int)]
    perm = draw(st.permutations(range(n)))
    return Sample(y, d[list(perm)], x if k else None)


@st.composite
def stratified(draw):
    """Balanced strata of even size at least 4, two treated per two units."""
    sizes = draw(st.lists(st.sampled_from([4, 6, 8]), min_size=1, max_size=3))
    labels = np.repeat([f"s{j}" for j in range(len(sizes))], sizes)
    d = np.concatenate([np.tile([1, 0], m // 2) for m in sizes])
    y = draw(arrays(float, d.size, elements=finite))
    return Sample(y, d, stratum=labels)


def well_posed(s):
    cols = np.column_stack([np.ones(s.n), s.d, s.x, s.d[:, None] * (s.x - s.x.mean(0))])
    return np.linalg.cond(cols) < 1e6


class TestEstimatorInvariance:
    @SETTINGS
    @given(samples(), st.floats(-50, 50), st.floats(0.1, 10))
    def test_location_scale(self, s, c, a):
        assume(well_posed(s))
        t = s.replace(y=a * s.y + c)
        for f in (diff_in_means, pooled_adjusted, lin_interacted):
            assert f(t) == pytest.approx(a * f(s), abs=1e-7 * (1 + abs(a * f(s))) * (1 + abs(c)))

    @SETTINGS
    @given(samples(), st.randoms(use_true_random=False))
    def test_unit_order(self, s, r):
        assume(well_posed(s))
        perm = list(range(s.n))
        r.shuffle(perm)
        t = Sample(s.y[perm], s.d[perm], s.x[perm])
        for f in (diff_in_means, pooled_adjusted, lin_interacted):
            assert f(t) == pytest.approx(f(s), abs=1e-8 * (1 + abs(f(s))))

    @SETTINGS
    @given(st.integers(2, 12).flatmap(lambda h: arrays(float, 2 * h, elements=finite)))
    def test_aipw_mean_is_dim(self, y):
        d = np.tile([1, 0], y.size // 2)
        s = Sample(y, d)
        assert aipw(s, 0.5, "mean") == pytest.approx(diff_in_means(s), abs=1e-12 * (1 + np.abs(y).max()))

    @SETTINGS
    @given(stratified())
    def test_sat_is_dim_when_balanced(self, s):
        assert saturated_estimate(s) == pytest.approx(diff_in_means(s), abs=1e-12 * (1 + np.abs(s.y).max()))


@st.composite
def cluster_samples(draw):
    G1, G0 = draw(st.integers(2, 6)), draw(st.integers(2, 6))
    G = G1 + G0
    size = np.array(draw(st.lists(st.integers(1, 20), min_size=G, max_size=G)))
    counts = np.array([draw(st.integers(1, int(m))) for m in size])
    member_of = np.repeat(np.arange(G), counts)
    y = draw(arrays(float, member_of.size, elements=finite))
    d = np.r_[np.ones(G1, int), np.zeros(G0, int)]
    return ClusterSample(np.arange(G), d, y, member_of, size=size)


class TestClusterIdentities:
    @SETTINGS
    @given(cluster_samples())
    def test_size_is_weighted_regression(self, cs):
        rows = cs.rows()
        w = cs.size[cs.member_of] / cs.counts[cs.member_of]
        ref = least_squares(rows.y, np.column_stack([np.ones(rows.n), rows.d]), weights=w).coefficients[1]
        assert cluster_size(cs) == pytest.approx(ref, abs=1e-10 * (1 + np.abs(cs.y).max()))

    @SETTINGS
    @given(cluster_samples())
    def test_size_variance_is_sandwich(self, cs):
        rows = cs.rows()
        g = cs.member_of
        ref = cluster_robust_wls_variance(rows.y, np.column_stack([np.ones(rows.n), rows.d]), g,
                                          cs.size[g] / cs.counts[g], correction="arm", arm=rows.d)
        assert cluster_size_variance(cs) == pytest.approx(ref, rel=1e-8, abs=1e-12 * (1 + np.abs(cs.y).max()) ** 2)

    @SETTINGS
    @given(cluster_samples())
    def test_nonnegative(self, cs):
        assert cluster_eq_variance(cs) >= 0 and cluster_size_variance(cs) >= 0


class TestVarianceProperties:
    @SETTINGS
    @given(samples(k=0), st.floats(0.1, 10))
    def test_scale(self, s, a):
        t = s.replace(y=a * s.y)
        v = arm_robust_variance(s)
        assert arm_robust_variance(t) == pytest.approx(a * a * v, rel=1e-9, abs=1e-12)
        assert v >= 0

    @SETTINGS
    @given(samples(k=0), st.integers(0, 200))
    def test_improved_bound_smaller(self, s, extra):
        N = s.n + extra
        assert 0 <= finite_pop_bound(s, N, improved=True) <= finite_pop_bound(s, N)

    @SETTINGS
    @given(stratified(), st.floats(0.1, 10))
    def test_stratified_ordering_and_scale(self, s, a):
        assume(min(np.bincount(np.unique(s.stratum, return_inverse=True)[1])) >= 4)
        lo, hi = design_based_strat_variance(s), sbr_variance(s)
        assert 0 <= lo <= hi * (1 + 1e-12)
        assert sbr_variance(s.replace(y=a * s.y)) == pytest.approx(a * a * hi, rel=1e-9, abs=1e-12)

    @SETTINGS
    @given(st.integers(4, 12).flatmap(lambda K: arrays(float, 2 * K, elements=finite)),
           st.floats(0.1, 10))
    def test_pairs_nonnegative_and_scale(self, y, a):
        K = y.size // 2
        s = Sample(y, np.tile([1, 0], K), pair=np.repeat(np.arange(K), 2))
        v = matched_pairs_variance(s)
        assert v >= 0
        assert matched_pairs_variance(s.replace(y=a * y)) == pytest.approx(a * a * v, rel=1e-9, abs=1e-10)


class TestOracleProperties:
    @SETTINGS
    @given(st.integers(4, 9).flatmap(lambda N: st.tuples(arrays(float, N, elements=finite),
                                                          arrays(float, N, elements=finite),
                                                          st.integers(1, N - 1))))
    def test_enumeration_matches_closed_form(self, args):
        y1, y0, n1 = args
        e = enumerate_complete(PotentialPopulation(y1, y0), n1)
        scale = 1 + np.abs(np.r_[y1, y0]).max() ** 2
        assert e.mean == pytest.approx(e.delta_fp, abs=1e-12 * scale)
        assert e.variance == pytest.approx(e.closed_form_variance, abs=1e-12 * scale)

    @SETTINGS
    @given(st.lists(st.floats(0.05, 1), min_size=2, max_size=4),
           st.data())
    def test_theory_ordering(self, w, data):
        k = len(w)
        probs = np.array(w) / sum(w)
        probs[-1] = 1 - probs[:-1].sum()
        m1 = data.draw(st.lists(st.floats(-5, 5), min_size=k, max_size=k))
        m0 = data.draw(st.lists(st.floats(-5, 5), min_size=k, max_size=k))
        sd1 = data.draw(st.lists(st.floats(0, 3), min_size=k, max_size=k))
        sd0 = data.draw(st.lists(st.floats(0, 3), min_size=k, max_size=k))
        pi = data.draw(st.floats(0.2, 0.8))
        tv = theoretical_variances(Dgp.discrete(list(range(k)), probs, m1, m0, sd1, sd0), pi=pi)
        tol = 1e-9 * (1 + tv.V_cr)
        assert tv.V_star <= tv.V_sbr + tol
        assert tv.V_sbr <= tv.V_cr + tol
        assert tv.V_sat <= tv.V_cr + tol


class TestDesignProperties:
    @SETTINGS
    @given(st.integers(2, 200), st.floats(0.05, 0.95), st.integers(0, 2 ** 32))
    def test_complete_count(self, n, pi, seed):
        k = int(np.floor(pi * n + 1e-9))
        assume(0 < k < n)
        assert assign_complete(n, pi, seed).n1 == k

    @SETTINGS
    @given(st.lists(st.sampled_from("abc"), min_size=6, max_size=60), st.integers(0, 2 ** 32))
    def test_stratified_counts(self, labels, seed):
        labels = np.array(labels)
        counts = {s: int((labels == s).sum()) for s in set(labels.tolist())}
        assume(all(c >= 2 for c in counts.values()))
        a = assign_stratified_block(labels, 0.5, seed)
        for s, c in counts.items():
            assert a.d[labels == s].sum() == c // 2


class TestPermutationProperties:
    @SETTINGS
    @given(samples(k=0), st.integers(0, 1000))
    def test_p_range(self, s, seed):
        p = permutation_test(s, "complete", B=99, rng=seed).p_value
        assert 1 / 100 <= p <= 1


@pytest.mark.slow
def test_refined_strata_not_worse():
    # X in {0,1,2,3} drives the outcome; coarse strata merge {0,1} and {2,3}
    dgp = Dgp.discrete([0, 1, 2, 3], [0.25] * 4, [0, 1, 3, 6], [0, 2, 2, 4])
    rng = np.random.default_rng(5)
    fine, coarse = [], []
    for _ in range(20):
        draw = dgp.draw(4000, rng)
        labels = draw.x.astype(int).astype(str)
        a = assign_stratified_block(labels, 0.5, rng)
        y = np.where(a.d == 1, draw.y1, draw.y0)
        fine.append(sbr_variance(Sample(y, a.d, stratum=labels)))
        merged = np.where(draw.x < 2, "lo", "hi")
        coarse.append(sbr_variance(Sample(y, a.d, stratum=merged)))
    assert np.mean(fine) <= 1.10 * np.mean(coarse)
