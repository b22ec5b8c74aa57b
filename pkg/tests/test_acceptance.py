"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the lines are also
collected into the terminal summary.
"""
import math
import time
from itertools import combinations

import numpy as np
import pytest

from rctkit import (ClusterSample, PotentialPopulation, Sample, aipw, arm_robust_variance,
                    assign_matched_pairs, cluster_robust_wls_variance, cluster_size_variance,
                    confidence_interval, diff_in_means, lin_interacted, match_pairs, matched_pairs_variance,
                    permutation_test, split)
from rctkit.estimate import ArmMeanModel, LinearModel, ZeroModel
from rctkit.oracle import (ClusterDgp, Dgp, enumerate_complete, enumerate_stratified, finite_pop_gap,
                           monte_carlo, paired_difference, theoretical_variances)

RESULTS: list[str] = []
ROOT3 = math.sqrt(3.0)


def verdict(number, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail} ({elapsed:.1f}s, limit {limit:.0f}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def covered(lo, hi, value):
    return lo <= value <= hi


def test_criterion_01_finite_population_identity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240601)
    worst_mean = worst_var = 0.0
    for _ in range(20):
        pop = PotentialPopulation(rng.normal(size=6) * 3 + 1, rng.normal(size=6))
        e = enumerate_complete(pop, 3)
        worst_mean = max(worst_mean, abs(e.mean - pop.delta_fp))
        worst_var = max(worst_var, abs(e.variance - e.closed_form_variance))
    ok = worst_mean <= 1e-12 and worst_var <= 1e-12
    verdict(1, ok, time.perf_counter() - t0, 1,
            f"max|E-delta_fp|={worst_mean:.1e}, max|Var-closed form|={worst_var:.1e} over 20 populations")


def test_criterion_02_ex_post_bias_and_dominance():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240602)
    worst_bias = 0.0
    dominated = True
    cr_bias = []
    for _ in range(10):
        x = np.repeat([0.0, 1.0], 4)
        y0 = 2.0 * x + rng.normal(size=8)
        y1 = y0 + 1.0 + x + rng.normal(size=8)
        pop = PotentialPopulation(y1, y0, x[:, None], stratum=np.where(x == 0, "a", "b"))
        e = enumerate_stratified(pop, 0.5)
        worst_bias = max(worst_bias, e.sbr.max_abs_bias_post)
        cr_bias.append(e.cr.max_abs_bias_post)
        dominated &= e.sbr.conditional_variance <= e.cr.conditional_variance
    ok = worst_bias <= 1e-12 and dominated and min(cr_bias) > 0
    verdict(2, ok, time.perf_counter() - t0, 1,
            f"SBR max|bias_post|={worst_bias:.1e}, CR min max|bias_post|={min(cr_bias):.2f}, "
            f"Var_SBR<=Var_CR on all 10 populations={dominated}")


@pytest.mark.slow
def test_criterion_03_coverage():
    t0 = time.perf_counter()
    cr_dgp = Dgp.uniform(0.0, 1.0, [1, 1], [0, 1], sd1=2.0, sd0=1.0)
    cr = monte_carlo(cr_dgp, "complete", [("dim", "robust")], 400, 10000, 303).summary("dim", "robust")
    strat = Dgp.discrete([0, 1, 2], [0.3, 0.4, 0.3], [1, 4, 7], [0, 3, 6])
    sbr = monte_carlo(strat, "sbr", [("dim", "sbr"), ("dim", "robust")], 400, 10000, 304)
    c_sbr = sbr.summary("dim", "sbr").coverage
    c_rob = sbr.summary("dim", "robust").coverage
    ok = covered(0.94, 0.96, cr.coverage) and covered(0.94, 0.96, c_sbr) and c_rob >= 0.97
    verdict(3, ok, time.perf_counter() - t0, 120,
            f"CR robust {cr.coverage:.4f}, SBR sbr {c_sbr:.4f}, SBR robust {c_rob:.4f}")


@pytest.mark.slow
def test_criterion_04_variance_ratio():
    t0 = time.perf_counter()
    dgp = Dgp.discrete([0, 1, 2], [0.3, 0.4, 0.3], [1, 4, 7], [0, 3, 6])
    cr = monte_carlo(dgp, "complete", "dim", 1000, 20000, 401).summary("dim")
    sbr = monte_carlo(dgp, "sbr", "dim", 1000, 20000, 402).summary("dim")
    tv = theoretical_variances(dgp)
    empirical, theory = sbr.emp_var / cr.emp_var, tv.V_sbr / tv.V_cr
    rel = abs(empirical / theory - 1)
    verdict(4, rel <= 0.10, time.perf_counter() - t0, 120,
            f"SBR/CR empirical {empirical:.4f} vs theoretical {theory:.4f}, relative error {rel:.3f}")


def test_criterion_05_adjustment_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240605)
    worst = {"mean": 0.0, "linear": 0.0, "zero": 0.0}
    for _ in range(20):
        n, k, pi = 40, 2, 0.25
        x = rng.normal(size=(n, k))
        d = np.zeros(n, int)
        d[rng.choice(n, int(pi * n), replace=False)] = 1
        y = x @ np.array([1.0, -2.0]) + d * (1 + x[:, 0]) + rng.normal(size=n)
        s = Sample(y, d, x)
        ht = np.mean(d * y / pi - (1 - d) * y / (1 - pi))
        worst["mean"] = max(worst["mean"], abs(aipw(s, pi, ArmMeanModel()) - diff_in_means(s)))
        worst["linear"] = max(worst["linear"], abs(aipw(s, pi, LinearModel()) - lin_interacted(s)))
        worst["zero"] = max(worst["zero"], abs(aipw(s, pi, ZeroModel()) - ht))
    ok = worst["mean"] <= 1e-12 and worst["linear"] <= 1e-10 and worst["zero"] <= 1e-12
    verdict(5, ok, time.perf_counter() - t0, 1,
            f"arm-mean vs dim {worst['mean']:.1e}, linear vs lin {worst['linear']:.1e}, "
            f"zero vs Horvitz-Thompson {worst['zero']:.1e}")


@pytest.mark.slow
def test_criterion_06_pooled_adjustment_failure():
    t0 = time.perf_counter()
    dgp = Dgp.uniform(-ROOT3, ROOT3, [0, 1], [0, -1])
    res = monte_carlo(dgp, "complete", ["dim", "pooled", "lin"], 500, 20000, 606, pi=0.8)
    dp, dp_se = paired_difference(res, res.column("pooled"), res.column("dim"))
    dl, dl_se = paired_difference(res, res.column("lin"), res.column("dim"))
    ok = dp > 3 * dp_se and dl < -3 * dl_se
    verdict(6, ok, time.perf_counter() - t0, 120,
            f"Var(pooled)-Var(dim) = {dp:.2e} ({dp / dp_se:.1f} MCSE), "
            f"Var(lin)-Var(dim) = {dl:.2e} ({dl / dl_se:.1f} MCSE)")


def _pairs_coverage_half_constant(dgp, K, R, seed):
    """Coverage when the between-pair term is halved, on fresh draws."""
    hits = 0
    for i in range(R):
        rng = split(seed, i)
        draw = dgp.draw(2 * K, rng)
        a = assign_matched_pairs(match_pairs(draw.x), rng)
        s = Sample(np.where(a.d == 1, draw.y1, draw.y0), a.d, pair=a.pair_ids())
        lo, hi = confidence_interval(diff_in_means(s), matched_pairs_variance(s, between_weight=0.5))
        hits += lo <= dgp.ate <= hi
    return hits / R


@pytest.mark.slow
def test_criterion_07_matched_pairs():
    t0 = time.perf_counter()
    dgp = Dgp.uniform(-ROOT3, ROOT3, [0, 2], [0, 2])
    res = monte_carlo(dgp, "pairs", [("dim", "pairs"), ("dim", "robust")], 2000, 5000, 707)
    c_pairs = res.summary("dim", "pairs").coverage
    c_rob = res.summary("dim", "robust").coverage
    c_half = _pairs_coverage_half_constant(dgp, 1000, 500, 708)
    ok = covered(0.935, 0.965, c_pairs) and c_rob >= 0.97 and not covered(0.935, 0.965, c_half)
    verdict(7, ok, time.perf_counter() - t0, 180,
            f"pairs {c_pairs:.4f}, robust {c_rob:.4f}; halved between-pair term {c_half:.3f} (rejected)")


@pytest.mark.slow
def test_criterion_08_cluster_estimands():
    t0 = time.perf_counter()
    dgp = ClusterDgp.build([1, 9], [0.5, 0.5], [1, 9], 0.0, members=1)
    res = monte_carlo(dgp, "cluster", ["cluster-size", "cluster-eq", "dim"], 2000, 2000, 808)
    size, eq, rows = res.summary("cluster-size"), res.summary("cluster-eq"), res.summary("dim")
    ok = (abs(size.mean - 8.2) <= 3 * size.bias_mcse and abs(eq.mean - 5.0) <= 3 * eq.bias_mcse
          and abs(rows.mean - 5.0) <= 3 * rows.bias_mcse)

    rng = np.random.default_rng(809)
    G = 30
    size_g = rng.integers(1, 12, G)
    counts = np.minimum(size_g, rng.integers(1, 5, G))
    member_of = np.repeat(np.arange(G), counts)
    d = np.r_[np.ones(12, int), np.zeros(G - 12, int)]
    cs = ClusterSample(np.arange(G), d, rng.normal(size=member_of.size) + size_g[member_of] * (1 + d[member_of]),
                       member_of, size=size_g)
    rows_ = cs.rows()
    sandwich = cluster_robust_wls_variance(rows_.y, np.column_stack([np.ones(rows_.n), rows_.d]), member_of,
                                           size_g[member_of] / counts[member_of], correction="arm", arm=rows_.d)
    rel = abs(cluster_size_variance(cs) / sandwich - 1)
    ok = ok and rel <= 1e-8
    verdict(8, ok, time.perf_counter() - t0, 180,
            f"cluster-size {size.mean:.3f}+/-{size.bias_mcse:.3f} (8.2), cluster-eq {eq.mean:.3f}"
            f"+/-{eq.bias_mcse:.3f} (5.0), rows dim {rows.mean:.3f}+/-{rows.bias_mcse:.3f} (5.0); "
            f"sandwich rel diff {rel:.1e}")


def _null_rejections(design, experiments, seed, n=40):
    hits = 0
    for i in range(experiments):
        rng = split(seed, i)
        x = rng.normal(size=n)
        y = 2 * x + rng.normal(size=n)
        if design == "complete":
            d = rng.permutation(np.r_[np.ones(n // 2, int), np.zeros(n // 2, int)])
            s = Sample(y, d)
        elif design == "sbr":
            strata = np.where(x > 0, "hi", "lo")
            d = np.zeros(n, int)
            for lab in ("hi", "lo"):
                idx = np.flatnonzero(strata == lab)
                d[rng.choice(idx, idx.size // 2, replace=False)] = 1
            s = Sample(y, d, stratum=strata)
        else:
            a = assign_matched_pairs(match_pairs(x), rng)
            s = Sample(y, a.d, pair=a.pair_ids())
        hits += permutation_test(s, design, B=499, rng=rng).p_value <= 0.05
    return hits / experiments


@pytest.mark.slow
def test_criterion_09_permutation_exactness():
    t0 = time.perf_counter()
    rates = {design: _null_rejections(design, 2000, 900 + j) for j, design in
             enumerate(("complete", "sbr", "pairs"))}
    s = Sample([4.1, 0.2, 3.3, 1.0, 2.8, -0.5], [1, 0, 1, 0, 1, 0])
    obs = abs(diff_in_means(s))
    ref = []
    for t in combinations(range(6), 3):
        d = np.zeros(6, int)
        d[list(t)] = 1
        ref.append(abs(diff_in_means(Sample(s.y, d))))
    exact = np.mean(np.array(ref) >= obs - 1e-12)
    p = permutation_test(s, "complete", exhaustive=True).p_value
    ok = all(r <= 0.06 for r in rates.values()) and p == exact
    verdict(9, ok, time.perf_counter() - t0, 120,
            "rejection rates " + ", ".join(f"{k} {v:.4f}" for k, v in rates.items())
            + f"; exhaustive p {p:.4f} vs enumerated {exact:.4f}")


@pytest.mark.slow
def test_criterion_10_finite_population_gap():
    t0 = time.perf_counter()
    dgp = Dgp.discrete([0.0], [1.0], 0.0, 0.0, sd1=1.0, sd0=1.0, rho=0.0)
    small = finite_pop_gap(dgp, 50, 50000, populations=20, reps=2000, seed=1001)
    full = finite_pop_gap(dgp, 5000, 5000, populations=20, reps=400, seed=1002)
    var_effect = dgp.effect_variance
    ok = abs(small.gap) <= 3 * small.gap_mcse and abs(full.gap / var_effect - 1) <= 0.10
    verdict(10, ok, time.perf_counter() - t0, 60,
            f"lambda~0: gap {small.gap:.3f}+/-{small.gap_mcse:.3f}; lambda=1: gap {full.gap:.3f} "
            f"vs Var[Y(1)-Y(0)] {var_effect:.3f}")
