"""Variance estimators for each design/estimator pairing and normal intervals.

Every sample variance uses the ``count - 1`` denominator. All functions
return the variance of the point estimate itself (already divided by n).
"""
from __future__ import annotations

import math
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from .errors import EstimationError
from .estimate import (
    _cluster_arms,
    _check_pi,
    _sizes,
    aipw_predictions,
    least_squares,
)
from .model import ClusterSample, Sample

_STANDARD_NORMAL = NormalDist()


def _arm_values(y, d, what="units"):
    y1, y0 = y[d == 1], y[d == 0]
    if y1.size < 2 or y0.size < 2:
        raise EstimationError(f"each arm needs at least 2 {what}, got {y1.size} treated and {y0.size} control")
    return y1, y0


def _robust(y, d, what="units"):
    y1, y0 = _arm_values(np.asarray(y, dtype=float), np.asarray(d), what)
    return float(np.var(y1, ddof=1) / y1.size + np.var(y0, ddof=1) / y0.size)


def arm_robust_variance(sample: Sample) -> float:
    """``s1^2/n1 + s0^2/n0``, the heteroskedasticity-robust variance of the difference in means."""
    return _robust(sample.y, sample.d)


def finite_pop_bound(sample: Sample, N: int, improved: bool = False) -> float:
    """Conservative variance for a sample drawn without replacement from N units.

    The plain bound is ``s1^2/n1 + s0^2/n0``. The improved bound subtracts
    ``(s1 - s0)^2 / N``, the part of the unidentified effect-heterogeneity
    term that the marginal variances do pin down.
    """
    if N < sample.n:
        raise EstimationError(f"population size N={N} is smaller than the sample size n={sample.n}")
    y1, y0 = _arm_values(sample.y, sample.d)
    s1, s0 = np.std(y1, ddof=1), np.std(y0, ddof=1)
    v = s1 ** 2 / y1.size + s0 ** 2 / y0.size
    if improved:
        v -= (s1 - s0) ** 2 / N
    return float(max(v, 0.0))


def _strata_table(sample: Sample, pi_by_stratum):
    """Per stratum: (share, pi, s1^2, s0^2, effect), in label order."""
    if sample.stratum is None:
        raise EstimationError("stratum labels are required")
    rows = []
    for s in sample.strata_levels():
        m = sample.stratum == s
        y1, y0 = sample.y[m & (sample.d == 1)], sample.y[m & (sample.d == 0)]
        if y1.size < 2 or y0.size < 2:
            raise EstimationError(
                f"stratum {s!r} needs at least 2 treated and 2 control units, got {y1.size} and {y0.size}")
        nx = int(m.sum())
        if pi_by_stratum is None:
            pi = y1.size / nx
        elif isinstance(pi_by_stratum, Mapping):
            if s not in pi_by_stratum:
                raise EstimationError(f"no assignment probability for stratum {s!r}")
            pi = float(pi_by_stratum[s])
        else:
            pi = float(pi_by_stratum)
        rows.append((nx / sample.n, pi, np.var(y1, ddof=1), np.var(y0, ddof=1), y1.mean() - y0.mean()))
    return np.array(rows, dtype=float)


def design_based_strat_variance(sample: Sample, pi_by_stratum=None) -> float:
    """Within-stratum part of the stratified variance only.

    ``pi_by_stratum`` maps labels to design probabilities (or is a single
    probability); by default the realized within-stratum shares are used.
    """
    t = _strata_table(sample, pi_by_stratum)
    p, pi, v1, v0 = t[:, 0], t[:, 1], t[:, 2], t[:, 3]
    return float(np.sum(p * (v1 / pi + v0 / (1 - pi))) / sample.n)


def sbr_variance(sample: Sample, pi_by_stratum=None) -> float:
    """Consistent variance of the saturated estimate under stratified block randomization.

    Adds the between-stratum spread of the stratum effects around the
    saturated estimate to :func:`design_based_strat_variance`.
    """
    t = _strata_table(sample, pi_by_stratum)
    p, pi, v1, v0, eff = t.T
    overall = float(np.sum(p * eff))
    within = np.sum(p * (v1 / pi + v0 / (1 - pi)))
    between = np.sum(p * (eff - overall) ** 2)
    return float((within + between) / sample.n)


def _pair_sums(sample: Sample, pair_order):
    if sample.pair is None:
        raise EstimationError("pair ids are required")
    ids, pos = np.unique(sample.pair, return_inverse=True)
    size = np.bincount(pos, minlength=ids.size)
    treated = np.bincount(pos, weights=(sample.d == 1), minlength=ids.size)
    control = np.bincount(pos, weights=(sample.d == 0), minlength=ids.size)
    bad = np.flatnonzero((size != 2) | (treated != 1) | (control != 1))
    if bad.size:
        raise EstimationError(f"pair {ids[bad[0]]} does not contain exactly one treated and one control unit")
    sums = np.bincount(pos, weights=sample.y, minlength=ids.size)
    if pair_order is None:
        return sums
    order = np.asarray(pair_order, dtype=np.int64)
    if order.size != ids.size or not np.array_equal(np.sort(order), ids):
        raise EstimationError("pair_order must list every pair id exactly once")
    return sums[np.searchsorted(ids, order)]


def pairs_of_pairs_product(pair_sums: Sequence[float]) -> float:
    """Mean product of pair sums over consecutive pairs of pairs; an odd last pair is dropped."""
    s = np.asarray(pair_sums, dtype=float)
    h = s.size // 2
    return float(np.mean(s[0:2 * h:2] * s[1:2 * h:2]))


def matched_pairs_variance(sample: Sample, pair_order=None, between_weight: float = 1.0) -> float:
    """Variance of the difference in means under matched-pair randomization.

    Pairs are taken in ``pair_order`` (default: ascending pair id, which is
    the order produced by :func:`rctkit.design.match_pairs`), so adjacent
    pairs have similar covariates. Products of sums of adjacent pairs
    estimate the squared conditional mean of ``Y(1) + Y(0)``; subtracting
    the squared overall mean estimates the variance of that conditional
    mean, which is removed from the two-arm variance.

    ``between_weight`` scales the removed term; 1 is the consistent
    choice and other values are offered only for calibration studies.
    """
    sums = _pair_sums(sample, pair_order)
    K = sums.size
    if K < 4:
        raise EstimationError(f"too few pairs: {K} (at least 4 are needed)")
    y1, y0 = sample.y[sample.d == 1], sample.y[sample.d == 0]
    lam = pairs_of_pairs_product(sums)
    m = 2.0 * sample.y.mean()
    correction = between_weight * max(0.0, lam - m * m)
    v = 2.0 * np.var(y1, ddof=1) + 2.0 * np.var(y0, ddof=1) - correction
    return float(max(v, 0.0) / sample.n)


def cluster_eq_variance(clusters: ClusterSample) -> float:
    """Robust two-arm variance with cluster means as the unit outcomes."""
    return _robust(clusters.means, clusters.d, "clusters")


def size_weighted_scores(clusters: ClusterSample) -> np.ndarray:
    """Per-cluster scores ``(N_g / Nbar_d) (Ybar_g - mu_d)``.

    ``mu_d`` is the size-weighted mean of cluster means in the cluster's arm
    and ``Nbar_d`` the mean cluster size in that arm.
    """
    t, c = _cluster_arms(clusters)
    N = _sizes(clusters)
    yb = clusters.means
    out = np.empty(clusters.G)
    for arm in (t, c):
        mu = np.sum(N[arm] * yb[arm]) / np.sum(N[arm])
        out[arm] = N[arm] / N[arm].mean() * (yb[arm] - mu)
    return out


def cluster_size_variance(clusters: ClusterSample, stratified: bool = False, pi_by_stratum=None) -> float:
    """Variance of the size-weighted cluster estimator.

    Equals the cluster-robust variance of the member-level weighted
    regression of Y on (1, D) with weights ``N_g / |M_g|`` when each arm's
    cluster contributions carry a ``G_d / (G_d - 1)`` correction.

    With ``stratified=True`` the between-stratum component of the scores is
    removed, as for stratified block randomization of clusters. Design
    probabilities default to the realized per-stratum treated shares.
    """
    scores = size_weighted_scores(clusters)
    d = clusters.d
    v = _robust(scores, d, "clusters")
    if not stratified:
        return v
    if clusters.stratum is None:
        raise EstimationError("cluster stratum labels are required")
    G = clusters.G
    levels = sorted(set(clusters.stratum.tolist()))
    h = np.empty(len(levels))
    p = np.empty(len(levels))
    pis = np.empty(len(levels))
    for j, s in enumerate(levels):
        m = clusters.stratum == s
        st, sc = scores[m & (d == 1)], scores[m & (d == 0)]
        if st.size == 0 or sc.size == 0:
            raise EstimationError(f"stratum {s!r} needs treated and control clusters")
        if pi_by_stratum is None:
            pis[j] = st.size / m.sum()
        elif isinstance(pi_by_stratum, Mapping):
            pis[j] = float(pi_by_stratum[s])
        else:
            pis[j] = float(pi_by_stratum)
        p[j] = m.sum() / G
        h[j] = st.mean() / pis[j] + sc.mean() / (1 - pis[j])
    between = np.sum(p * pis * (1 - pis) * (h - np.sum(p * h)) ** 2)
    return float(max(v - between / G, 0.0))


def cluster_robust_wls_variance(y, columns, cluster, weights=None, correction="arm", arm=None, coef=1) -> float:
    """Sandwich variance of one weighted least-squares coefficient with clustered scores.

    ``correction`` is ``"none"`` (plain sandwich), ``"cr1"`` (``G/(G-1)``)
    or ``"arm"``, which multiplies each cluster's score outer product by
    ``G_a/(G_a - 1)`` where ``G_a`` counts the clusters sharing its value of
    ``arm`` (the treatment column by default).
    """
    X = np.asarray(columns, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    fit = least_squares(y, X, weights=weights)
    w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    ids, g = np.unique(np.asarray(cluster), return_inverse=True)
    G = ids.size
    bread = np.linalg.inv(X.T @ (w[:, None] * X))
    scores = np.zeros((G, X.shape[1]))
    np.add.at(scores, g, (w * fit.residuals)[:, None] * X)
    if correction == "none":
        factor = np.ones(G)
    elif correction == "cr1":
        factor = np.full(G, G / (G - 1))
    elif correction == "arm":
        a = X[:, 1] if arm is None else np.asarray(arm)
        ga = np.empty(G)
        ga[g] = a
        levels, inv, cnt = np.unique(ga, return_inverse=True, return_counts=True)
        if np.any(cnt < 2):
            raise EstimationError("each arm needs at least 2 clusters")
        factor = cnt[inv] / (cnt[inv] - 1)
    else:
        raise EstimationError(f"unknown sandwich correction {correction!r}")
    meat = (scores * factor[:, None]).T @ scores
    return float((bread @ meat @ bread)[coef, coef])


def regression_robust_variance(y, columns, coef: int = 1, kind: str = "HC2") -> float:
    """Heteroskedasticity-robust sandwich variance of one OLS coefficient.

    ``kind`` is ``HC0``, ``HC1`` or ``HC2``. With columns (1, D), HC2 equals
    :func:`arm_robust_variance` exactly.
    """
    X = np.asarray(columns, dtype=float)
    fit = least_squares(y, X)
    n, p = X.shape
    bread = np.linalg.inv(X.T @ X)
    e2 = fit.residuals ** 2
    if kind == "HC0":
        pass
    elif kind == "HC1":
        if n <= p:
            raise EstimationError("HC1 needs more observations than regressors")
        e2 = e2 * n / (n - p)
    elif kind == "HC2":
        lev = np.einsum("ij,jk,ik->i", X, bread, X)
        if np.any(lev >= 1 - 1e-12):
            raise EstimationError("HC2 undefined: an observation has leverage one")
        e2 = e2 / (1 - lev)
    else:
        raise EstimationError(f"unknown robust variance kind {kind!r}")
    meat = X.T @ (e2[:, None] * X)
    return float((bread @ meat @ bread)[coef, coef])


def pooled_variance(sample: Sample, kind: str = "HC2") -> float:
    """Robust variance of the D coefficient in the regression on (1, D, X)."""
    if sample.k == 0:
        raise EstimationError("pooled regression adjustment requires at least one covariate")
    cols = np.column_stack([np.ones(sample.n), sample.d, sample.x])
    return regression_robust_variance(sample.y, cols, coef=1, kind=kind)


def aipw_variance(sample: Sample, pi: float, model="linear") -> float:
    """Influence-function variance of the augmented IPW (and interacted regression) estimate.

    With residuals ``r_d = Y - mu_d(X)`` and predicted effects
    ``c = mu_1(X) - mu_0(X)``, returns ``(1/n)[s^2(r1)/pi + s^2(r0)/(1-pi)
    + var(c) + 2 cov(r1, c) - 2 cov(r0, c)]`` where residual moments are
    taken within the corresponding arm.
    """
    pi = _check_pi(sample, pi)
    mu1, mu0 = aipw_predictions(sample, model)
    t, c = sample.d == 1, sample.d == 0
    if t.sum() < 2 or c.sum() < 2:
        raise EstimationError("each arm needs at least 2 units")
    effect = mu1 - mu0
    r1 = sample.y[t] - mu1[t]
    r0 = sample.y[c] - mu0[c]
    cov1 = np.cov(r1, effect[t], ddof=1)[0, 1]
    cov0 = np.cov(r0, effect[c], ddof=1)[0, 1]
    v = (np.var(r1, ddof=1) / pi + np.var(r0, ddof=1) / (1 - pi)
         + np.var(effect, ddof=1) + 2 * cov1 - 2 * cov0)
    return float(max(v, 0.0) / sample.n)


def normal_quantile(p: float) -> float:
    return _STANDARD_NORMAL.inv_cdf(p)


def confidence_interval(point: float, variance: float, level: float = 0.95) -> tuple[float, float]:
    """Two-sided normal interval ``point -/+ z sqrt(variance)``."""
    if not variance >= 0:
        raise EstimationError(f"variance must be nonnegative, got {variance}")
    if not 0 < level < 1:
        raise EstimationError(f"level must lie in (0, 1), got {level}")
    half = normal_quantile((1 + level) / 2) * math.sqrt(variance)
    return (point - half, point + half)
