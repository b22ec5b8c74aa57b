"""Asymptotic variances (scaled by n, or by G for clusters) in closed form.

Expectations over X are exact sums for discrete covariates and
Gauss-Legendre quadrature per bin for uniform covariates, so every value
is deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from ..errors import ValidationError
from .dgp import ClusterDgp, Dgp


@dataclass(frozen=True)
class TheoreticalVariances:
    """Limits of n times the variance of each estimator under its design.

    ``V_cr``: difference in means, complete randomization. ``V_sbr``:
    saturated estimate, stratified block randomization on the Dgp strata.
    ``V_star``: strata equal to X itself (the matched-pairs limit and the
    efficiency bound). ``V_pool`` and ``V_sat``: pooled and fully interacted
    linear adjustment under complete randomization, with ``gamma1``,
    ``gamma0`` the arm slopes, ``gamma`` their pooled combination and
    ``sigma_x`` the covariate variance. Cluster fields are per cluster.
    """

    V_cr: float | None = None
    V_sbr: float | None = None
    V_pool: float | None = None
    V_sat: float | None = None
    V_star: float | None = None
    V_eq: float | None = None
    V_size: float | None = None
    V_eq_sbr: float | None = None
    V_size_sbr: float | None = None
    gamma: float | None = None
    gamma1: float | None = None
    gamma0: float | None = None
    sigma_x: float | None = None
    pi: float = 0.5


def _pi_per_node(labels, pi, pi_by_stratum):
    if pi_by_stratum is None:
        return np.full(labels.size, float(pi))
    pbs = {str(k): float(v) for k, v in pi_by_stratum.items()}
    missing = sorted(set(labels.tolist()) - set(pbs))
    if missing:
        raise ValidationError(f"no assignment probability for stratum {missing[0]!r}")
    return np.array([pbs[s] for s in labels])


def _group_mean(values, w, labels):
    """E[values | stratum] at every node, and the stratum probabilities."""
    out = np.empty_like(values)
    prob = np.empty_like(values)
    for s in set(labels.tolist()):
        m = labels == s
        out[m] = np.dot(w[m], values[m]) / w[m].sum()
        prob[m] = w[m].sum()
    return out, prob


def _stratified(w, labels, pis, m1, m0, v1, v0):
    """Stratified-randomization variance for arbitrary strata over the nodes.

    ``m_d``, ``v_d`` are the conditional means and variances given X at
    each node; variances given the stratum add the within-stratum spread of
    the means.
    """
    g1, _ = _group_mean(m1, w, labels)
    g0, _ = _group_mean(m0, w, labels)
    var1 = _group_mean(v1 + (m1 - g1) ** 2, w, labels)[0]
    var0 = _group_mean(v0 + (m0 - g0) ** 2, w, labels)[0]
    tau = g1 - g0
    ate = np.dot(w, tau)
    return float(np.dot(w, var1 / pis + var0 / (1 - pis) + (tau - ate) ** 2))


def theoretical_variances(dgp, pi: float = 0.5, pi_by_stratum: Mapping[str, float] | None = None) -> TheoreticalVariances:
    """Every closed-form variance the Dgp supports.

    With ``pi_by_stratum`` the stratified variance uses the per-stratum
    probabilities while the unstratified ones use the implied overall
    treated share.
    """
    if isinstance(dgp, ClusterDgp):
        return _cluster_variances(dgp, pi, pi_by_stratum)
    if not isinstance(dgp, Dgp):
        raise ValidationError(f"unsupported data-generating process {type(dgp).__name__}")
    x, w, labels = dgp.nodes()
    pis = _pi_per_node(labels, pi, pi_by_stratum)
    p = float(np.dot(w, pis))
    m1, m0 = dgp.mean1(x), dgp.mean0(x)
    v1, v0 = dgp.sd1(x) ** 2, dgp.sd0(x) ** 2
    mu1, mu0 = np.dot(w, m1), np.dot(w, m0)
    var_y1 = np.dot(w, v1 + (m1 - mu1) ** 2)
    var_y0 = np.dot(w, v0 + (m0 - mu0) ** 2)
    V_cr = var_y1 / p + var_y0 / (1 - p)
    V_sbr = _stratified(w, labels, pis, m1, m0, v1, v0)
    V_star = _stratified(w, np.arange(x.size).astype(str).astype(object), np.full(x.size, p), m1, m0, v1, v0)

    xbar = np.dot(w, x)
    sigma_x = float(np.dot(w, (x - xbar) ** 2))
    gamma1 = float(np.dot(w, (x - xbar) * (m1 - mu1)) / sigma_x)
    gamma0 = float(np.dot(w, (x - xbar) * (m0 - mu0)) / sigma_x)
    gamma = p * gamma1 + (1 - p) * gamma0

    def resid_var(m, v, mu, g):
        return float(np.dot(w, v + (m - mu - g * (x - xbar)) ** 2))

    # pooled adjustment is the difference in means of Y - gamma X
    V_pool = resid_var(m1, v1, mu1, gamma) / p + resid_var(m0, v0, mu0, gamma) / (1 - p)
    V_sat = (resid_var(m1, v1, mu1, gamma1) / p + resid_var(m0, v0, mu0, gamma0) / (1 - p)
             + (gamma1 - gamma0) ** 2 * sigma_x)
    return TheoreticalVariances(V_cr=float(V_cr), V_sbr=V_sbr, V_pool=float(V_pool), V_sat=float(V_sat),
                                V_star=V_star, gamma=gamma, gamma1=gamma1, gamma0=gamma0,
                                sigma_x=sigma_x, pi=p)


def pooled_three_term(V_cr, gamma1, gamma0, sigma_x, pi) -> float:
    """Pooled-adjustment variance written as V_cr plus two corrections.

    The second correction vanishes when ``pi = 1/2`` or the arm slopes are
    equal, and otherwise has either sign.
    """
    g = pi * gamma1 + (1 - pi) * gamma0
    q = pi * (1 - pi)
    return V_cr - g * g * sigma_x / q + 2 * (2 * pi - 1) * g * (gamma1 - gamma0) * sigma_x / q


def _cluster_variances(dgp: ClusterDgp, pi, pi_by_stratum):
    N = dgp.sizes
    w = dgp.size_probs
    labels = np.array(dgp.labels, dtype=object)
    pis = _pi_per_node(labels, pi, pi_by_stratum)
    p = float(np.dot(w, pis))
    M = dgp.sampled(N)
    noise = dgp.cluster_sd ** 2 + dgp.unit_sd ** 2 / M
    EN = np.dot(w, N)
    out = {}
    for name, scale in (("eq", np.ones_like(N)), ("size", N / EN)):
        # cluster outcome Z_d = scale * (Ybar_d - c_d) with c_d the matching weighted mean
        parts = []
        for m in (dgp.mean1(N), dgp.mean0(N)):
            c = np.dot(w, scale * m) / np.dot(w, scale)
            parts.append((scale * (m - c), scale ** 2 * noise))
        (h1, n1), (h0, n0) = parts
        var1 = np.dot(w, h1 ** 2 + n1)
        var0 = np.dot(w, h0 ** 2 + n0)
        out[f"V_{name}"] = float(var1 / p + var0 / (1 - p))
        out[f"V_{name}_sbr"] = _stratified(w, labels, pis, h1, h0, n1, n0)
    return TheoreticalVariances(pi=p, **out)
