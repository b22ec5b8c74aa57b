"""Exact design distributions by listing every assignment.

The whole population is the sample, so the only randomness is the
assignment. Listings are refused beyond the cap instead of sampled.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .._kernels import combination_moments
from ..blocks import DEFAULT_CAP, outer_sum, per_block_moments
from ..design import treated_count
from ..errors import EnumerationLimitError, ValidationError
from ..model import PotentialPopulation
from .dgp import Dgp


@dataclass(frozen=True, eq=False)
class CompleteEnumeration:
    count: int
    mean: float
    variance: float
    delta_fp: float
    closed_form_variance: float
    estimates: np.ndarray


def _mean_var(values):
    m = math.fsum(values) / values.size
    return m, math.fsum((values - m) ** 2) / values.size


def enumerate_complete(population: PotentialPopulation, n1: int, cap: int = DEFAULT_CAP) -> CompleteEnumeration:
    """Exact mean and variance of the difference in means over all ``C(N, n1)`` assignments.

    ``closed_form_variance`` is ``S1^2/n1 + S0^2/n0 - S_delta^2/N`` computed
    from the potential outcomes directly, for comparison.
    """
    N = population.N
    if not 0 < n1 < N:
        raise ValidationError(f"need 0 < n1 < N, got n1={n1}, N={N}")
    count = math.comb(N, n1)
    if count > cap:
        raise EnumerationLimitError(count, cap)
    s1, _, s0, _ = combination_moments(population.y1, population.y0, n1)
    est = s1 / n1 - s0 / (N - n1)
    mean, var = _mean_var(est)
    closed = population.S2_1 / n1 + population.S2_0 / (N - n1) - population.S2_delta / N
    return CompleteEnumeration(count, mean, var, population.delta_fp, closed, est)


@dataclass(frozen=True, eq=False)
class DesignSummary:
    """Exact moments of both estimators and the balance/bias distribution under one design."""

    count: int
    mean_dim: float
    var_dim: float
    mean_sat: float | None
    var_sat: float | None
    max_abs_imbalance: dict[str, int]
    bias_post: np.ndarray
    expected_conditional_variance: float

    @property
    def max_abs_bias_post(self) -> float:
        return float(np.max(np.abs(self.bias_post)))

    @property
    def bias_second_moment(self) -> float:
        return math.fsum(self.bias_post ** 2) / self.bias_post.size

    @property
    def conditional_variance(self) -> float:
        """Var[estimate | X] = E_D[Var(estimate | X, D)] + Var_D(E[estimate | X, D])."""
        b = self.bias_post
        m = math.fsum(b) / b.size
        return self.expected_conditional_variance + math.fsum((b - m) ** 2) / b.size


@dataclass(frozen=True, eq=False)
class StratifiedEnumeration:
    sbr: DesignSummary
    cr: DesignSummary
    delta_fp: float
    expected_variance_identity: float
    levels: tuple[str, ...]


def _conditional_moments(population, conditional: Dgp | None):
    """Per-unit E[Y(d) | X] and Var[Y(d) | X]."""
    if conditional is not None:
        x = population.x[:, 0]
        return (conditional.mean1(x), conditional.mean0(x), conditional.sd1(x) ** 2, conditional.sd0(x) ** 2)
    out = [np.empty(population.N) for _ in range(4)]
    for s in sorted(set(population.stratum.tolist())):
        m = population.stratum == s
        for j, y in enumerate((population.y1, population.y0)):
            out[j][m] = y[m].mean()
            out[j + 2][m] = y[m].var()
    return tuple(out)


def _summarize(moments, n1, N, sat=None):
    """Estimates, conditional means and conditional variances at every assignment."""
    s_y, s_m, s_v = moments
    y1s, _, y0s, _ = s_y
    est = y1s / n1 - y0s / (N - n1)
    m1s, _, m0s, _ = s_m
    v1s, _, v0s, _ = s_v
    cond_mean = m1s / n1 - m0s / (N - n1)
    cond_var = v1s / n1 ** 2 + v0s / (N - n1) ** 2
    mean_dim, var_dim = _mean_var(est)
    if sat is not None:
        mean_sat, var_sat = _mean_var(sat)
    else:
        mean_sat = var_sat = None
    return est, cond_mean, cond_var, mean_dim, var_dim, mean_sat, var_sat


def enumerate_stratified(population: PotentialPopulation, pi_by_stratum=0.5, conditional: Dgp | None = None,
                         cap: int = DEFAULT_CAP) -> StratifiedEnumeration:
    """Stratified block randomization versus complete randomization on one population.

    Both designs treat the same total number of units. For each design the
    result holds the exact mean and variance of the difference in means
    (and of the saturated estimate under stratification), the largest
    absolute stratum imbalance, and the ex-post bias
    ``E[estimate | X, D] - E[m1(X) - m0(X)]`` at every assignment, with
    conditional moments taken from ``conditional`` or, by default, from the
    population's within-stratum means and variances.
    """
    if population.stratum is None:
        raise ValidationError("population needs stratum labels")
    N = population.N
    strata = population.stratum
    levels = tuple(sorted(set(strata.tolist())))
    pis = pi_by_stratum if isinstance(pi_by_stratum, Mapping) else {s: float(pi_by_stratum) for s in levels}
    blocks = []
    for s in levels:
        idx = np.flatnonzero(strata == s)
        k = treated_count(idx.size, float(pis[s]))
        if not 0 < k < idx.size:
            raise ValidationError(f"stratum {s!r}: degenerate treated count {k} of {idx.size}")
        blocks.append((idx, k))
    n1 = sum(k for _, k in blocks)
    cr_count = math.comb(N, n1)
    if cr_count > cap:
        raise EnumerationLimitError(cr_count, cap)

    m1, m0, v1, v0 = _conditional_moments(population, conditional)
    target = float(np.mean(m1 - m0))
    ind = {s: (strata == s).astype(float) for s in levels}

    # stratified design: per-block listings combined by Cartesian sums
    py = per_block_moments(population.y1, population.y0, blocks, cap)
    pm = per_block_moments(m1, m0, blocks, cap)
    pv = per_block_moments(v1, v0, blocks, cap)
    full = [tuple(outer_sum([p[j] for p in parts]) for j in range(4)) for parts in (py, pm, pv)]
    stratum_effects = []
    for (idx, k), p in zip(blocks, py):
        stratum_effects.append(idx.size / N * (p[0] / k - p[2] / (idx.size - k)))
    sat = outer_sum(stratum_effects)
    est, cmean, cvar, md, vd, ms, vs = _summarize(full, n1, N, sat)
    sbr = DesignSummary(est.size, md, vd, ms, vs,
                        {s: abs(2 * k - idx.size) for s, (idx, k) in zip(levels, blocks)},
                        cmean - target, math.fsum(cvar) / cvar.size)

    # complete randomization over the whole population
    full_cr = [combination_moments(a, b, n1) for a, b in
               ((population.y1, population.y0), (m1, m0), (v1, v0))]
    est, cmean, cvar, md, vd, _, _ = _summarize(full_cr, n1, N)
    imb = {}
    for s in levels:
        treated_in_s = combination_moments(ind[s], ind[s], n1)[0]
        imb[s] = int(np.max(np.abs(2 * treated_in_s - ind[s].sum())))
    cr = DesignSummary(est.size, md, vd, None, None, imb, cmean - target, math.fsum(cvar) / cvar.size)

    n0 = N - n1
    identity = (math.fsum(v1) / n1 + math.fsum(v0) / n0) / N
    return StratifiedEnumeration(sbr, cr, population.delta_fp, identity, levels)
