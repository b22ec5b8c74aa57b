"""Super-population versus finite-population variance of the difference in means.

A sample of n units is drawn without replacement from a finite population
of N units, itself drawn from a :class:`Dgp`; treatment is then completely
randomized within the sample. The super-population variance is
``sigma1^2/n1 + sigma0^2/n0``. The finite-population variance holds the
population fixed. Scaled by n, their difference tends to
``lambda Var[Y(1) - Y(0)]`` with ``lambda = n / N``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .._kernels import batch_moments
from ..design import treated_count
from ..errors import ValidationError
from ..rng import split
from .dgp import Dgp


@dataclass(frozen=True)
class SamplingRegime:
    n: int
    N: int

    def __post_init__(self):
        if not 0 < self.n <= self.N:
            raise ValidationError(f"need 0 < n <= N, got n={self.n}, N={self.N}")

    @property
    def fraction(self) -> float:
        return self.n / self.N


@dataclass(frozen=True)
class GapReport:
    regime: SamplingRegime
    populations: int
    reps: int
    n_var_super: float
    n_var_fp: float
    n_var_fp_mcse: float
    gap: float
    gap_mcse: float
    gap_closed_form: float
    predicted: float


def _fp_draws(y1, y0, n, n1, reps, rng):
    """``reps`` differences in means from subsample-then-randomize draws on a fixed population."""
    N = y1.size
    if n == N:
        base = np.zeros(N, dtype=np.int8)
        base[:n1] = 1
        d = rng.permuted(np.tile(base, (reps, 1)), axis=1)
        _, s1, _, s0, _ = batch_moments(y1, y0, d)
        return s1 / n1 - s0 / (n - n1)
    out = np.empty(reps)
    for r in range(reps):
        idx = rng.choice(N, size=n, replace=False)
        t, c = idx[:n1], idx[n1:]
        out[r] = y1[t].mean() - y0[c].mean()
    return out


def finite_pop_gap(dgp: Dgp, n: int, N: int, populations: int = 20, reps: int = 2000, seed: int = 0,
                   pi: float = 0.5) -> GapReport:
    """Estimate ``n (Var_super - Var_fp)`` by simulation and compare with its limit.

    Population ``p`` is drawn from ``split(seed, p)``; its finite-population
    variance is the empirical variance of ``reps`` re-drawn samples and
    assignments. ``gap_closed_form`` averages the exact fixed-population
    variance ``S1^2/n1 + S0^2/n0 - S_delta^2/N`` instead.
    """
    regime = SamplingRegime(int(n), int(N))
    n1 = treated_count(regime.n, pi)
    n0 = regime.n - n1
    if n1 < 1 or n0 < 1:
        raise ValidationError("both arms must be nonempty")
    if populations < 2 or reps < 2:
        raise ValidationError("need at least 2 populations and 2 replications")
    var_super = dgp.outcome_variance(1) / n1 + dgp.outcome_variance(0) / n0
    sims, closed = [], []
    for p in range(populations):
        rng = split(seed, p)
        pop = dgp.population(regime.N, rng)
        draws = _fp_draws(pop.y1, pop.y0, regime.n, n1, reps, rng)
        m = math.fsum(draws) / reps
        sims.append(regime.n * math.fsum((draws - m) ** 2) / (reps - 1))
        closed.append(regime.n * (pop.S2_1 / n1 + pop.S2_0 / n0 - pop.S2_delta / regime.N))
    sims = np.array(sims)
    fp = math.fsum(sims) / populations
    fp_se = math.sqrt(math.fsum((sims - fp) ** 2) / (populations - 1) / populations)
    n_super = regime.n * var_super
    return GapReport(regime, populations, reps, n_super, fp, fp_se, n_super - fp, fp_se,
                     n_super - math.fsum(closed) / populations, regime.fraction * dgp.effect_variance)
