"""Randomization tests of the sharp null of no effect for any unit.

Under the sharp null the observed outcomes are every unit's outcomes under
either arm, so the reference distribution comes from re-drawing the
assignment from the design and recomputing the statistic on the same Y.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from ._kernels import batch_moments
from .blocks import DEFAULT_CAP, assignment_count, block_moments, blocks_for
from .errors import DesignError, EstimationError
from .model import DesignSpec, Sample
from .rng import as_rng

MIN_DRAWS = 99
_TIE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class PermutationResult:
    p_value: float
    observed: float
    reference: np.ndarray
    exhaustive: bool
    statistic: str

    @property
    def draws(self) -> int:
        return self.reference.size


def _abs_dim(n1, s1, q1, s0, q0, n):
    n0 = n - n1
    return np.abs(s1 / n1 - s0 / n0)


def _abs_t(n1, s1, q1, s0, q0, n):
    n0 = n - n1
    v1 = (q1 - s1 * s1 / n1) / (n1 - 1)
    v0 = (q0 - s0 * s0 / n0) / (n0 - 1)
    se = np.sqrt(np.maximum(v1, 0.0) / n1 + np.maximum(v0, 0.0) / n0)
    dim = np.abs(s1 / n1 - s0 / n0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, dim / np.where(se > 0, se, 1.0), np.where(dim > 0, np.inf, 0.0))
    return t


STATISTICS: dict[str, Callable] = {"dim": _abs_dim, "studentized": _abs_t}


def _moments_of(y, d):
    d = np.asarray(d)
    t = d == 1
    yt, yc = y[t], y[~t]
    return int(t.sum()), yt.sum(), (yt * yt).sum(), yc.sum(), (yc * yc).sum()


def _resample(d, kind, sample, B, gen):
    """B design-respecting re-draws of the observed assignment, as an int8 matrix."""
    d = np.asarray(d, dtype=np.int8)
    if kind == "complete":
        return gen.permuted(np.tile(d, (B, 1)), axis=1)
    if kind == "sbr":
        out = np.empty((B, d.size), dtype=np.int8)
        for idx, _ in blocks_for(d, strata=sample.stratum):
            out[:, idx] = gen.permuted(np.tile(d[idx], (B, 1)), axis=1)
        return out
    out = np.empty((B, d.size), dtype=np.int8)
    for idx, _ in blocks_for(d, pair=sample.pair):
        first = gen.integers(0, 2, size=B, dtype=np.int8)
        out[:, idx[0]] = first
        out[:, idx[1]] = 1 - first
    return out


def _count_at_least(ref, observed):
    """Count of reference values >= observed, with a relative tolerance for float ties."""
    if not np.isfinite(observed):
        return int(np.count_nonzero(ref >= observed))
    return int(np.count_nonzero(ref >= observed - _TIE_TOL * max(1.0, abs(observed))))


def _check(sample, kind):
    if kind not in ("complete", "sbr", "pairs"):
        raise DesignError(f"randomization test supports complete, sbr and pairs designs, not {kind!r}")
    if sample.n1 < 1 or sample.n0 < 1 or sample.n1 + sample.n0 != sample.n:
        raise EstimationError("treatment must be binary with both arms nonempty")
    if kind == "sbr" and sample.stratum is None:
        raise DesignError("stratified resampling needs stratum labels")
    if kind == "pairs":
        if sample.pair is None:
            raise DesignError("pair resampling needs pair ids")
        for idx, k in blocks_for(sample.d, pair=sample.pair):
            if idx.size != 2 or k != 1:
                raise DesignError("every pair must hold one treated and one control unit")


def permutation_test(
    sample: Sample,
    design: DesignSpec | str,
    statistic: str = "dim",
    B: int = 999,
    rng=None,
    exhaustive: bool | str = False,
    cap: int = DEFAULT_CAP,
) -> PermutationResult:
    """Randomization p-value for the sharp null of no effect.

    Parameters
    ----------
    sample : Sample
    design : DesignSpec or str
        ``complete``, ``sbr`` (resample within strata) or ``pairs`` (flip
        within pairs).
    statistic : {"dim", "studentized"}
        Absolute difference in means, or that divided by its robust
        standard error.
    B : int
        Number of re-draws, at least 99; ignored in exhaustive mode.
    rng : Generator or int
        Required unless the test is exhaustive.
    exhaustive : bool or "auto"
        Enumerate every assignment of the design instead of sampling.
        ``"auto"`` enumerates when the count is at most ``cap``.

    Returns
    -------
    PermutationResult
        Sampled mode uses ``p = (1 + #{T_b >= T}) / (B + 1)``, exhaustive
        mode the exact share ``#{T_a >= T} / #assignments``. The
        reference distribution is returned sorted.
    """
    kind = design.kind if isinstance(design, DesignSpec) else str(design)
    _check(sample, kind)
    try:
        stat = STATISTICS[statistic]
    except KeyError:
        raise EstimationError(f"unknown statistic {statistic!r}; choose from {sorted(STATISTICS)}") from None
    if statistic == "studentized" and min(sample.n1, sample.n0) < 2:
        raise EstimationError("the studentized statistic needs at least 2 units per arm")
    y = sample.y
    n = sample.n
    observed = float(stat(*_moments_of(y, sample.d), n))
    blocks = blocks_for(sample.d, strata=sample.stratum if kind == "sbr" else None,
                        pair=sample.pair if kind == "pairs" else None)
    if exhaustive == "auto":
        exhaustive = assignment_count(blocks) <= cap
    if exhaustive:
        s1, q1, s0, q0 = block_moments(y, y, blocks, cap)
        ref = np.sort(stat(sample.n1, s1, q1, s0, q0, n))
        hits = _count_at_least(ref, observed)
        return PermutationResult(hits / ref.size, observed, ref, True, statistic)
    if B < MIN_DRAWS:
        raise EstimationError(f"B must be at least {MIN_DRAWS}, got {B}")
    gen, _ = as_rng(rng)
    draws = _resample(sample.d, kind, sample, int(B), gen)
    n1, s1, q1, s0, q0 = batch_moments(y, y, draws)
    ref = np.sort(stat(n1, s1, q1, s0, q0, n))
    hits = _count_at_least(ref, observed)
    return PermutationResult((1 + hits) / (B + 1), observed, ref, False, statistic)
