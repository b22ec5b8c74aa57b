"""Exhaustive enumeration of assignments that fix the treated count in each block.

A block is a set of unit indices together with its treated count. Complete
randomization is a single block, stratified randomization has one block per
stratum and matched pairs have one two-unit block per pair. Assignments of
the whole sample are the Cartesian product of the blocks' subsets, listed
with the first block varying slowest.
"""
from __future__ import annotations

from math import comb, prod
from typing import Sequence

import numpy as np

from ._kernels import combination_moments
from .errors import EnumerationLimitError

DEFAULT_CAP = 10 ** 6


def assignment_count(blocks: Sequence[tuple[Sequence[int], int]]) -> int:
    return prod(comb(len(idx), k) for idx, k in blocks)


def outer_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Flattened Cartesian sum, first array varying slowest."""
    out = np.zeros(1)
    for a in arrays:
        out = (out[:, None] + np.asarray(a, dtype=float)[None, :]).ravel()
    return out


def per_block_moments(a, b, blocks, cap: int = DEFAULT_CAP):
    """Kernel moments of every block, one 4-tuple per block."""
    count = assignment_count(blocks)
    if count > cap:
        raise EnumerationLimitError(count, cap)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = []
    for idx, k in blocks:
        idx = np.asarray(idx, dtype=np.intp)
        out.append(combination_moments(a[idx], b[idx], k))
    return out


def block_moments(a, b, blocks, cap: int = DEFAULT_CAP):
    """Whole-sample ``(sum a[T], sum a[T]^2, sum b[C], sum b[C]^2)`` for every assignment."""
    parts = per_block_moments(a, b, blocks, cap)
    return tuple(outer_sum([p[j] for p in parts]) for j in range(4))


def blocks_for(d, strata=None, pair=None):
    """Blocks that preserve the treated counts of ``d`` within strata or pairs."""
    d = np.asarray(d)
    if pair is not None:
        groups = np.asarray(pair)
    elif strata is not None:
        groups = np.array([str(s) for s in strata], dtype=object)
    else:
        return [(np.arange(d.size), int(np.count_nonzero(d == 1)))]
    levels = sorted(set(groups.tolist()))
    return [(np.flatnonzero(groups == g), int(np.count_nonzero(d[groups == g] == 1))) for g in levels]
