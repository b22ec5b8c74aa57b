"""Pure numpy implementations of the kernel contract (fallback backend)."""
from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np

_CHUNK = 1 << 16


def combination_moments(a, b, k):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError("a and b must have equal length")
    if k < 0 or k > n:
        raise ValueError("k must lie in [0, n]")
    count = comb(n, k)
    out = [np.empty(count) for _ in range(4)]
    btot = b.sum()
    bsq = (b * b).sum()
    it = combinations(range(n), k)
    start = 0
    while start < count:
        stop = min(start + _CHUNK, count)
        rows = stop - start
        idx = np.fromiter(
            (i for _, c in zip(range(rows), it) for i in c), dtype=np.intp, count=rows * k
        ).reshape(rows, k)
        av = a[idx]
        bv = b[idx]
        out[0][start:stop] = av.sum(axis=1)
        out[1][start:stop] = (av * av).sum(axis=1)
        out[2][start:stop] = btot - bv.sum(axis=1)
        out[3][start:stop] = bsq - (bv * bv).sum(axis=1)
        start = stop
    return tuple(out)


def batch_moments(a, b, d):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    d = np.asarray(d)
    if d.ndim != 2 or d.shape[1] != a.shape[0] or b.shape[0] != a.shape[0]:
        raise ValueError("outcome length does not match assignment width")
    t = d.astype(np.float64)
    c = 1.0 - t
    return (
        d.sum(axis=1, dtype=np.int64),
        t @ a,
        t @ (a * a),
        c @ b,
        c @ (b * b),
    )
