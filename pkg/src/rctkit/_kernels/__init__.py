"""Hot loops behind enumeration and re-randomization.

Two backends implement the same contract:

``combination_moments(a, b, k)``
    For every ``k``-subset ``S`` of ``range(len(a))`` in lexicographic order
    (the order of :func:`itertools.combinations`) return four arrays:
    ``sum(a[S])``, ``sum(a[S]**2)``, ``sum(b[~S])`` and ``sum(b[~S]**2)``.

``batch_moments(a, b, d)``
    For each row of the 0/1 ``int8`` matrix ``d`` return the treated count and
    the same four moments, with ``S`` the set of ones in the row.

The compiled backend is used when importable; set ``RCTKIT_PURE_PYTHON=1`` to
force the numpy fallback.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels as pure

if os.environ.get("RCTKIT_PURE_PYTHON"):
    compiled = None
else:
    try:
        from . import _ckernels as compiled
    except ImportError:  # extension not built
        compiled = None

_impl = compiled if compiled is not None else pure
BACKEND = "cython" if compiled is not None else "numpy"


def combination_moments(a, b, k):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    return _impl.combination_moments(a, b, int(k))


def batch_moments(a, b, d):
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.int8)
    return _impl.batch_moments(a, b, d)


__all__ = ["BACKEND", "batch_moments", "combination_moments", "compiled", "pure"]
