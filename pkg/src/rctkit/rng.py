"""Seeded random streams.

Every stream is a Philox-4x64 counter-based generator keyed through
:class:`numpy.random.SeedSequence`, so a seed reproduces the same draws on
any platform. Independent sub-streams come from ``split(seed, i)``, which
uses ``SeedSequence(seed, spawn_key=(i,))``; stream ``i`` does not depend on
how many other streams were created, so replications can run in any order.
"""
from __future__ import annotations

import numpy as np


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def split(seed: int, index: int) -> np.random.Generator:
    """The ``index``-th independent child stream of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))


def as_rng(rng) -> tuple[np.random.Generator, int | None]:
    """Accept a generator or an integer seed; return ``(generator, seed or None)``."""
    if isinstance(rng, np.random.Generator):
        return rng, None
    if rng is None:
        raise TypeError("an explicit seed or generator is required")
    return make_rng(int(rng)), int(rng)
