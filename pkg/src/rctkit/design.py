"""Treatment assignment under each randomization scheme, plus balance diagnostics.

Treated counts follow the floor rule ``floor(pi * n)``, applied separately in
every stratum for stratified designs. A tolerance of 1e-9 guards the floor
against binary representation error (``0.29 * 100`` is stored as
``28.999999999999996``).
"""
from __future__ import annotations

import math
from typing import Mapping, Sequence

import numpy as np

from .errors import DesignError
from .model import Assignment, DesignSpec
from .rng import as_rng

_FLOOR_TOL = 1e-9


def treated_count(n: int, pi: float) -> int:
    return math.floor(pi * n + _FLOOR_TOL)


def _complete_vector(n, pi, rng, where=""):
    n1 = treated_count(n, pi)
    if n < 2 or n1 < 1 or n1 > n - 1:
        raise DesignError(f"degenerate design{where}: floor({pi} * {n}) = {n1} treated of {n}")
    v = np.zeros(n, dtype=np.int8)
    v[:n1] = 1
    return rng.permutation(v)


def _stratum_order(strata):
    strata = np.array([str(s) for s in strata], dtype=object)
    levels = sorted(set(strata.tolist()))
    return strata, levels


def _pi_lookup(pi_by_stratum, levels):
    if isinstance(pi_by_stratum, Mapping):
        missing = [s for s in levels if s not in {str(k) for k in pi_by_stratum}]
        if missing:
            raise DesignError(f"no assignment probability for stratum {missing[0]!r}")
        table = {str(k): float(v) for k, v in pi_by_stratum.items()}
        return {s: table[s] for s in levels}
    return {s: float(pi_by_stratum) for s in levels}


def assign_complete(n: int, pi: float, rng) -> Assignment:
    """Complete randomization: exactly ``floor(pi n)`` treated, all such vectors equally likely."""
    gen, seed = as_rng(rng)
    d = _complete_vector(int(n), pi, gen)
    return Assignment(d, DesignSpec("complete", pi=pi, seed=seed))


def assign_stratified_block(strata: Sequence, pi_by_stratum, rng) -> Assignment:
    """Complete randomization run independently inside every stratum.

    ``pi_by_stratum`` is a mapping from stratum label to assignment
    probability, or a single probability used in every stratum. Strata are
    visited in lexicographic label order so a seed fixes the assignment.
    """
    gen, seed = as_rng(rng)
    strata, levels = _stratum_order(strata)
    pis = _pi_lookup(pi_by_stratum, levels)
    d = np.zeros(strata.shape[0], dtype=np.int8)
    for s in levels:
        idx = np.flatnonzero(strata == s)
        d[idx] = _complete_vector(idx.size, pis[s], gen, where=f" in stratum {s!r}")
    return Assignment(d, DesignSpec("sbr", pi=None, pi_by_stratum=pis, seed=seed))


def match_pairs(covariates) -> tuple[tuple[int, int], ...]:
    """Pair units by sorting on a one-dimensional covariate score.

    With one covariate the score is the covariate itself; with several it is
    the projection on the first principal direction of the centred
    covariates (sign fixed so the largest loading is positive). Units are
    stably sorted by score, so ties keep their original order, and
    consecutive units are paired. Pairs come out in score order, which makes
    adjacent pairs similar.
    """
    x = np.asarray(covariates, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n, k = x.shape
    if k < 1:
        raise DesignError("matching needs at least one covariate")
    if n % 2:
        raise DesignError(f"matched pairs need an even number of units, got {n}")
    if k == 1:
        score = x[:, 0]
    else:
        xc = x - x.mean(axis=0)
        _, _, vt = np.linalg.svd(xc, full_matrices=False)
        v = vt[0]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        score = xc @ v
    order = np.argsort(score, kind="stable")
    return tuple((int(order[2 * j]), int(order[2 * j + 1])) for j in range(n // 2))


def assign_matched_pairs(pairing, rng) -> Assignment:
    """Treat one unit per pair, chosen by a fair coin independently across pairs."""
    gen, seed = as_rng(rng)
    pairing = tuple((int(a), int(b)) for a, b in pairing)
    if not pairing:
        raise DesignError("empty pairing")
    flat = np.array(pairing).ravel()
    n = flat.size
    if np.unique(flat).size != n or flat.min() < 0 or flat.max() != n - 1:
        raise DesignError("pairing must be a perfect matching of 0..n-1")
    first = gen.integers(0, 2, size=len(pairing), dtype=np.int8)
    d = np.zeros(n, dtype=np.int8)
    a, b = flat[0::2], flat[1::2]
    d[a] = first
    d[b] = 1 - first
    return Assignment(d, DesignSpec("pairs", seed=seed), pairing=pairing)


def assign_clusters(n_clusters: int, design: DesignSpec, rng, strata: Sequence | None = None) -> Assignment:
    """Randomize whole clusters, treating each cluster as a unit.

    ``design.kind`` must be ``cluster`` (complete randomization of clusters)
    or ``cluster-sbr`` (stratified by the per-cluster ``strata`` labels).
    """
    gen, seed = as_rng(rng)
    if design.kind == "cluster":
        d = _complete_vector(int(n_clusters), design.pi, gen)
        return Assignment(d, DesignSpec("cluster", pi=design.pi, seed=seed))
    if design.kind == "cluster-sbr":
        if strata is None or len(strata) != n_clusters:
            raise DesignError("cluster stratified randomization needs one stratum label per cluster")
        pis = design.pi_by_stratum if design.pi_by_stratum is not None else design.pi
        inner = assign_stratified_block(strata, pis, gen)
        return Assignment(inner.d, DesignSpec("cluster-sbr", pi=None,
                                              pi_by_stratum=inner.design.pi_by_stratum, seed=seed))
    raise DesignError(f"assign_clusters needs a cluster design, got {design.kind!r}")


def expand_to_members(assignment: Assignment, member_of) -> np.ndarray:
    """Member-level treatment vector: every member carries its cluster's D_g."""
    return assignment.d[np.asarray(member_of, dtype=np.int64)]


def imbalance(assignment, strata) -> dict[str, int]:
    """Treated minus control count within every stratum, keyed in label order."""
    d = assignment.d if isinstance(assignment, Assignment) else np.asarray(assignment)
    strata, levels = _stratum_order(strata)
    out = {}
    for s in levels:
        ds = d[strata == s]
        out[s] = int(np.count_nonzero(ds == 1) - np.count_nonzero(ds == 0))
    return out
