"""Domain types shared across the package.

All containers are frozen dataclasses over numpy arrays; arrays are copied
on construction and flagged read-only so instances can be shared freely
between workers.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .errors import ValidationError

DESIGN_KINDS = ("complete", "sbr", "pairs", "cluster", "cluster-sbr")
ESTIMANDS = ("ATE", "Delta_eq", "Delta_size", "theta")


def _frozen(a, dtype=None):
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def _labels(values, n, what):
    if values is None:
        return None
    arr = np.array([str(v) for v in values], dtype=object)
    if arr.shape != (n,):
        raise ValidationError(f"{what} has length {arr.shape[0]}, expected {n}")
    arr.setflags(write=False)
    return arr


def _optional_int(values, n, what):
    if values is None:
        return None
    arr = np.asarray(values)
    if arr.shape != (n,):
        raise ValidationError(f"{what} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr.astype(float))) or np.any(arr.astype(float) != np.round(arr.astype(float))):
        raise ValidationError(f"{what} must be integers")
    return _frozen(arr, np.int64)


def _covariates(x, n):
    if x is None:
        return _frozen(np.empty((n, 0)))
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[0] != n:
        raise ValidationError(f"covariates must have shape (n, k) with n={n}, got {arr.shape}")
    return _frozen(arr)


def _treatment(d):
    arr = np.asarray(d, dtype=np.float64)
    if np.all(np.isfinite(arr)) and np.all(arr == np.round(arr)):
        return _frozen(arr, np.int64)
    return _frozen(arr)


def _arrays_equal(a, b):
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.array_equal(a, b))


@dataclass(frozen=True, eq=False)
class Sample:
    """Observed experimental data: one row per unit.

    Parameters
    ----------
    y : array_like, shape (n,)
        Observed outcomes.
    d : array_like, shape (n,)
        Treatment indicators, expected in {0, 1}.
    x : array_like, shape (n, k), optional
        Baseline covariates; ``k = 0`` when omitted.
    stratum, pair, cluster : array_like, optional
        Stratum labels (opaque strings), pair ids and cluster ids.
    """

    y: np.ndarray
    d: np.ndarray
    x: np.ndarray | None = None
    stratum: np.ndarray | None = None
    pair: np.ndarray | None = None
    cluster: np.ndarray | None = None

    def __post_init__(self):
        y = _frozen(self.y, np.float64)
        if y.ndim != 1:
            raise ValidationError("outcomes must be one-dimensional")
        n = y.shape[0]
        d = _treatment(self.d)
        if d.shape != (n,):
            raise ValidationError(f"treatment has length {d.shape[0]}, expected {n}")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "x", _covariates(self.x, n))
        object.__setattr__(self, "stratum", _labels(self.stratum, n, "stratum"))
        object.__setattr__(self, "pair", _optional_int(self.pair, n, "pair"))
        object.__setattr__(self, "cluster", _optional_int(self.cluster, n, "cluster"))

    def __eq__(self, other):
        if not isinstance(other, Sample):
            return NotImplemented
        return all(
            _arrays_equal(getattr(self, f), getattr(other, f))
            for f in ("y", "d", "x", "stratum", "pair", "cluster")
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def treated(self) -> np.ndarray:
        return self.d == 1

    @property
    def n1(self) -> int:
        return int(np.count_nonzero(self.d == 1))

    @property
    def n0(self) -> int:
        return int(np.count_nonzero(self.d == 0))

    def strata_levels(self) -> list[str]:
        """Distinct stratum labels in lexicographic order."""
        if self.stratum is None:
            return []
        return sorted(set(self.stratum.tolist()))

    def replace(self, **changes) -> "Sample":
        fields = {f: getattr(self, f) for f in ("y", "d", "x", "stratum", "pair", "cluster")}
        fields.update(changes)
        return Sample(**fields)


class Violation(NamedTuple):
    index: int | None
    rule: str
    detail: str = ""


def validate(sample: Sample) -> list[Violation]:
    """Report every invariant violation of ``sample``; empty when valid."""
    out: list[Violation] = []
    for i in np.flatnonzero(~np.isfinite(sample.y)):
        out.append(Violation(int(i), "missing outcome"))
    bad_d = ~np.isin(sample.d, (0, 1))
    for i in np.flatnonzero(bad_d):
        out.append(Violation(int(i), "treatment not binary", f"value {sample.d[i]!r}"))
    if sample.k:
        for i in np.flatnonzero(~np.all(np.isfinite(sample.x), axis=1)):
            out.append(Violation(int(i), "non-finite covariate"))
    if sample.stratum is not None:
        for i, s in enumerate(sample.stratum):
            if s == "" or s.lower() == "nan":
                out.append(Violation(i, "missing stratum"))
    if sample.pair is not None:
        ids, first, counts = np.unique(sample.pair, return_index=True, return_counts=True)
        for pid, i0, c in zip(ids, first, counts):
            members = np.flatnonzero(sample.pair == pid)
            if c == 1:
                out.append(Violation(int(i0), "incomplete pair", f"pair {pid} appears once"))
            elif c > 2:
                out.append(Violation(int(members[2]), "oversized pair", f"pair {pid} appears {c} times"))
            elif not bad_d[members].any() and sample.d[members].sum() != 1:
                out.append(Violation(int(i0), "pair not split", f"pair {pid} lacks one treated and one control"))
    if not bad_d.any():
        if sample.n1 == 0:
            out.append(Violation(None, "empty arm", "no treated units"))
        if sample.n0 == 0:
            out.append(Violation(None, "empty arm", "no control units"))
    return out


@dataclass(frozen=True, eq=False)
class PotentialPopulation:
    """Both potential outcomes for every unit of a finite population."""

    y1: np.ndarray
    y0: np.ndarray
    x: np.ndarray | None = None
    stratum: np.ndarray | None = None

    def __post_init__(self):
        y1 = _frozen(self.y1, np.float64)
        y0 = _frozen(self.y0, np.float64)
        if y1.ndim != 1 or y1.shape != y0.shape:
            raise ValidationError("y1 and y0 must be one-dimensional and of equal length")
        n = y1.shape[0]
        object.__setattr__(self, "y1", y1)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "x", _covariates(self.x, n))
        object.__setattr__(self, "stratum", _labels(self.stratum, n, "stratum"))

    @property
    def N(self) -> int:
        return self.y1.shape[0]

    @property
    def delta_fp(self) -> float:
        return float(np.mean(self.y1) - np.mean(self.y0))

    @property
    def S2_1(self) -> float:
        return float(np.var(self.y1, ddof=1))

    @property
    def S2_0(self) -> float:
        return float(np.var(self.y0, ddof=1))

    @property
    def S2_delta(self) -> float:
        return float(np.var(self.y1 - self.y0, ddof=1))

    def observe(self, d) -> Sample:
        d = np.asarray(d)
        y = np.where(d == 1, self.y1, self.y0)
        return Sample(y, d, self.x, stratum=self.stratum)


def _check_pi(pi, what="pi"):
    pi = float(pi)
    if not 0.0 < pi < 1.0:
        raise ValidationError(f"{what} must lie strictly inside (0, 1), got {pi}")
    return pi


@dataclass(frozen=True)
class DesignSpec:
    """A randomization scheme plus the seed that realizes it.

    ``kind`` is one of ``complete``, ``sbr``, ``pairs``, ``cluster`` and
    ``cluster-sbr``. Complete designs carry ``pi``; stratified ones carry
    ``pi_by_stratum`` (a plain ``pi`` is broadcast to every stratum).
    """

    kind: str
    pi: float | None = 0.5
    pi_by_stratum: Mapping[str, float] | None = None
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValidationError(f"unknown design kind {self.kind!r}")
        if self.kind == "pairs":
            object.__setattr__(self, "pi", 0.5)
        if self.pi is not None:
            object.__setattr__(self, "pi", _check_pi(self.pi))
        if self.pi_by_stratum is not None:
            pbs = {str(k): _check_pi(v, f"pi for stratum {k}") for k, v in sorted(self.pi_by_stratum.items())}
            object.__setattr__(self, "pi_by_stratum", pbs)
        if self.pi is None and self.pi_by_stratum is None:
            raise ValidationError("design needs pi or pi_by_stratum")
        if self.seed is not None:
            object.__setattr__(self, "seed", int(self.seed) & 0xFFFFFFFFFFFFFFFF)

    @property
    def stratified(self) -> bool:
        return self.kind in ("sbr", "cluster-sbr")

    def pi_for(self, label) -> float:
        if self.pi_by_stratum is not None and str(label) in self.pi_by_stratum:
            return self.pi_by_stratum[str(label)]
        if self.pi is None:
            raise ValidationError(f"no assignment probability for stratum {label!r}")
        return self.pi


@dataclass(frozen=True, eq=False)
class Assignment:
    """One realized 0/1 assignment vector with its design metadata."""

    d: np.ndarray
    design: DesignSpec | None = None
    pairing: tuple[tuple[int, int], ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "d", _frozen(self.d, np.int8))
        if self.pairing is not None:
            object.__setattr__(self, "pairing", tuple((int(i), int(j)) for i, j in self.pairing))

    def __eq__(self, other):
        if not isinstance(other, Assignment):
            return NotImplemented
        return (
            np.array_equal(self.d, other.d)
            and self.design == other.design
            and self.pairing == other.pairing
        )

    __hash__ = None

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def n1(self) -> int:
        return int(self.d.sum())

    def pair_ids(self) -> np.ndarray | None:
        """Per-unit pair id (position of the pair in ``pairing``)."""
        if self.pairing is None:
            return None
        ids = np.full(self.n, -1, dtype=np.int64)
        for j, (a, b) in enumerate(self.pairing):
            ids[a] = ids[b] = j
        return ids


@dataclass(frozen=True, eq=False)
class ClusterSample:
    """Cluster-level data with sampled member outcomes.

    Cluster arrays (``cluster_id``, ``d``, ``size``, ``stratum``) have length
    ``G`` and are ordered by cluster id; ``y`` holds the sampled members'
    outcomes and ``member_of[i]`` the position of member ``i``'s cluster.
    ``size`` holds the true cluster sizes N_g and may be missing.
    """

    cluster_id: np.ndarray
    d: np.ndarray
    y: np.ndarray
    member_of: np.ndarray
    size: np.ndarray | None = None
    stratum: np.ndarray | None = None
    counts: np.ndarray = field(init=False, repr=False)
    means: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cid = _frozen(self.cluster_id, np.int64)
        G = cid.shape[0]
        d = _treatment(self.d)
        y = _frozen(self.y, np.float64)
        member_of = _frozen(self.member_of, np.int64)
        if d.shape != (G,):
            raise ValidationError("cluster treatment must have one entry per cluster")
        if member_of.shape != y.shape or (member_of.size and (member_of.min() < 0 or member_of.max() >= G)):
            raise ValidationError("member_of must index clusters for every member outcome")
        counts = np.bincount(member_of, minlength=G)
        if np.any(counts == 0):
            g = int(cid[np.flatnonzero(counts == 0)[0]])
            raise ValidationError(f"cluster {g} has no sampled members")
        size = None
        if self.size is not None:
            size = _frozen(self.size, np.float64)
            if size.shape != (G,):
                raise ValidationError("cluster sizes must have one entry per cluster")
            bad = np.flatnonzero(~(size >= counts))
            if bad.size:
                g = int(cid[bad[0]])
                raise ValidationError(f"cluster {g}: sampled members exceed cluster size N_g")
        means = np.bincount(member_of, weights=y, minlength=G) / counts
        means.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "cluster_id", cid)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "member_of", member_of)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "stratum", _labels(self.stratum, G, "cluster stratum"))
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "means", means)

    @classmethod
    def from_rows(cls, cluster, y, d, size=None, stratum=None) -> "ClusterSample":
        """Group individual rows into clusters, checking within-cluster consistency."""
        cluster = np.asarray(cluster, dtype=np.int64)
        y = np.asarray(y, dtype=np.float64)
        d = np.asarray(d)
        ids, member_of = np.unique(cluster, return_inverse=True)
        G = ids.shape[0]
        first = np.zeros(G, dtype=np.int64)
        first[member_of[::-1]] = np.arange(len(cluster))[::-1]

        def per_cluster(values, what):
            if values is None:
                return None
            values = np.asarray(values)
            out = values[first]
            diff = np.flatnonzero(values != out[member_of])
            if diff.size:
                g = int(ids[member_of[diff[0]]])
                raise ValidationError(f"cluster {g}: inconsistent {what} across rows")
            return out

        dg = per_cluster(d, "treatment")
        sg = per_cluster(None if size is None else np.asarray(size, dtype=np.float64), "cluster_size")
        st = per_cluster(None if stratum is None else np.array([str(s) for s in stratum], dtype=object), "stratum")
        return cls(ids, dg, y, member_of, size=sg, stratum=st)

    def __eq__(self, other):
        if not isinstance(other, ClusterSample):
            return NotImplemented
        return all(
            _arrays_equal(getattr(self, f), getattr(other, f))
            for f in ("cluster_id", "d", "y", "member_of", "size", "stratum")
        )

    __hash__ = None

    @property
    def G(self) -> int:
        return self.cluster_id.shape[0]

    @property
    def n(self) -> int:
        return self.y.shape[0]

    def rows(self) -> Sample:
        """Individual-level view: one row per sampled member, cluster-level D."""
        return Sample(self.y, self.d[self.member_of], cluster=self.cluster_id[self.member_of],
                      stratum=None if self.stratum is None else self.stratum[self.member_of])

    def cluster_level(self) -> Sample:
        """Clusters as units with outcome equal to the sampled-member mean."""
        return Sample(self.means, self.d, stratum=self.stratum)


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate, variance estimates and interval for one analysis."""

    estimand: str
    point: float
    variance_estimates: Mapping[str, float]
    se: float
    ci: tuple[float, float]
    level: float
    n: int
    method: str
    variance_method: str
    diagnostics: Mapping[str, object] = field(default_factory=dict)
    warnings: Sequence[str] = ()

    REPORT_KEYS = ("estimand", "point", "se", "ci", "level", "n", "method",
                   "variance_method", "diagnostics", "warnings")

    def to_dict(self) -> dict:
        diagnostics = dict(self.diagnostics)
        diagnostics["variance_estimates"] = dict(self.variance_estimates)
        return {
            "estimand": self.estimand,
            "point": self.point,
            "se": self.se,
            "ci": [self.ci[0], self.ci[1]],
            "level": self.level,
            "n": self.n,
            "method": self.method,
            "variance_method": self.variance_method,
            "diagnostics": diagnostics,
            "warnings": list(self.warnings),
        }
