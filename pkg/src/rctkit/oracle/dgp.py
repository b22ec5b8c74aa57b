"""Data-generating processes with known conditional moments.

A :class:`Dgp` draws a scalar covariate X, then potential outcomes
``Y(d) = m_d(X) + s_d(X) e_d`` with standard normal noise whose correlation
across arms is ``rho``. X is either discrete on a finite support or uniform
on an interval cut into equal-width bins, the bins serving as strata.

A :class:`ClusterDgp` draws cluster sizes N_g, a shared cluster effect and
member-level noise, and samples ``|M_g|`` members per cluster.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from ..errors import ValidationError
from ..model import PotentialPopulation

_QUADRATURE_POINTS = 64


def _label(v) -> str:
    return format(float(v), "g")


def _table_function(values, table, what):
    values = np.asarray(values, dtype=float)
    table = np.asarray(table, dtype=float)
    if table.shape != values.shape:
        raise ValidationError(f"{what} table needs one entry per support point")
    order = np.argsort(values)
    sv, st = values[order], table[order]

    def f(x):
        x = np.asarray(x, dtype=float)
        pos = np.clip(np.searchsorted(sv, x), 0, sv.size - 1)
        if not np.all(sv[pos] == x):
            raise ValidationError(f"{what}: value outside the discrete support")
        return st[pos]

    return f


def _as_function(spec, what, support=None) -> Callable[[np.ndarray], np.ndarray]:
    """Scalar -> constant; sequence -> table over ``support`` or polynomial coefficients; callable as is."""
    if callable(spec):
        return lambda x: np.asarray(spec(np.asarray(x, dtype=float)), dtype=float) * np.ones(np.shape(x))
    arr = np.asarray(spec, dtype=float)
    if arr.ndim == 0:
        c = float(arr)
        return lambda x: np.full(np.shape(x), c)
    if support is not None:
        return _table_function(support, arr, what)
    poly = Polynomial(arr)
    return lambda x: poly(np.asarray(x, dtype=float))


@dataclass(frozen=True, eq=False)
class Draw:
    x: np.ndarray
    stratum: np.ndarray
    y1: np.ndarray
    y0: np.ndarray


@dataclass(frozen=True, eq=False)
class Dgp:
    """Super-population law of (X, Y(1), Y(0)) with a scalar covariate.

    Build with :meth:`discrete` or :meth:`uniform`; the fields hold the
    evaluated callables.
    """

    kind: str
    mean1: Callable
    mean0: Callable
    sd1: Callable
    sd0: Callable
    rho: float = 0.0
    values: np.ndarray | None = None
    probs: np.ndarray | None = None
    labels: tuple[str, ...] | None = None
    low: float | None = None
    high: float | None = None
    bins: int = 1

    @classmethod
    def discrete(cls, values: Sequence[float], probs: Sequence[float], mean1, mean0, sd1=1.0, sd0=1.0,
                 rho: float = 0.0, strata: Sequence[str] | None = None) -> "Dgp":
        """Discrete covariate; sequence-valued moments are tables indexed like ``values``."""
        values = np.asarray(values, dtype=float)
        probs = np.asarray(probs, dtype=float)
        if values.ndim != 1 or probs.shape != values.shape or np.unique(values).size != values.size:
            raise ValidationError("support values must be distinct and match the probabilities")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("probabilities must be nonnegative and sum to 1")
        labels = tuple(str(s) for s in strata) if strata is not None else tuple(_label(v) for v in values)
        if len(labels) != values.size:
            raise ValidationError("one stratum label per support point is required")
        dgp = cls("discrete", *(_as_function(s, w, values) for s, w in
                                ((mean1, "mean1"), (mean0, "mean0"), (sd1, "sd1"), (sd0, "sd0"))),
                  rho=float(rho), values=values, probs=probs, labels=labels)
        dgp._check()
        return dgp

    @classmethod
    def uniform(cls, low: float, high: float, mean1, mean0, sd1=1.0, sd0=1.0, rho: float = 0.0,
                bins: int = 4) -> "Dgp":
        """Uniform covariate on ``(low, high)``; sequence-valued moments are polynomial coefficients."""
        if not high > low or bins < 1:
            raise ValidationError("uniform covariate needs low < high and at least one bin")
        dgp = cls("uniform", *(_as_function(s, w) for s, w in
                               ((mean1, "mean1"), (mean0, "mean0"), (sd1, "sd1"), (sd0, "sd0"))),
                  rho=float(rho), low=float(low), high=float(high), bins=int(bins))
        dgp._check()
        return dgp

    def _check(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValidationError("noise correlation must lie in [-1, 1]")
        x, _, _ = self.nodes()
        if np.any(self.sd1(x) < 0) or np.any(self.sd0(x) < 0):
            raise ValidationError("noise scales must be nonnegative")

    def _bin_labels(self):
        width = len(str(self.bins - 1))
        return tuple(f"b{j:0{width}d}" for j in range(self.bins))

    def nodes(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Quadrature nodes, weights and stratum labels for expectations over X.

        Exact for discrete X; Gauss-Legendre per bin for uniform X, exact for
        polynomial moments of degree below 128.
        """
        if self.kind == "discrete":
            return self.values, self.probs, np.array(self.labels, dtype=object)
        t, w = np.polynomial.legendre.leggauss(_QUADRATURE_POINTS)
        edges = np.linspace(self.low, self.high, self.bins + 1)
        xs, ws, ls = [], [], []
        for j, lab in enumerate(self._bin_labels()):
            a, b = edges[j], edges[j + 1]
            xs.append((a + b) / 2 + (b - a) / 2 * t)
            ws.append(w / 2 / self.bins)
            ls.append(np.full(t.size, lab, dtype=object))
        return np.concatenate(xs), np.concatenate(ws), np.concatenate(ls)

    def stratum_of(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "discrete":
            order = np.argsort(self.values)
            pos = order[np.clip(np.searchsorted(self.values[order], x), 0, self.values.size - 1)]
            return np.array(self.labels, dtype=object)[pos]
        j = np.clip(((x - self.low) / (self.high - self.low) * self.bins).astype(int), 0, self.bins - 1)
        return np.array(self._bin_labels(), dtype=object)[j]

    def draw(self, n: int, rng: np.random.Generator) -> Draw:
        if self.kind == "discrete":
            idx = rng.choice(self.values.size, size=n, p=self.probs)
            x = self.values[idx]
            stratum = np.array(self.labels, dtype=object)[idx]
        else:
            x = rng.uniform(self.low, self.high, size=n)
            stratum = self.stratum_of(x)
        e = rng.standard_normal((2, n))
        e1 = e[0]
        e0 = self.rho * e[0] + np.sqrt(1.0 - self.rho ** 2) * e[1]
        y1 = self.mean1(x) + self.sd1(x) * e1
        y0 = self.mean0(x) + self.sd0(x) * e0
        return Draw(x, stratum, y1, y0)

    def population(self, N: int, rng: np.random.Generator) -> PotentialPopulation:
        dr = self.draw(N, rng)
        return PotentialPopulation(dr.y1, dr.y0, dr.x, stratum=dr.stratum)

    def expect(self, f) -> float:
        x, w, _ = self.nodes()
        return float(np.dot(w, f(x)))

    @property
    def ate(self) -> float:
        return self.expect(lambda x: self.mean1(x) - self.mean0(x))

    def outcome_variance(self, arm: int) -> float:
        m, s = (self.mean1, self.sd1) if arm == 1 else (self.mean0, self.sd0)
        mu = self.expect(m)
        return self.expect(lambda x: s(x) ** 2 + (m(x) - mu) ** 2)

    @property
    def effect_variance(self) -> float:
        """Var[Y(1) - Y(0)]."""
        tau = self.ate
        return self.expect(lambda x: (self.mean1(x) - self.mean0(x) - tau) ** 2
                           + self.sd1(x) ** 2 + self.sd0(x) ** 2 - 2 * self.rho * self.sd1(x) * self.sd0(x))


@dataclass(frozen=True, eq=False)
class ClusterDraw:
    size: np.ndarray
    stratum: np.ndarray
    member_of: np.ndarray
    y1: np.ndarray
    y0: np.ndarray


@dataclass(frozen=True, eq=False)
class ClusterDgp:
    """Clusters with random sizes and size-dependent effects.

    Parameters
    ----------
    sizes, size_probs : sequences
        Support and law of the cluster size N_g.
    mean1, mean0 : scalar, sequence or callable
        Cluster mean outcome by arm as a function of N_g (sequences are
        tables indexed like ``sizes``).
    cluster_sd, unit_sd : float
        Scale of the cluster effect shared by all members and both arms,
        and of member noise (also shared across arms).
    members : int, optional
        Sample ``min(members, N_g)`` members; all members when omitted.
    strata : sequence of str, optional
        Stratum label per size value; defaults to the size itself.
    """

    sizes: np.ndarray
    size_probs: np.ndarray
    mean1: Callable
    mean0: Callable
    cluster_sd: float = 0.0
    unit_sd: float = 1.0
    members: int | None = None
    labels: tuple[str, ...] = ()

    @classmethod
    def build(cls, sizes, size_probs, mean1, mean0, cluster_sd=0.0, unit_sd=1.0, members=None,
              strata=None) -> "ClusterDgp":
        sizes = np.asarray(sizes, dtype=float)
        probs = np.asarray(size_probs, dtype=float)
        if sizes.ndim != 1 or probs.shape != sizes.shape or np.any(sizes < 1) or np.any(sizes != np.round(sizes)):
            raise ValidationError("cluster sizes must be positive integers with one probability each")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValidationError("size probabilities must be nonnegative and sum to 1")
        if cluster_sd < 0 or unit_sd < 0:
            raise ValidationError("noise scales must be nonnegative")
        if members is not None and members < 1:
            raise ValidationError("at least one member per cluster must be sampled")
        labels = tuple(str(s) for s in strata) if strata is not None else tuple(_label(v) for v in sizes)
        return cls(sizes, probs, _as_function(mean1, "mean1", sizes), _as_function(mean0, "mean0", sizes),
                   float(cluster_sd), float(unit_sd), members, labels)

    def sampled(self, N) -> np.ndarray:
        N = np.asarray(N, dtype=float)
        return N if self.members is None else np.minimum(N, self.members)

    def _e(self, f) -> float:
        return float(np.dot(self.size_probs, f(self.sizes)))

    @property
    def delta_eq(self) -> float:
        return self._e(lambda N: self.mean1(N) - self.mean0(N))

    @property
    def delta_size(self) -> float:
        return self._e(lambda N: N * (self.mean1(N) - self.mean0(N))) / self._e(lambda N: N)

    @property
    def theta(self) -> float:
        return self._e(lambda N: self.sampled(N) * (self.mean1(N) - self.mean0(N))) / self._e(self.sampled)

    def draw(self, G: int, rng: np.random.Generator) -> ClusterDraw:
        idx = rng.choice(self.sizes.size, size=G, p=self.size_probs)
        N = self.sizes[idx]
        M = self.sampled(N).astype(np.int64)
        member_of = np.repeat(np.arange(G), M)
        u = self.cluster_sd * rng.standard_normal(G)
        e = self.unit_sd * rng.standard_normal(member_of.size)
        Nm = N[member_of]
        shared = u[member_of] + e
        return ClusterDraw(N, np.array(self.labels, dtype=object)[idx], member_of,
                           self.mean1(Nm) + shared, self.mean0(Nm) + shared)
