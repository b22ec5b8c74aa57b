"""One-call analysis: point estimate, matching variance, interval and report.

Each estimator admits only the variance methods that are valid for it:

============  =====================================================
estimator     variance methods
============  =====================================================
dim           robust, sbr, strat-fp, pairs, finite-pop[:N][,improved]
sat           sbr, strat-fp
pooled        hc
lin, aipw     influence
cluster-eq    cluster-eq
cluster-size  cluster-size
============  =====================================================

``auto`` picks the most specific method the data support: pairs when pair
ids are present, the stratified variance when strata are present, the
cluster method for cluster estimators and ``robust`` otherwise.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import estimate as est
from . import variance as var
from .errors import EstimationError, IncompatibleError
from .model import ClusterSample, EstimateReport, Sample

ESTIMATOR_NAMES = ("dim", "sat", "pooled", "lin", "aipw", "cluster-eq", "cluster-size")
VARIANCE_NAMES = ("auto", "robust", "sbr", "strat-fp", "pairs", "cluster-eq", "cluster-size",
                  "finite-pop", "influence", "hc")

COMPATIBLE = {
    "dim": ("robust", "sbr", "strat-fp", "pairs", "finite-pop"),
    "sat": ("sbr", "strat-fp"),
    "pooled": ("hc",),
    "lin": ("influence",),
    "aipw": ("influence",),
    "cluster-eq": ("cluster-eq",),
    "cluster-size": ("cluster-size",),
}

ESTIMANDS = {"cluster-eq": "Delta_eq", "cluster-size": "Delta_size"}


@dataclass(frozen=True)
class VarianceChoice:
    """A parsed variance method: name plus the finite-population options."""

    name: str
    population_size: int | None = None
    improved: bool = False

    @property
    def label(self) -> str:
        if self.name != "finite-pop":
            return self.name
        out = "finite-pop"
        if self.population_size is not None:
            out += f":{self.population_size}"
        return out + (",improved" if self.improved else "")


def parse_variance(text: str) -> VarianceChoice:
    """Parse ``robust``, ``finite-pop``, ``finite-pop:500``, ``finite-pop:500,improved`` and so on."""
    head, _, opts = text.partition(",")
    name, _, size = head.partition(":")
    if name not in VARIANCE_NAMES:
        raise IncompatibleError(f"unknown variance method {name!r}; choose from {', '.join(VARIANCE_NAMES)}")
    if name != "finite-pop" and (size or opts):
        raise IncompatibleError(f"variance method {name!r} takes no options")
    if opts not in ("", "improved"):
        raise IncompatibleError(f"unknown finite-population option {opts!r}")
    N = None
    if size:
        try:
            N = int(size)
        except ValueError:
            raise IncompatibleError(f"population size must be an integer, got {size!r}") from None
    return VarianceChoice(name, N, opts == "improved")


def _as_data(data, estimator):
    """Cluster estimators need a ClusterSample; the rest work on individual rows."""
    if estimator.startswith("cluster-"):
        if isinstance(data, ClusterSample):
            return data
        if data.cluster is None:
            raise IncompatibleError(f"estimator {estimator!r} needs cluster ids")
        return ClusterSample.from_rows(data.cluster, data.y, data.d, stratum=data.stratum)
    if isinstance(data, ClusterSample):
        return data.rows()
    return data


def auto_variance(data, estimator: str) -> str:
    if estimator in ("cluster-eq", "cluster-size"):
        return estimator
    if estimator in ("lin", "aipw"):
        return "influence"
    if estimator == "pooled":
        return "hc"
    if estimator == "sat":
        return "sbr"
    if data.pair is not None:
        return "pairs"
    if data.stratum is not None:
        return "sbr"
    return "robust"


def check_compatible(data, estimator: str, method: str) -> None:
    """Raise :class:`IncompatibleError` when the pairing or the data cannot support it."""
    if estimator not in COMPATIBLE:
        raise IncompatibleError(f"unknown estimator {estimator!r}; choose from {', '.join(ESTIMATOR_NAMES)}")
    if method not in COMPATIBLE[estimator]:
        raise IncompatibleError(
            f"variance {method!r} is not valid for estimator {estimator!r}; "
            f"use one of {', '.join(COMPATIBLE[estimator])}")
    if isinstance(data, ClusterSample):
        if method == "cluster-size" and data.size is None:
            raise IncompatibleError("size-weighted cluster estimation needs the cluster_size column")
        return
    if estimator in ("pooled", "lin", "aipw") and data.k == 0:
        raise IncompatibleError(f"estimator {estimator!r} needs covariate columns x1..xk")
    if (estimator == "sat" or method in ("sbr", "strat-fp")) and data.stratum is None:
        raise IncompatibleError(f"{estimator}/{method} needs a stratum column")
    if method == "pairs" and data.pair is None:
        raise IncompatibleError("the matched-pairs variance needs a pair column")


def point_estimate(data, estimator: str, pi: float | None = None, model="linear") -> float:
    if estimator == "aipw":
        return est.aipw(data, data.n1 / data.n if pi is None else pi, model)
    if estimator == "cluster-eq":
        return est.cluster_eq(data)
    if estimator == "cluster-size":
        return est.cluster_size(data)
    return est.ESTIMATORS[estimator](data)


def variance_estimate(data, estimator: str, choice: VarianceChoice | str, pi: float | None = None,
                      pi_by_stratum=None, model="linear") -> float:
    """Variance of ``estimator`` on ``data`` by the named method (compatibility not rechecked)."""
    if isinstance(choice, str):
        choice = parse_variance(choice)
    m = choice.name
    if m == "robust":
        return var.arm_robust_variance(data)
    if m == "sbr":
        return var.sbr_variance(data, pi_by_stratum)
    if m == "strat-fp":
        return var.design_based_strat_variance(data, pi_by_stratum)
    if m == "pairs":
        return var.matched_pairs_variance(data)
    if m == "finite-pop":
        N = data.n if choice.population_size is None else choice.population_size
        return var.finite_pop_bound(data, N, choice.improved)
    if m == "hc":
        return var.pooled_variance(data)
    if m == "influence":
        p = data.n1 / data.n if pi is None else pi
        model = "linear" if estimator == "lin" else model
        return var.aipw_variance(data, p, model)
    if m == "cluster-eq":
        return var.cluster_eq_variance(data)
    if m == "cluster-size":
        return var.cluster_size_variance(data, stratified=data.stratum is not None, pi_by_stratum=pi_by_stratum)
    raise IncompatibleError(f"unknown variance method {m!r}")


def _warnings_for(data, estimator, method):
    out = []
    if isinstance(data, ClusterSample):
        return out
    if estimator == "dim" and method == "robust" and data.stratum is not None:
        out.append("robust variance ignores stratification and is conservative under stratified randomization")
    if estimator == "dim" and method == "robust" and data.pair is not None:
        out.append("robust variance ignores the pairing and is conservative under matched-pair randomization")
    if estimator == "dim" and method == "robust" and data.cluster is not None:
        out.append("robust variance ignores clustering; use a cluster estimator for cluster-randomized data")
    if estimator == "dim" and method in ("sbr", "strat-fp") and data.stratum is not None:
        shares = [np.mean(data.d[data.stratum == s] == 1) for s in data.strata_levels()]
        if max(shares) - min(shares) > 1e-12:
            out.append("treated shares differ across strata; the difference in means is not the "
                       "saturated estimate, use estimator 'sat'")
    return out


def analyze(data, estimator: str = "dim", variance: str = "auto", level: float = 0.95,
            pi: float | None = None, pi_by_stratum=None, model="linear") -> EstimateReport:
    """Estimate, select a compatible variance, and build the report.

    Every other compatible variance method that can be computed on the data
    is also reported under ``diagnostics.variance_estimates``.
    """
    data = _as_data(data, estimator)
    choice = parse_variance(variance)
    method = auto_variance(data, estimator) if choice.name == "auto" else choice.name
    if choice.name == "auto":
        choice = VarianceChoice(method)
    check_compatible(data, estimator, method)
    notes = _warnings_for(data, estimator, method)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        point = point_estimate(data, estimator, pi, model)
        v = variance_estimate(data, estimator, choice, pi, pi_by_stratum, model)
        estimates = {choice.label: v}
        for other in COMPATIBLE[estimator]:
            if other in estimates:
                continue
            try:
                check_compatible(data, estimator, other)
                estimates[other] = variance_estimate(data, estimator, other, pi, pi_by_stratum, model)
            except (IncompatibleError, EstimationError):
                continue
    notes.extend(str(w.message) for w in caught)
    if pi is None and estimator == "aipw":
        notes.append("no design probability supplied; using the realized treated share")
    ci = var.confidence_interval(point, v, level)
    if isinstance(data, ClusterSample):
        estimand = ESTIMANDS[estimator]
        diagnostics = {"clusters": data.G, "treated_clusters": int(np.sum(data.d == 1)),
                       "members": data.n}
        n = data.G
    else:
        estimand = "theta" if data.cluster is not None and estimator == "dim" else "ATE"
        diagnostics = {"n1": data.n1, "n0": data.n0}
        if data.stratum is not None:
            diagnostics["strata"] = len(data.strata_levels())
        if data.pair is not None:
            diagnostics["pairs"] = int(np.unique(data.pair).size)
        n = data.n
    if variance == "auto":
        diagnostics["variance_selection"] = "auto"
    return EstimateReport(estimand=estimand, point=point, variance_estimates=estimates, se=math.sqrt(v),
                          ci=ci, level=level, n=n, method=estimator, variance_method=choice.label,
                          diagnostics=diagnostics, warnings=tuple(notes))
