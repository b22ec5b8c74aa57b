"""Monte Carlo replication of (design, estimator, variance) combinations.

Replicate ``i`` draws everything from ``split(seed, i)``, so results do not
depend on how replicates are distributed over workers. Several analyses run
on the same draws, which makes paired comparisons between estimators
sharper. Sums are reduced in replicate order with :func:`math.fsum`.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from multiprocessing import get_context
from typing import Mapping, Sequence

import numpy as np

from ..analysis import check_compatible, parse_variance, point_estimate, variance_estimate
from ..design import assign_clusters, assign_complete, assign_matched_pairs, assign_stratified_block, match_pairs
from ..errors import IncompatibleError, ValidationError
from ..model import ClusterSample, DesignSpec, Sample
from ..rng import split
from ..variance import normal_quantile
from .dgp import ClusterDgp, Dgp
from .theory import theoretical_variances

MIN_REPLICATIONS = 100

UNIT_DESIGNS = ("complete", "sbr", "pairs")
CLUSTER_DESIGNS = ("cluster", "cluster-sbr")

_THEORY = {
    ("complete", "dim"): "V_cr",
    ("complete", "pooled"): "V_pool",
    ("complete", "lin"): "V_sat",
    ("complete", "aipw"): "V_sat",
    ("sbr", "dim"): "V_sbr",
    ("sbr", "sat"): "V_sbr",
    ("pairs", "dim"): "V_star",
    ("cluster", "cluster-eq"): "V_eq",
    ("cluster", "cluster-size"): "V_size",
    ("cluster-sbr", "cluster-eq"): "V_eq_sbr",
    ("cluster-sbr", "cluster-size"): "V_size_sbr",
}


@dataclass(frozen=True)
class Analysis:
    """One estimator with one variance method (``"none"`` skips the interval)."""

    estimator: str
    variance: str = "none"
    model: str = "linear"

    @property
    def key(self) -> tuple[str, str]:
        return (self.estimator, self.variance)


def _as_analyses(spec) -> tuple[Analysis, ...]:
    if isinstance(spec, (str, Analysis)) or (isinstance(spec, tuple) and spec and isinstance(spec[0], str)):
        spec = [spec]
    out = []
    for a in spec:
        if isinstance(a, Analysis):
            out.append(a)
        elif isinstance(a, str):
            out.append(Analysis(a))
        else:
            out.append(Analysis(*a))
    return tuple(out)


@dataclass(frozen=True)
class Summary:
    estimator: str
    variance: str
    truth: float
    R: int
    mean: float
    bias: float
    bias_mcse: float
    emp_var: float
    emp_var_mcse: float
    mean_var_est: float
    mean_var_est_mcse: float
    coverage: float
    coverage_mcse: float
    scaled_var: float
    theory_var: float | None

    def row(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass(frozen=True, eq=False)
class MonteCarloResult:
    design: str
    n: int
    R: int
    seed: int
    level: float
    summaries: tuple[Summary, ...]
    points: np.ndarray = field(repr=False)
    variances: np.ndarray = field(repr=False)

    def summary(self, estimator: str, variance: str | None = None) -> Summary:
        for s in self.summaries:
            if s.estimator == estimator and (variance is None or s.variance == variance):
                return s
        raise KeyError((estimator, variance))

    def column(self, estimator: str, variance: str | None = None) -> int:
        return self.summaries.index(self.summary(estimator, variance))

    def rows(self) -> list[dict]:
        return [{"design": self.design, "n": self.n, **s.row()} for s in self.summaries]


@dataclass(frozen=True, eq=False)
class _Context:
    dgp: object
    design: str
    n: int
    seed: int
    pi: float
    pi_by_stratum: Mapping[str, float] | None
    analyses: tuple[Analysis, ...]


def _draw_data(ctx: _Context, rng):
    if ctx.design in CLUSTER_DESIGNS:
        cd = ctx.dgp.draw(ctx.n, rng)
        spec = DesignSpec(ctx.design, pi=ctx.pi, pi_by_stratum=ctx.pi_by_stratum)
        d = assign_clusters(ctx.n, spec, rng, strata=cd.stratum).d
        treated = d[cd.member_of] == 1
        y = np.where(treated, cd.y1, cd.y0)
        stratum = cd.stratum if ctx.design == "cluster-sbr" else None
        return ClusterSample(np.arange(ctx.n), d, y, cd.member_of, size=cd.size, stratum=stratum)
    dr = ctx.dgp.draw(ctx.n, rng)
    pair = None
    if ctx.design == "complete":
        d = assign_complete(ctx.n, ctx.pi, rng).d
    elif ctx.design == "sbr":
        d = assign_stratified_block(dr.stratum, ctx.pi_by_stratum or ctx.pi, rng).d
    else:
        a = assign_matched_pairs(match_pairs(dr.x), rng)
        d, pair = a.d, a.pair_ids()
    return Sample(np.where(d == 1, dr.y1, dr.y0), d, dr.x, stratum=dr.stratum, pair=pair)


def _view(data, estimator):
    if isinstance(data, ClusterSample) and not estimator.startswith("cluster-"):
        return data.rows()
    return data


def _pi_for(ctx, data):
    if ctx.design == "pairs":
        return 0.5
    if ctx.pi_by_stratum is not None:
        return data.n1 / data.n
    return ctx.pi


def _replicate(ctx: _Context, i: int):
    data = _draw_data(ctx, split(ctx.seed, i))
    pts, vs = [], []
    for a in ctx.analyses:
        view = _view(data, a.estimator)
        pi = _pi_for(ctx, view)
        pts.append(point_estimate(view, a.estimator, pi, a.model))
        if a.variance == "none":
            vs.append(math.nan)
        else:
            vs.append(variance_estimate(view, a.estimator, a.variance, pi, ctx.pi_by_stratum, a.model))
    return pts, vs


def _run_range(ctx, start, stop):
    pts = np.empty((stop - start, len(ctx.analyses)))
    vs = np.empty_like(pts)
    for r, i in enumerate(range(start, stop)):
        pts[r], vs[r] = _replicate(ctx, i)
    return pts, vs


_FORKED: _Context | None = None


def _run_forked(bounds):
    return _run_range(_FORKED, *bounds)


def _check(ctx: _Context):
    cluster = isinstance(ctx.dgp, ClusterDgp)
    if cluster and ctx.design not in CLUSTER_DESIGNS:
        raise IncompatibleError(f"a cluster process needs a cluster design, got {ctx.design!r}")
    if not cluster and ctx.design not in UNIT_DESIGNS:
        raise IncompatibleError(f"design {ctx.design!r} needs a cluster process")
    for a in ctx.analyses:
        if a.variance == "none":
            continue
        name = parse_variance(a.variance).name
        if name == "pairs" and ctx.design != "pairs":
            raise IncompatibleError("the matched-pairs variance is valid only under matched-pair randomization")
        if name in ("sbr", "strat-fp") and ctx.design != "sbr":
            raise IncompatibleError(f"variance {name!r} is valid only under stratified block randomization")
        if cluster and not a.estimator.startswith("cluster-"):
            raise IncompatibleError("member-level estimators run without a variance on cluster designs")
    probe = _draw_data(ctx, split(ctx.seed, 0))
    for a in ctx.analyses:
        if a.variance != "none":
            check_compatible(_view(probe, a.estimator), a.estimator, parse_variance(a.variance).name)


def _truth(dgp, estimator):
    if isinstance(dgp, ClusterDgp):
        return {"cluster-eq": dgp.delta_eq, "cluster-size": dgp.delta_size}.get(estimator, dgp.theta)
    return dgp.ate


def _summarize(ctx, R, points, variances, level):
    z = normal_quantile((1 + level) / 2)
    try:
        theory = theoretical_variances(ctx.dgp, ctx.pi, ctx.pi_by_stratum)
    except ValidationError:
        theory = None
    out = []
    for j, a in enumerate(ctx.analyses):
        x = points[:, j]
        truth = _truth(ctx.dgp, a.estimator)
        mean = math.fsum(x) / R
        dev2 = (x - mean) ** 2
        emp_var = math.fsum(dev2) / (R - 1)
        emp_var_mcse = math.sqrt(math.fsum((dev2 - math.fsum(dev2) / R) ** 2) / (R - 1) / R)
        v = variances[:, j]
        if a.variance == "none":
            mv = mv_se = cov = cov_se = math.nan
        else:
            mv = math.fsum(v) / R
            mv_se = math.sqrt(math.fsum((v - mv) ** 2) / (R - 1) / R)
            hit = np.abs(x - truth) <= z * np.sqrt(v)
            cov = math.fsum(hit.astype(float)) / R
            cov_se = math.sqrt(cov * (1 - cov) / R)
        attr = _THEORY.get((ctx.design, a.estimator))
        if a.estimator == "aipw" and a.model != "linear":
            attr = None
        tv = getattr(theory, attr) if theory is not None and attr else None
        out.append(Summary(a.estimator, a.variance, truth, R, mean, mean - truth, math.sqrt(emp_var / R),
                           emp_var, emp_var_mcse, mv, mv_se, cov, cov_se, ctx.n * emp_var, tv))
    return tuple(out)


def monte_carlo(dgp: Dgp | ClusterDgp, design: str, analyses, n: int, R: int, seed: int, pi: float = 0.5,
                pi_by_stratum: Mapping[str, float] | None = None, level: float = 0.95,
                workers: int = 1) -> MonteCarloResult:
    """Replicate the experiment R times and summarize every analysis.

    Parameters
    ----------
    dgp : Dgp or ClusterDgp
    design : str
        ``complete``, ``sbr``, ``pairs`` (matched on X) for unit processes;
        ``cluster`` or ``cluster-sbr`` for cluster processes.
    analyses : str, (estimator, variance) tuple, Analysis, or a sequence of these
    n : int
        Units, or clusters for cluster designs.
    R : int
        Replications, at least 100.
    seed : int
        Replicate ``i`` uses ``split(seed, i)``.
    workers : int
        Processes to fan out over; results are identical for any value.

    Returns
    -------
    MonteCarloResult
        Bias, empirical variance, mean variance estimate and interval
        coverage per analysis, each with its Monte Carlo standard error,
        plus ``scaled_var`` (n times the empirical variance) next to the
        closed-form limit when one applies.
    """
    if R < MIN_REPLICATIONS:
        raise ValidationError(f"at least {MIN_REPLICATIONS} replications are required, got {R}")
    ctx = _Context(dgp, design, int(n), int(seed), float(pi),
                   None if pi_by_stratum is None else {str(k): float(v) for k, v in pi_by_stratum.items()},
                   _as_analyses(analyses))
    _check(ctx)
    if workers <= 1:
        points, variances = _run_range(ctx, 0, R)
    else:
        global _FORKED
        _FORKED = ctx
        step = -(-R // (4 * workers))
        bounds = [(s, min(s + step, R)) for s in range(0, R, step)]
        try:
            with ProcessPoolExecutor(workers, mp_context=get_context("fork")) as pool:
                parts = list(pool.map(_run_forked, bounds))
        finally:
            _FORKED = None
        points = np.concatenate([p for p, _ in parts])
        variances = np.concatenate([v for _, v in parts])
    return MonteCarloResult(design, ctx.n, R, ctx.seed, level, _summarize(ctx, R, points, variances, level),
                            points, variances)


def paired_difference(result: MonteCarloResult, first: int, second: int) -> tuple[float, float]:
    """Difference of empirical variances of two analyses on shared draws, with its MCSE.

    Uses the replicate-level contributions ``(x - mean_x)^2 - (y - mean_y)^2``
    so the correlation between the two estimators is accounted for.
    """
    x = result.points[:, first]
    y = result.points[:, second]
    R = x.size
    c = (x - math.fsum(x) / R) ** 2 - (y - math.fsum(y) / R) ** 2
    m = math.fsum(c) / R
    return m * R / (R - 1), math.sqrt(math.fsum((c - m) ** 2) / (R - 1) / R)


def dgp_from_dict(spec: Mapping) -> Dgp | ClusterDgp:
    """Build a process from a JSON-style mapping with a ``kind`` key.

    ``discrete``: values, probs, mean1, mean0, optional sd1, sd0, rho, strata.
    ``uniform``: low, high, mean1, mean0 (polynomial coefficients), optional
    sd1, sd0, rho, bins. ``cluster``: sizes, size_probs, mean1, mean0,
    optional cluster_sd, unit_sd, members, strata.
    """
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        if kind == "discrete":
            return Dgp.discrete(**spec)
        if kind == "uniform":
            return Dgp.uniform(**spec)
        if kind == "cluster":
            return ClusterDgp.build(**spec)
    except TypeError as exc:
        raise ValidationError(f"bad {kind} process specification: {exc}") from None
    raise ValidationError(f"unknown process kind {kind!r}; use discrete, uniform or cluster")


def run_config(config: Mapping, workers: int = 1) -> dict:
    """Run every scenario of a declarative configuration.

    ``scenarios`` is a list of mappings with keys name, dgp, design, n, R,
    seed, analyses and optionally pi, pi_by_stratum, level. ``ratios`` lists
    ``{"name", "numerator", "denominator", "estimator"}`` comparing the
    empirical variances of one estimator across two scenarios with the
    ratio of their closed-form limits.
    """
    results = {}
    rows = []
    for sc in config.get("scenarios", []):
        for key in ("name", "dgp", "design", "n", "R", "seed", "analyses"):
            if key not in sc:
                raise ValidationError(f"scenario is missing {key!r}")
        res = monte_carlo(dgp_from_dict(sc["dgp"]), sc["design"], [tuple(a) if isinstance(a, list) else a
                                                                   for a in sc["analyses"]],
                          sc["n"], sc["R"], sc["seed"], pi=sc.get("pi", 0.5),
                          pi_by_stratum=sc.get("pi_by_stratum"), level=sc.get("level", 0.95), workers=workers)
        results[sc["name"]] = res
        rows.extend({"scenario": sc["name"], **r} for r in res.rows())
    ratios = []
    for rt in config.get("ratios", []):
        num = results[rt["numerator"]].summary(rt["estimator"])
        den = results[rt["denominator"]].summary(rt["estimator"])
        emp = num.emp_var / den.emp_var
        # delta-method MCSE for a ratio of independent variance estimates
        se = emp * math.sqrt((num.emp_var_mcse / num.emp_var) ** 2 + (den.emp_var_mcse / den.emp_var) ** 2)
        theory = None
        if num.theory_var is not None and den.theory_var is not None:
            theory = (num.theory_var / results[rt["numerator"]].n) / (den.theory_var / results[rt["denominator"]].n)
        ratios.append({"name": rt.get("name", f"{rt['numerator']}/{rt['denominator']}"),
                       "estimator": rt["estimator"], "empirical": emp, "empirical_mcse": se,
                       "theoretical": theory,
                       "relative_error": None if theory is None else abs(emp / theory - 1)})
    return {"rows": rows, "ratios": ratios}
