"""Point estimators of the average treatment effect and of cluster-level effects."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

import numpy as np

from .errors import EstimationError, RankDeficientError
from .model import ClusterSample, Sample

_RANK_TOL = 1e-10


class DesignMismatchWarning(RuntimeWarning):
    """The supplied assignment probability disagrees with the realized share."""


@dataclass(frozen=True, eq=False)
class LeastSquaresFit:
    coefficients: np.ndarray
    residuals: np.ndarray
    labels: tuple[str, ...]
    design: np.ndarray
    weights: np.ndarray | None = None

    def coef(self, label: str) -> float:
        return float(self.coefficients[self.labels.index(label)])


def least_squares(y, columns, weights=None, labels: Sequence[str] | None = None) -> LeastSquaresFit:
    """Weighted least squares through a Householder QR factorization.

    Parameters
    ----------
    y : array_like, shape (n,)
    columns : array_like, shape (n, p)
        Design matrix, one regressor per column.
    weights : array_like, shape (n,), optional
        Nonnegative observation weights.
    labels : sequence of str, optional
        Column names used in error messages and :meth:`LeastSquaresFit.coef`.

    Raises
    ------
    RankDeficientError
        When a column is (numerically) in the span of the preceding ones,
        after weighting. The error names those columns.
    """
    y = np.asarray(y, dtype=np.float64)
    X = np.asarray(columns, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.shape != (n,):
        raise EstimationError(f"outcome length {y.shape} does not match {n} design rows")
    labels = tuple(labels) if labels is not None else tuple(f"x{j}" for j in range(p))
    if len(labels) != p:
        raise EstimationError("one label per column is required")
    if weights is not None:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (n,) or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise EstimationError("weights must be finite, nonnegative and one per row")
        sw = np.sqrt(w)
        Xw, yw = X * sw[:, None], y * sw
    else:
        w = None
        Xw, yw = X, y
    if n < p:
        raise RankDeficientError(labels[n:])
    q, r = np.linalg.qr(Xw)
    diag = np.abs(np.diag(r))
    scale = max(diag.max(initial=0.0), np.finfo(float).tiny)
    bad = [labels[j] for j in range(p) if diag[j] <= _RANK_TOL * scale]
    if bad:
        raise RankDeficientError(bad)
    beta = np.linalg.solve(r, q.T @ yw)
    return LeastSquaresFit(beta, y - X @ beta, labels, X, w)


def _arms(sample: Sample):
    t = sample.d == 1
    c = sample.d == 0
    if not t.any() or not c.any():
        raise EstimationError("empty arm: both treated and control units are required")
    return t, c


def diff_in_means(sample: Sample) -> float:
    t, c = _arms(sample)
    return float(sample.y[t].mean() - sample.y[c].mean())


def stratum_effects(sample: Sample) -> dict[str, tuple[int, float]]:
    """Per-stratum ``(n(x), difference in means)`` in label order."""
    if sample.stratum is None:
        raise EstimationError("stratum labels are required")
    out = {}
    for s in sample.strata_levels():
        m = sample.stratum == s
        yt, yc = sample.y[m & (sample.d == 1)], sample.y[m & (sample.d == 0)]
        if yt.size == 0 or yc.size == 0:
            raise EstimationError(f"empty arm in stratum {s!r}")
        out[s] = (int(m.sum()), float(yt.mean() - yc.mean()))
    return out


def saturated_estimate(sample: Sample) -> float:
    """Stratum-size weighted average of within-stratum differences in means."""
    if sample.stratum is None:
        return diff_in_means(sample)
    return float(sum(nx * dx for nx, dx in stratum_effects(sample).values()) / sample.n)


def _need_covariates(sample, what):
    if sample.k == 0:
        raise EstimationError(f"{what} requires at least one covariate")


def _covariate_labels(k):
    return [f"x{j + 1}" for j in range(k)]


def pooled_fit(sample: Sample) -> LeastSquaresFit:
    _need_covariates(sample, "pooled regression adjustment")
    _arms(sample)
    cols = np.column_stack([np.ones(sample.n), sample.d, sample.x])
    return least_squares(sample.y, cols, labels=["const", "D", *_covariate_labels(sample.k)])


def pooled_adjusted(sample: Sample) -> float:
    """Coefficient on D from regressing Y on a constant, D and X."""
    return pooled_fit(sample).coef("D")


def lin_fit(sample: Sample) -> LeastSquaresFit:
    _need_covariates(sample, "interacted regression adjustment")
    _arms(sample)
    xc = sample.x - sample.x.mean(axis=0)
    d = sample.d.astype(float)
    cols = np.column_stack([np.ones(sample.n), d, sample.x, d[:, None] * xc])
    labels = ["const", "D", *_covariate_labels(sample.k), *(f"D:{c}" for c in _covariate_labels(sample.k))]
    return least_squares(sample.y, cols, labels=labels)


def lin_interacted(sample: Sample) -> float:
    """Coefficient on D with full D-by-covariate interactions, covariates centred at the sample mean."""
    return lin_fit(sample).coef("D")


class WorkingModel(Protocol):
    """Fits a predictor of the outcome from covariates on one arm's subsample.

    ``fit`` receives the arm's covariates and outcomes plus the full-sample
    covariate mean and must return a function defined on every covariate
    vector.
    """

    name: str

    def fit(self, x: np.ndarray, y: np.ndarray, center: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
        ...


class ZeroModel:
    name = "zero"

    def fit(self, x, y, center):
        return lambda xs: np.zeros(np.asarray(xs).shape[0])


class ArmMeanModel:
    name = "mean"

    def fit(self, x, y, center):
        m = float(np.mean(y))
        return lambda xs: np.full(np.asarray(xs).shape[0], m)


class LinearModel:
    """Per-arm linear regression on covariates centred at the full-sample mean.

    With ``intercept=True`` the predictor is the arm's fitted regression
    line. With ``intercept=False`` only the slope part ``(x - xbar)' g`` is
    kept, ``g`` being the arm's slope from a regression with a constant.
    """

    def __init__(self, intercept: bool = True):
        self.intercept = intercept
        self.name = "linear" if intercept else "linear-slopes"

    def fit(self, x, y, center):
        x = np.asarray(x, dtype=float)
        if x.shape[1] == 0:
            raise EstimationError("linear working model requires covariates")
        xc = x - center
        k = x.shape[1]
        fit = least_squares(y, np.column_stack([np.ones(len(y)), xc]),
                            labels=["const", *_covariate_labels(k)])
        a, g = fit.coefficients[0], fit.coefficients[1:]
        if not self.intercept:
            a = 0.0
        return lambda xs: a + (np.asarray(xs, dtype=float) - center) @ g


WORKING_MODELS = {"zero": ZeroModel, "mean": ArmMeanModel, "linear": LinearModel}


def working_model(model) -> WorkingModel:
    if isinstance(model, str):
        if model == "linear-slopes":
            return LinearModel(intercept=False)
        try:
            return WORKING_MODELS[model]()
        except KeyError:
            raise EstimationError(f"unknown working model {model!r}") from None
    return model


def _check_pi(sample, pi):
    pi = float(pi)
    if not 0.0 < pi < 1.0:
        raise EstimationError(f"assignment probability must lie in (0, 1), got {pi}")
    if abs(pi - sample.n1 / sample.n) > 1.0 / sample.n:
        warnings.warn(
            f"supplied pi={pi} differs from realized share {sample.n1}/{sample.n} by more than 1/n",
            DesignMismatchWarning,
            stacklevel=3,
        )
    return pi


def aipw_predictions(sample: Sample, model) -> tuple[np.ndarray, np.ndarray]:
    """Fitted working-model predictions ``(mu1(X_i), mu0(X_i))`` for every unit."""
    t, c = _arms(sample)
    model = working_model(model)
    center = sample.x.mean(axis=0) if sample.k else np.zeros(0)
    mu1 = model.fit(sample.x[t], sample.y[t], center)
    mu0 = model.fit(sample.x[c], sample.y[c], center)
    return np.asarray(mu1(sample.x), dtype=float), np.asarray(mu0(sample.x), dtype=float)


def aipw(sample: Sample, pi: float, model="linear") -> float:
    """Augmented inverse-propensity weighted estimate with known design probability ``pi``.

    ``model`` is a :class:`WorkingModel` or one of ``"zero"``, ``"mean"``,
    ``"linear"``, ``"linear-slopes"``.
    """
    pi = _check_pi(sample, pi)
    mu1, mu0 = aipw_predictions(sample, model)
    d = sample.d.astype(float)
    y = sample.y
    psi = d * (y - mu1) / pi - (1 - d) * (y - mu0) / (1 - pi) + mu1 - mu0
    return float(psi.mean())


def _cluster_arms(cs: ClusterSample):
    t = cs.d == 1
    c = cs.d == 0
    if not t.any() or not c.any():
        raise EstimationError("empty arm: both treated and control clusters are required")
    return t, c


def cluster_eq(cs: ClusterSample) -> float:
    """Difference in mean cluster-average outcome, every cluster weighted equally."""
    t, c = _cluster_arms(cs)
    return float(cs.means[t].mean() - cs.means[c].mean())


def _sizes(cs: ClusterSample):
    if cs.size is None or not np.all(np.isfinite(cs.size)):
        raise EstimationError("cluster sizes N_g are required for size weighting")
    return cs.size


def cluster_size(cs: ClusterSample) -> float:
    """Difference in cluster-size weighted mean cluster-average outcome."""
    t, c = _cluster_arms(cs)
    N = _sizes(cs)
    yb = cs.means
    return float((yb[t] * N[t]).sum() / N[t].sum() - (yb[c] * N[c]).sum() / N[c].sum())


ESTIMATORS = {
    "dim": diff_in_means,
    "sat": saturated_estimate,
    "pooled": pooled_adjusted,
    "lin": lin_interacted,
}
