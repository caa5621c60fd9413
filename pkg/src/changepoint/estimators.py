"""Change-point estimation: MLE walks, profile criteria, conditional law.

Two estimation regimes share one geometry.  With known pre/post
parameters the estimate is the argmax of the cumulative per-observation
log-likelihood-ratio walk; with unknown parameters each candidate split
re-estimates the segment means (and pooled covariance), and the
criterion becomes the determinant ratio

    n log(|Sigma_hat_n| / |Sigma_hat_t|)

whose univariate case is n log(sigma_hat_n^2 / sigma_hat_t^2).  Ties are
always resolved to the smallest index, so repeated runs are bit
identical.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, DomainError, UnreachableLevelError
from .exactdist import Pmf, symmetric_interval
from .model import ChangeModel, Dataset, MultivariateOrigin, UnivariateOrigin

__all__ = [
    "MleResult",
    "ConditionalPmf",
    "EstimatedParams",
    "IndexInterval",
    "mle_known",
    "mle_profile",
    "cobb_conditional",
    "confidence_interval",
    "mle_result_to_json",
    "conditional_to_json",
]


@dataclass(frozen=True)
class EstimatedParams:
    """Segment estimates at a split: means plus df-corrected pooled covariance.

    ``sigma`` is a float (univariate standard deviation) or a d x d
    matrix; the pooled estimator divides the within-segment scatter by
    n - 2 (one mean per segment).
    """

    mu1: float | np.ndarray
    mu2: float | np.ndarray
    sigma: float | np.ndarray


@dataclass(frozen=True)
class MleResult:
    tau_hat: int
    walk_trace: np.ndarray  # length n-1; profile mode: nan at inadmissible t
    params_used: ChangeModel | EstimatedParams
    mode: str  # "known" | "profile"


@dataclass(frozen=True)
class ConditionalPmf:
    """Data-conditional split distribution over offsets l in [-delta, delta]."""

    delta: int
    probs: np.ndarray  # index l + delta
    error_rate_target: float = 1e-5

    def prob(self, l: int) -> float:
        if abs(l) > self.delta:
            return 0.0
        return float(self.probs[l + self.delta])


def loglik_ratio_terms(series: np.ndarray, model: ChangeModel) -> np.ndarray:
    """Per-observation terms a(y) = log f1(y) - log f2(y) under known params."""
    origin = model.origin
    if isinstance(origin, UnivariateOrigin):
        if series.shape[1] != 1:
            raise DomainError(f"univariate parameters given for {series.shape[1]}-column data")
        y = series[:, 0]
        s2 = origin.sigma * origin.sigma
        return ((y - origin.mu2) ** 2 - (y - origin.mu1) ** 2) / (2.0 * s2)
    assert isinstance(origin, MultivariateOrigin)
    d = origin.mu1.shape[0]
    if series.shape[1] != d:
        raise DomainError(f"{d}-variate parameters given for {series.shape[1]}-column data")
    try:
        L = np.linalg.cholesky(origin.sigma)
    except np.linalg.LinAlgError as exc:
        raise DegenerateDataError(f"covariance parameter not positive definite: {exc}") from exc
    z1 = np.linalg.solve(L, (series - origin.mu1).T)
    z2 = np.linalg.solve(L, (series - origin.mu2).T)
    return 0.5 * (np.sum(z2 * z2, axis=0) - np.sum(z1 * z1, axis=0))


def known_walk(series: np.ndarray, model: ChangeModel) -> np.ndarray:
    """Cumulative log-likelihood-ratio walk over splits t = 1..n-1."""
    return np.cumsum(loglik_ratio_terms(series, model))[:-1]


def mle_known(data: Dataset, model: ChangeModel) -> MleResult:
    """Known-parameter MLE: smallest argmax of the likelihood-ratio walk."""
    walk = known_walk(data.series, model)
    tau_hat = int(np.argmax(walk)) + 1
    return MleResult(tau_hat=tau_hat, walk_trace=walk, params_used=model, mode="known")


def split_scatters(series: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Within-segment scatter matrices about segment means, per split t.

    Returns (scatter_t, scatter_n): scatter_t[t-1] is the d x d summed
    scatter of rows 1..t about their mean plus rows t+1..n about theirs,
    for t = 1..n-1; scatter_n is the scatter about the global mean.
    Data are centered first, so the prefix-sum evaluation stays well
    conditioned at arbitrary location offsets.
    """
    n, d = series.shape
    series = series - series.mean(axis=0)
    t = np.arange(1, n, dtype=float)
    c1 = np.cumsum(series, axis=0)  # (n, d)
    outer = series[:, :, None] * series[:, None, :]
    c2 = np.cumsum(outer, axis=0)  # (n, d, d)
    tot1, tot2 = c1[-1], c2[-1]
    left1, left2 = c1[:-1], c2[:-1]
    right1 = tot1[None, :] - left1
    left = left2 - left1[:, :, None] * left1[:, None, :] / t[:, None, None]
    right = (tot2[None] - left2) - right1[:, :, None] * right1[:, None, :] / (n - t)[:, None, None]
    scatter_n = tot2 - np.outer(tot1, tot1) / n
    return left + right, scatter_n


def _univariate_split_scatter(y: np.ndarray) -> tuple[np.ndarray, float]:
    n = y.shape[0]
    y = y - y.mean()
    t = np.arange(1, n, dtype=float)
    c1 = np.cumsum(y)
    c2 = np.cumsum(y * y)
    tot1, tot2 = c1[-1], c2[-1]
    left = c2[:-1] - c1[:-1] ** 2 / t
    right = (tot2 - c2[:-1]) - (tot1 - c1[:-1]) ** 2 / (n - t)
    return left + right, float(tot2 - tot1 * tot1 / n)


def profile_criterion(series: np.ndarray) -> np.ndarray:
    """Profile trace n log(|Sigma_hat_n| / |Sigma_hat_t|) over t = 1..n-1.

    Inadmissible splits (either segment shorter than d + 1 when d > 1)
    and splits with a non-positive-definite segment estimate are nan.
    Raises if the no-change covariance estimate is singular.
    """
    n, d = series.shape
    trace = np.full(n - 1, np.nan)
    if d == 1:
        scatter_t, scatter_n = _univariate_split_scatter(series[:, 0])
        if scatter_n <= 0:
            raise DegenerateDataError("no-change variance estimate is zero")
        sig_t = scatter_t / n
        with np.errstate(divide="ignore"):
            vals = n * (np.log(scatter_n / n) - np.log(sig_t))
        vals[sig_t < 0] = np.nan  # rounding can drive an exact-fit scatter below 0
        trace[:] = vals
    else:
        scatter_t, scatter_n = split_scatters(series)
        sign_n, logdet_n = np.linalg.slogdet(scatter_n / n)
        if sign_n <= 0 or not np.isfinite(logdet_n):
            raise DegenerateDataError("no-change covariance estimate is singular")
        lo, hi = d + 1, n - d - 1
        if lo > hi:
            raise DegenerateDataError(f"no admissible split for n={n}, d={d}")
        sign_t, logdet_t = np.linalg.slogdet(scatter_t[lo - 1 : hi] / n)
        vals = np.where(sign_t > 0, n * (logdet_n - logdet_t), np.nan)
        trace[lo - 1 : hi] = vals
    if not np.any(np.isfinite(trace) | np.isposinf(trace)):
        raise DegenerateDataError("segment covariance estimate degenerate at every split")
    return trace


def pooled_estimates(series: np.ndarray, tau_hat: int) -> EstimatedParams:
    """Segment means and df-corrected pooled covariance at a given split."""
    n, d = series.shape
    left, right = series[:tau_hat], series[tau_hat:]
    mu1 = left.mean(axis=0)
    mu2 = right.mean(axis=0)
    dev = np.vstack([left - mu1, right - mu2])
    scatter = dev.T @ dev
    pooled = scatter / (n - 2)
    if d == 1:
        return EstimatedParams(float(mu1[0]), float(mu2[0]), float(math.sqrt(pooled[0, 0])))
    return EstimatedParams(mu1, mu2, pooled)


def mle_profile(data: Dataset) -> MleResult:
    """Unknown-parameter MLE via the profile determinant-ratio criterion."""
    series = data.series
    n, d = series.shape
    if n < 4:
        raise DomainError(f"need n >= 4 for profile estimation, got {n}")
    trace = profile_criterion(series)
    tau_hat = int(np.nanargmax(trace)) + 1
    return MleResult(
        tau_hat=tau_hat,
        walk_trace=trace,
        params_used=pooled_estimates(series, tau_hat),
        mode="profile",
    )


def _params_walk(series: np.ndarray, params: ChangeModel | EstimatedParams) -> np.ndarray:
    if isinstance(params, ChangeModel):
        return known_walk(series, params)
    # estimated record: plug the segment estimates in as if known
    d = series.shape[1]
    if d == 1:
        origin = UnivariateOrigin(float(params.mu1), float(params.mu2), float(params.sigma))
    else:
        origin = MultivariateOrigin(
            np.asarray(params.mu1, dtype=float),
            np.asarray(params.mu2, dtype=float),
            np.asarray(params.sigma, dtype=float),
        )
    eta_dummy = 1.0  # only the origin parameters matter for the walk
    return known_walk(series, ChangeModel(eta=eta_dummy, origin=origin))


def cobb_conditional(
    data: Dataset,
    tau_hat: int,
    delta: int,
    params: ChangeModel | EstimatedParams,
) -> ConditionalPmf:
    """Conditional split distribution on the window tau_hat +- delta.

    Mass at offset l is proportional to the full-data likelihood with
    the split at tau_hat + l, normalized over the window; evaluated via
    max-shifted exponentials since the log-likelihoods span hundreds of
    units.
    """
    n = data.n
    if delta < 1:
        raise DomainError(f"delta must be >= 1, got {delta}")
    if tau_hat - delta < 1 or tau_hat + delta > n - 1:
        raise DomainError(
            f"window tau_hat +- delta = [{tau_hat - delta}, {tau_hat + delta}] "
            f"exceeds the admissible splits [1, {n - 1}]"
        )
    walk = _params_walk(data.series, params)
    window = walk[tau_hat - delta - 1 : tau_hat + delta]
    shifted = window - window.max()
    w = np.exp(shifted)
    probs = w / w.sum()
    return ConditionalPmf(delta=delta, probs=probs)


def default_cobb_delta(tau_hat: int, n: int, cap: int = 15) -> int:
    """Widest window around tau_hat that stays inside the sample, capped."""
    return max(1, min(tau_hat - 1, n - 1 - tau_hat, cap))


@dataclass(frozen=True)
class IndexInterval:
    """Confidence region for the split index, optionally in calendar units.

    ``lo``/``hi`` bound the split indices; for a conditional input that
    is not contiguous, ``indices`` carries the exact set and lo/hi its
    hull.  Calendar labels map index i to time_origin + i - 1.
    """

    lo: int
    hi: int
    level: float
    achieved: float
    clipped: bool = False
    halfwidth: int | None = None
    indices: tuple[int, ...] | None = None
    contiguous: bool = True
    calendar: tuple[int, int] | None = None


def confidence_interval(
    dist: Pmf | ConditionalPmf,
    level: float,
    tau_hat: int,
    n: int,
    time_origin: int | None = None,
) -> IndexInterval:
    """Confidence region around tau_hat at the given level.

    An unconditional (limiting) distribution yields the symmetric
    interval tau_hat +- m, clipped to the admissible splits [1, n-1]
    with the clipping flagged.  A conditional distribution yields the
    smallest highest-mass set of window offsets reaching the level.
    """
    if not (0.0 < level < 1.0):
        raise DomainError(f"level must be in (0, 1), got {level!r}")
    if isinstance(dist, Pmf):
        m = symmetric_interval(dist, level)
        achieved = dist.prob(0) + 2.0 * sum(dist.prob(k) for k in range(1, m + 1))
        lo, hi = tau_hat - m, tau_hat + m
        clipped = lo < 1 or hi > n - 1
        lo, hi = max(1, lo), min(n - 1, hi)
        return IndexInterval(
            lo=lo, hi=hi, level=level, achieved=float(achieved), clipped=clipped,
            halfwidth=m, calendar=_calendar(lo, hi, time_origin),
        )
    # conditional: greedy highest-mass set, deterministic tie order
    ls = np.arange(-dist.delta, dist.delta + 1)
    order = sorted(range(len(ls)), key=lambda i: (-dist.probs[i], abs(ls[i]), ls[i]))
    acc = 0.0
    chosen: list[int] = []
    for i in order:
        chosen.append(int(ls[i]))
        acc += float(dist.probs[i])
        if acc >= level - 1e-12:
            break
    else:
        raise UnreachableLevelError(
            f"level {level} unreachable within the delta={dist.delta} window (mass {acc:.6f})"
        )
    chosen.sort()
    indices = tuple(tau_hat + l for l in chosen)
    contiguous = all(b - a == 1 for a, b in zip(indices, indices[1:]))
    lo, hi = indices[0], indices[-1]
    return IndexInterval(
        lo=lo, hi=hi, level=level, achieved=acc, clipped=False,
        indices=indices, contiguous=contiguous, calendar=_calendar(lo, hi, time_origin),
    )


def _calendar(lo: int, hi: int, origin: int | None) -> tuple[int, int] | None:
    if origin is None:
        return None
    return (origin + lo - 1, origin + hi - 1)


# --- serialization -------------------------------------------------------

def _params_json(params: ChangeModel | EstimatedParams):
    def val(x):
        arr = np.asarray(x, dtype=float)
        return float(arr) if arr.ndim == 0 else arr.tolist()

    if isinstance(params, ChangeModel):
        o = params.origin
        if isinstance(o, UnivariateOrigin):
            return {"eta": params.eta, "mu1": o.mu1, "mu2": o.mu2, "sigma": o.sigma}
        return {"eta": params.eta, "mu1": val(o.mu1), "mu2": val(o.mu2), "sigma": val(o.sigma)}
    return {"mu1": val(params.mu1), "mu2": val(params.mu2), "sigma": val(params.sigma)}


def mle_result_to_json(result: MleResult) -> str:
    trace = [None if not np.isfinite(v) else float(v) for v in result.walk_trace]
    return json.dumps(
        {
            "tau_hat": result.tau_hat,
            "mode": result.mode,
            "criterion": trace,
            "params": _params_json(result.params_used),
        }
    )


def conditional_to_json(cond: ConditionalPmf) -> str:
    return json.dumps({"delta": cond.delta, "probs": [float(p) for p in cond.probs]})
