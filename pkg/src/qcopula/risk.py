"""Dependence diagnostics and VaR / ES backtesting with bootstrap intervals."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    NoExceedances,
    OutOfDomain,
    TooFewObservations,
    TooFewTailPoints,
    ZeroVar,
)

MIN_TAIL_POINTS = 20


@dataclass
class CorrelatorReport:
    asset_ids: list[str]
    pearson: np.ndarray
    upper_tail: np.ndarray
    threshold: float

    def to_dict(self) -> dict:
        return {
            "asset_ids": list(self.asset_ids),
            "pearson": np.asarray(self.pearson).tolist(),
            "upper_tail": np.asarray(self.upper_tail).tolist(),
            "threshold": self.threshold,
        }


@dataclass
class RiskReport:
    alpha: float
    var: float
    es: float
    failure_ratio: float
    severity_ratio: float
    space: str
    ci: dict[str, tuple[float, float]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["ci"] = {k: list(v) for k, v in self.ci.items()}
        return doc

    def rows(self, model: str) -> list[list]:
        """Flat ``model, space, metric, point, lo, hi`` rows for plotting."""
        out = []
        for metric in ("var", "es", "failure_ratio", "severity_ratio"):
            lo, hi = self.ci.get(metric, (math.nan, math.nan))
            out.append([model, self.space, metric, getattr(self, metric), lo, hi])
        return out


def pearson_matrix(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2:
        raise TooFewObservations("need an N x n matrix with N >= 2")
    std = x.std(axis=0)
    for j, s in enumerate(std):
        if not s > 0:
            raise DegenerateColumn(j)
    r = np.corrcoef(x, rowvar=False)
    r = np.clip(0.5 * (r + r.T), -1.0, 1.0)
    np.fill_diagonal(r, 1.0)
    return r


def _exceedance(u: np.ndarray, v: np.ndarray, q: float) -> float:
    cond = v > q
    k = int(cond.sum())
    if k < MIN_TAIL_POINTS:
        raise TooFewTailPoints(f"only {k} points above q={q}; need {MIN_TAIL_POINTS}")
    return float(np.count_nonzero(u[cond] > q) / k)


def upper_tail_dependence(u, v, q: float = 0.95) -> float:
    """Symmetrized empirical ``P(U > q | V > q)`` at a finite threshold."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch("columns differ in length")
    if not 0 < q < 1:
        raise OutOfDomain(f"threshold must lie in (0, 1), got {q}")
    if np.any((u <= 0) | (u >= 1) | (v <= 0) | (v >= 1)):
        raise OutOfDomain("tail dependence needs entries in (0, 1)")
    return 0.5 * (_exceedance(u, v, q) + _exceedance(v, u, q))


def upper_tail_matrix(samples, q: float = 0.95) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    n = x.shape[1]
    lam = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            lam[i, j] = lam[j, i] = upper_tail_dependence(x[:, i], x[:, j], q)
    return lam


def correlators(samples, asset_ids: Sequence[str], q: float = 0.95) -> CorrelatorReport:
    return CorrelatorReport(list(asset_ids), pearson_matrix(samples), upper_tail_matrix(samples, q), q)


def equal_weights(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def portfolio_losses(samples, weights=None) -> np.ndarray:
    """Loss of a long portfolio: ``-sum_j w_j x_ij`` per row."""
    x = np.atleast_2d(np.asarray(samples, dtype=float))
    w = equal_weights(x.shape[1]) if weights is None else np.asarray(weights, dtype=float)
    if w.shape != (x.shape[1],):
        raise DimensionMismatch(f"{w.size} weights for {x.shape[1]} columns")
    if abs(w.sum() - 1.0) > 1e-9:
        raise ValueError(f"weights must sum to 1, got {w.sum()}")
    return -(x @ w)


def copula_losses(pseudo, weights=None) -> np.ndarray:
    """Portfolio loss of pseudo-samples measured from the copula centre 0.5.

    Centring keeps the upper loss tail positive, which the severity ratio
    needs; it shifts every loss by +0.5 relative to :func:`portfolio_losses`.
    """
    return portfolio_losses(np.asarray(pseudo, dtype=float) - 0.5, weights)


def _check_level(losses: np.ndarray, alpha: float) -> None:
    if not 0 < alpha < 1:
        raise OutOfDomain(f"alpha must lie in (0, 1), got {alpha}")
    # N >= 1/(1-alpha), with slack for 1/(1-0.95) = 20.000000000000004
    if losses.size < 1.0 / (1.0 - alpha) - 1e-9:
        raise TooFewObservations(f"{losses.size} losses too few for alpha={alpha}")


def _order_index(n: int, alpha: float) -> int:
    # ceil(alpha * n) with protection against 0.95 * 100 = 95.00000000000001
    return max(1, math.ceil(alpha * n - 1e-9))


def empirical_var(losses, alpha: float = 0.95) -> float:
    """The ``ceil(alpha * N)``-th smallest loss (inf-definition quantile)."""
    x = np.asarray(losses, dtype=float).ravel()
    _check_level(x, alpha)
    k = _order_index(x.size, alpha)
    return float(np.partition(x, k - 1)[k - 1])


def empirical_es(losses, alpha: float = 0.95) -> float:
    """Mean of losses strictly above VaR; VaR itself if nothing exceeds it."""
    x = np.asarray(losses, dtype=float).ravel()
    var = empirical_var(x, alpha)
    tail = x[x > var]
    return float(tail.mean()) if tail.size else var


def failure_ratio(var_model: float, test_losses, alpha: float = 0.95) -> float:
    x = np.asarray(test_losses, dtype=float).ravel()
    if x.size == 0:
        raise TooFewObservations("no test losses")
    return float(np.count_nonzero(x > var_model) / ((1.0 - alpha) * x.size))


def severity_ratio(var_model: float, es_model: float, test_losses, alpha: float = 0.95) -> float:
    """Observed tail-mean / model VaR, divided by model ES / model VaR."""
    if var_model == 0:
        raise ZeroVar("model VaR is zero; severity is undefined")
    x = np.asarray(test_losses, dtype=float).ravel()
    tail = x[x > var_model]
    if tail.size == 0:
        raise NoExceedances(f"no test loss exceeds VaR {var_model}")
    observed = tail.mean() / var_model
    expected = es_model / var_model
    return float(observed / expected)


def bootstrap_distribution(statistic: Callable[[np.ndarray], float], data, B: int = 1000,
                           seed: int = 0) -> np.ndarray:
    x = np.asarray(data)
    if x.shape[0] == 0:
        raise TooFewObservations("cannot bootstrap empty data")
    if B < 100:
        raise ValueError(f"need at least 100 resamples, got {B}")
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    out = np.empty(B)
    for b in range(B):
        out[b] = statistic(x[rng.integers(0, n, size=n)])
    return out


def bootstrap_ci(statistic: Callable[[np.ndarray], float], data, B: int = 1000,
                 level: float = 0.95, seed: int = 0) -> tuple[float, float]:
    """Percentile bootstrap interval over ``B`` resamples with replacement.

    Resamples whose statistic is undefined (e.g. no exceedances) are dropped.
    """
    def safe(sample):
        try:
            return statistic(sample)
        except (NoExceedances, ZeroVar, TooFewObservations):
            return math.nan

    draws = bootstrap_distribution(safe, data, B, seed)
    draws = draws[np.isfinite(draws)]
    if draws.size == 0:
        return (math.nan, math.nan)
    tail = (1.0 - level) / 2.0
    lo, hi = np.quantile(draws, [tail, 1.0 - tail])
    return float(lo), float(hi)


def backtest(model_losses, test_losses, alpha: float = 0.95, space: str = "copula",
             B: int = 1000, seed: int = 0) -> RiskReport:
    """VaR/ES of the model sample, checked against held-out losses.

    VaR and ES intervals resample the model sample; failure and severity
    intervals resample the test losses with the model VaR/ES held fixed.
    """
    model_losses = np.asarray(model_losses, dtype=float)
    test_losses = np.asarray(test_losses, dtype=float)
    var = empirical_var(model_losses, alpha)
    es = empirical_es(model_losses, alpha)
    fr = failure_ratio(var, test_losses, alpha)
    try:
        sr = severity_ratio(var, es, test_losses, alpha)
    except NoExceedances:
        sr = math.nan
    ci = {
        "var": bootstrap_ci(lambda s: empirical_var(s, alpha), model_losses, B, seed=seed),
        "es": bootstrap_ci(lambda s: empirical_es(s, alpha), model_losses, B, seed=seed + 1),
        "failure_ratio": bootstrap_ci(lambda s: failure_ratio(var, s, alpha), test_losses, B, seed=seed + 2),
        "severity_ratio": bootstrap_ci(
            lambda s: severity_ratio(var, es, s, alpha), test_losses, B, seed=seed + 3
        ),
    }
    return RiskReport(alpha, var, es, fr, sr, space, ci)


def write_risk_csv(path, rows: list[list]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "space", "metric", "point", "lo", "hi"])
        for row in rows:
            w.writerow([*row[:3], *(repr(float(v)) for v in row[3:])])


def dump_json(path, doc) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True))

