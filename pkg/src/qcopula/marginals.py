"""Student-t marginals and the probability integral transform."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import optimize, special

from .data import ReturnMatrix
from .errors import DimensionMismatch, FitDiverged, OutOfDomain, TooFewObservations

DOF_MIN, DOF_MAX = 2.01, 200.0
PIT_CLIP = 1e-12
MIN_FIT_SIZE = 50


@dataclass(frozen=True)
class StudentTMarginal:
    location: float
    scale: float
    dof: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        # any positive dof is a valid distribution; only the fit is boxed
        if not self.dof > 0:
            raise ValueError(f"dof must be positive, got {self.dof}")


@dataclass(frozen=True)
class PseudoSampleMatrix:
    asset_ids: tuple[str, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.asset_ids):
            raise DimensionMismatch(f"rows shape {rows.shape} vs {len(self.asset_ids)} assets")
        if rows.size and not (rows.min() >= 0.0 and rows.max() < 1.0):
            raise OutOfDomain("pseudo-samples must lie in [0, 1)")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape


def t_loglik(x: np.ndarray, location: float, scale: float, dof: float) -> float:
    """Log-likelihood of a location-scale Student-t sample."""
    z = (np.asarray(x, dtype=float) - location) / scale
    n = z.size
    const = (
        special.gammaln((dof + 1) / 2)
        - special.gammaln(dof / 2)
        - 0.5 * np.log(dof * np.pi)
        - np.log(scale)
    )
    return float(n * const - (dof + 1) / 2 * np.log1p(z * z / dof).sum())


def _moment_init(x: np.ndarray) -> tuple[float, float, float]:
    loc = float(x.mean())
    std = float(x.std(ddof=1))
    m2 = np.mean((x - loc) ** 2)
    excess = float(np.mean((x - loc) ** 4) / m2**2 - 3.0)
    # excess kurtosis of t is 6 / (dof - 4)
    dof = 4.0 + 6.0 / excess if excess > 0 else DOF_MAX
    dof = float(np.clip(dof, DOF_MIN, DOF_MAX))
    scale = std * np.sqrt((dof - 2.0) / dof)
    return loc, scale, dof


def fit_student_t(column) -> StudentTMarginal:
    """Maximum-likelihood location-scale t fit with dof boxed to [2.01, 200].

    Nelder-Mead over ``(location, log scale, log dof)`` started from the
    method-of-moments estimate. The moment estimate is returned unchanged if
    the search somehow ends lower.
    """
    x = np.asarray(column, dtype=float)
    if x.size < MIN_FIT_SIZE:
        raise TooFewObservations(f"need at least {MIN_FIT_SIZE} observations, got {x.size}")
    if not np.all(np.isfinite(x)):
        raise FitDiverged("column contains non-finite values")
    if np.ptp(x) == 0:
        raise FitDiverged("constant column: scale collapses to zero")
    loc0, scale0, dof0 = _moment_init(x)
    ll0 = t_loglik(x, loc0, scale0, dof0)
    if not np.isfinite(ll0):
        raise FitDiverged("log-likelihood non-finite at the moment estimate")

    lo, hi = np.log(DOF_MIN), np.log(DOF_MAX)

    def nll(p):
        loc, log_scale, log_dof = p
        val = -t_loglik(x, loc, np.exp(log_scale), np.exp(np.clip(log_dof, lo, hi)))
        return val if np.isfinite(val) else np.inf

    res = optimize.minimize(
        nll,
        x0=[loc0, np.log(scale0), np.log(dof0)],
        method="Nelder-Mead",
        bounds=[(None, None), (None, None), (lo, hi)],
        options={
            "xatol": 1e-9,
            "fatol": 1e-9 * abs(ll0),
            "maxfev": 2000,
            "adaptive": False,
        },
    )
    if not np.isfinite(res.fun):
        raise FitDiverged(f"optimizer ended at a non-finite objective: {res.message}")
    if -res.fun < ll0:
        return StudentTMarginal(loc0, scale0, dof0)
    loc, log_scale, log_dof = res.x
    return StudentTMarginal(
        float(loc), float(np.exp(log_scale)), float(np.exp(np.clip(log_dof, lo, hi)))
    )


def student_t_cdf(model: StudentTMarginal, x):
    """CDF of the location-scale t (regularized incomplete beta, via scipy)."""
    z = (np.asarray(x, dtype=float) - model.location) / model.scale
    out = special.stdtr(model.dof, z)
    return float(out) if np.ndim(out) == 0 else out


def student_t_quantile(model: StudentTMarginal, u):
    """Inverse CDF, polished by Newton steps to |cdf(q) - u| < 1e-12."""
    u_arr = np.asarray(u, dtype=float)
    if np.any(~((u_arr > 0) & (u_arr < 1))):
        raise OutOfDomain("quantile level must lie in the open interval (0, 1)")
    nu = model.dof
    z = special.stdtrit(nu, u_arr)
    log_c = special.gammaln((nu + 1) / 2) - special.gammaln(nu / 2) - 0.5 * np.log(nu * np.pi)
    for _ in range(3):
        err = special.stdtr(nu, z) - u_arr
        # skip points already at floating resolution; Newton there just oscillates
        if np.all(np.abs(err) < 1e-15):
            break
        pdf = np.exp(log_c - (nu + 1) / 2 * np.log1p(z * z / nu))
        step = np.where(pdf > 0, err / np.where(pdf > 0, pdf, 1.0), 0.0)
        z = z - np.where(np.abs(err) >= 1e-15, step, 0.0)
    out = model.location + model.scale * z
    return float(out) if np.ndim(out) == 0 else out


def _check_models(n_cols: int, models: Sequence[StudentTMarginal]) -> None:
    if len(models) != n_cols:
        raise DimensionMismatch(f"{len(models)} marginal models for {n_cols} columns")


def pit(matrix: ReturnMatrix, models: Sequence[StudentTMarginal]) -> PseudoSampleMatrix:
    """Map returns into copula space column by column, clipped to [1e-12, 1-1e-12]."""
    _check_models(matrix.shape[1], models)
    u = np.empty_like(matrix.rows)
    for j, model in enumerate(models):
        u[:, j] = student_t_cdf(model, matrix.rows[:, j])
    np.clip(u, PIT_CLIP, 1.0 - PIT_CLIP, out=u)
    return PseudoSampleMatrix(matrix.asset_ids, u)


def inverse_pit(pseudo: PseudoSampleMatrix, models: Sequence[StudentTMarginal]) -> ReturnMatrix:
    _check_models(pseudo.shape[1], models)
    y = np.empty_like(pseudo.rows)
    for j, model in enumerate(models):
        y[:, j] = student_t_quantile(model, pseudo.rows[:, j])
    return ReturnMatrix(pseudo.asset_ids, y)


def marginals_to_json(asset_ids: Sequence[str], models: Sequence[StudentTMarginal]) -> str:
    entries = [{"asset": a, **asdict(m)} for a, m in zip(asset_ids, models)]
    return json.dumps(entries, indent=2)


def marginals_from_json(text: str) -> tuple[list[str], list[StudentTMarginal]]:
    entries = json.loads(text)
    ids = [e["asset"] for e in entries]
    models = [StudentTMarginal(e["location"], e["scale"], e["dof"]) for e in entries]
    return ids, models


def load_marginals(path) -> tuple[list[str], list[StudentTMarginal]]:
    return marginals_from_json(Path(path).read_text())
