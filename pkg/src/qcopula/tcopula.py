"""Classical t-copula baseline: Kendall-tau correlation, ML dof, sampling."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg, special, stats

from .errors import NonFiniteDensity, NotPositiveDefinite, OutOfDomain, TooFewObservations
from .marginals import PseudoSampleMatrix

DOF_GRID = (2.5, 3, 4, 5, 7, 10, 15, 25, 50, 100, 200)
DOF_BOUNDS = (2.01, 200.0)
EIG_FLOOR = 1e-6
MIN_ROWS = 100


@dataclass(frozen=True)
class TCopulaModel:
    corr: np.ndarray
    dof: float

    def __post_init__(self):
        corr = np.array(self.corr, dtype=float)
        if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
            raise ValueError("correlation matrix must be square")
        if not np.allclose(corr, corr.T, atol=1e-12):
            raise ValueError("correlation matrix must be symmetric")
        if not np.all(np.diag(corr) == 1.0):
            raise ValueError("correlation matrix must have unit diagonal")
        if np.linalg.eigvalsh(corr).min() <= 0:
            raise NotPositiveDefinite("correlation matrix is not positive definite")
        if not self.dof > 2:
            raise ValueError(f"dof must exceed 2, got {self.dof}")
        corr.setflags(write=False)
        object.__setattr__(self, "corr", corr)
        object.__setattr__(self, "dof", float(self.dof))

    @property
    def dim(self) -> int:
        return self.corr.shape[0]

    def to_json(self) -> str:
        return json.dumps({"dof": self.dof, "corr": self.corr.tolist()}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "TCopulaModel":
        doc = json.loads(text)
        return cls(np.array(doc["corr"]), doc["dof"])

    @classmethod
    def load(cls, path) -> "TCopulaModel":
        return cls.from_json(Path(path).read_text())


def nearest_correlation(matrix: np.ndarray, floor: float = EIG_FLOOR) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale back to a unit diagonal."""
    a = 0.5 * (np.asarray(matrix, dtype=float) + np.asarray(matrix, dtype=float).T)
    w, v = np.linalg.eigh(a)
    if w.min() >= floor:
        out = a
    else:
        out = (v * np.maximum(w, floor)) @ v.T
        d = np.sqrt(np.diag(out))
        out = out / np.outer(d, d)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    if np.linalg.eigvalsh(out).min() <= 1e-10:
        raise NotPositiveDefinite("eigenvalue floor did not restore positive definiteness")
    return out


def kendall_tau_matrix(u: np.ndarray) -> np.ndarray:
    n = u.shape[1]
    tau = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            tau[i, j] = tau[j, i] = stats.kendalltau(u[:, i], u[:, j]).statistic
    return tau


def _loglik_from_quantiles(x: np.ndarray, chol: np.ndarray, logdet: float, dof: float) -> float:
    n = x.shape[1]
    # solve L y = x^T so that y^T y = x^T R^{-1} x
    y = linalg.solve_triangular(chol, x.T, lower=True)
    quad = np.einsum("ij,ij->j", y, y)
    joint = (
        special.gammaln((dof + n) / 2)
        - special.gammaln(dof / 2)
        - 0.5 * n * np.log(dof * np.pi)
        - 0.5 * logdet
        - (dof + n) / 2 * np.log1p(quad / dof)
    )
    uni = (
        special.gammaln((dof + 1) / 2)
        - special.gammaln(dof / 2)
        - 0.5 * np.log(dof * np.pi)
        - (dof + 1) / 2 * np.log1p(x * x / dof)
    ).sum(axis=1)
    return float(np.sum(joint - uni))


def t_copula_log_likelihood(model: TCopulaModel, pseudo) -> float:
    """Sum over rows of the log t-copula density."""
    u = pseudo.rows if isinstance(pseudo, PseudoSampleMatrix) else np.atleast_2d(pseudo)
    if np.any(~((u > 0) & (u < 1))):
        raise OutOfDomain("copula density needs entries in (0, 1)")
    x = special.stdtrit(model.dof, u)
    chol = np.linalg.cholesky(model.corr)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    val = _loglik_from_quantiles(x, chol, logdet, model.dof)
    if not math.isfinite(val):
        raise NonFiniteDensity(f"log-likelihood is {val} at dof={model.dof}")
    return val


def _golden_max(f, lo: float, hi: float, tol: float = 1e-4, max_iter: int = 100) -> float:
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = hi - g * (hi - lo), lo + g * (hi - lo)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if hi - lo < tol * max(1.0, abs(c)):
            break
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - g * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + g * (hi - lo)
            fd = f(d)
    return c if fc > fd else d


def fit_t_copula(pseudo: PseudoSampleMatrix) -> TCopulaModel:
    """Fit correlation by Kendall-tau inversion and dof by profile likelihood.

    dof is first scanned over a fixed grid and then refined by golden-section
    search between the grid neighbours of the best point.
    """
    u = pseudo.rows
    m, n = u.shape
    if n < 2:
        raise TooFewObservations("a copula needs at least two variables")
    if m < MIN_ROWS:
        raise TooFewObservations(f"need at least {MIN_ROWS} rows, got {m}")
    u = np.clip(u, 1e-12, 1 - 1e-12)
    tau = kendall_tau_matrix(u)
    corr = nearest_correlation(np.sin(np.pi * tau / 2.0))
    chol = np.linalg.cholesky(corr)
    logdet = 2.0 * np.log(np.diag(chol)).sum()

    def profile(dof: float) -> float:
        val = _loglik_from_quantiles(special.stdtrit(dof, u), chol, logdet, dof)
        return val if math.isfinite(val) else -math.inf

    grid = list(DOF_GRID)
    scores = [profile(d) for d in grid]
    k = int(np.argmax(scores))
    lo = grid[k - 1] if k > 0 else DOF_BOUNDS[0]
    hi = grid[k + 1] if k < len(grid) - 1 else DOF_BOUNDS[1]
    dof = _golden_max(profile, lo, hi)
    if profile(dof) < scores[k]:
        dof = grid[k]
    return TCopulaModel(corr, float(np.clip(dof, *DOF_BOUNDS)))


def sample_t_copula(model: TCopulaModel, count: int, seed: int, asset_ids=None) -> PseudoSampleMatrix:
    """Draw ``count`` rows: Cholesky-correlated normals over a chi-square mixing.

    Uses the counter-based Philox generator so a seed fixes the stream.
    """
    n = model.dim
    ids = tuple(asset_ids) if asset_ids is not None else tuple(f"u{j}" for j in range(n))
    if count < 1:
        return PseudoSampleMatrix(ids, np.empty((0, n)))
    rng = np.random.Generator(np.random.Philox(seed))
    chol = np.linalg.cholesky(model.corr)
    z = rng.standard_normal((count, n)) @ chol.T
    w = rng.chisquare(model.dof, size=count) / model.dof
    t = z / np.sqrt(w)[:, None]
    u = special.stdtr(model.dof, t)
    # a t-CDF of a huge draw can round to exactly 1.0
    np.clip(u, 1e-12, 1 - 1e-12, out=u)
    return PseudoSampleMatrix(ids, u)
