"""Bundled synthetic stand-in for the DJI / VIX / N225 / RUT price histories.

Returns are drawn from a t-copula with Student-t marginals whose location
and scale roughly follow the real index statistics, then cumulated into
prices on a business-day calendar. Each asset also trades on a few days the
others skip, so calendar alignment is exercised: the common calendar has
4730 days, i.e. 4729 aligned returns.
"""

from __future__ import annotations

import csv
import datetime as dt
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import special

ASSETS = ("DJI", "VIX", "N225", "RUT")
COMMON_DAYS = 4730
START = dt.date(2001, 1, 4)
SEED = 20010104

# DJI, VIX, N225, RUT
CORR = np.array(
    [
        [1.00, -0.70, 0.25, 0.85],
        [-0.70, 1.00, -0.20, -0.65],
        [0.25, -0.20, 1.00, 0.22],
        [0.85, -0.65, 0.22, 1.00],
    ]
)
COPULA_DOF = 5.0
# per-asset (location, scale, dof) of the daily log return
MARGINALS = {
    "DJI": (0.0002, 0.0075, 3.0),
    "VIX": (-0.0002, 0.0520, 4.0),
    "N225": (0.0001, 0.0110, 3.5),
    "RUT": (0.0002, 0.0110, 3.5),
}
START_PRICE = {"DJI": 10000.0, "VIX": 25.0, "N225": 13000.0, "RUT": 480.0}


def _business_days(start: dt.date, count: int) -> list[dt.date]:
    days, d = [], start
    while len(days) < count:
        if d.weekday() < 5:
            days.append(d)
        d += dt.timedelta(days=1)
    return days


def make_synthetic_indices(seed: int = SEED, common_days: int = COMMON_DAYS):
    """Return ``{asset: (dates, closes)}`` for the synthetic four-index set."""
    rng = np.random.Generator(np.random.Philox(seed))
    n_extra = 40
    calendar = _business_days(START, common_days + n_extra)
    extra_pos = np.sort(rng.choice(np.arange(1, len(calendar) - 1), n_extra, replace=False))
    extra_set = set(extra_pos.tolist())
    common = [d for i, d in enumerate(calendar) if i not in extra_set]

    m = common_days - 1
    chol = np.linalg.cholesky(CORR)
    z = rng.standard_normal((m, len(ASSETS))) @ chol.T
    w = rng.chisquare(COPULA_DOF, size=m) / COPULA_DOF
    u = special.stdtr(COPULA_DOF, z / np.sqrt(w)[:, None])

    # day k of the extras goes to asset k % 4 only, so no extra day is shared by all
    owner = {int(p): ASSETS[k % len(ASSETS)] for k, p in enumerate(extra_pos)}
    out = {}
    for j, asset in enumerate(ASSETS):
        loc, scale, dof = MARGINALS[asset]
        r = loc + scale * special.stdtrit(dof, u[:, j])
        log_p = np.log(START_PRICE[asset]) + np.concatenate([[0.0], np.cumsum(r)])
        prices = dict(zip(common, np.exp(log_p)))
        for pos, who in owner.items():
            if who == asset:
                # off-calendar quote between the neighbouring common days
                prev = max(d for d in common if d < calendar[pos])
                prices[calendar[pos]] = prices[prev] * float(np.exp(rng.normal(0.0, scale)))
        days = sorted(prices)
        out[asset] = (days, np.array([prices[d] for d in days]))
    return out


def write_synthetic_csvs(directory, seed: int = SEED) -> dict[str, Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {}
    for asset, (days, closes) in make_synthetic_indices(seed).items():
        path = directory / f"{asset}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "close"])
            for d, c in zip(days, closes):
                w.writerow([d.isoformat(), f"{c:.10g}"])
        paths[asset] = path
    return paths


def bundled_paths() -> dict[str, Path]:
    """Paths of the synthetic price CSVs shipped with the package."""
    root = resources.files(__name__) / "synthetic"
    return {a: Path(str(root / f"{a}.csv")) for a in ASSETS}


def load_bundled():
    """Aligned (unstandardized) log-return matrix of the bundled dataset."""
    from ..data import align_and_log_returns, load_price_csv

    paths = bundled_paths()
    return align_and_log_returns([load_price_csv(paths[a], a) for a in ASSETS])


def bundled_pseudo_samples(ratio: float = 0.8, seed: int = 0, assets=ASSETS):
    """Standardize, split and PIT the bundled data through fitted t marginals.

    Returns ``(split, models, train_pseudo, test_pseudo)`` restricted to
    ``assets``.
    """
    from ..data import ReturnMatrix, split_train_test, standardize
    from ..marginals import fit_student_t, pit

    full = load_bundled()
    cols = [full.asset_ids.index(a) for a in assets]
    sub = ReturnMatrix(tuple(assets), full.rows[:, cols], full.dates)
    z, _ = standardize(sub)
    split = split_train_test(z, ratio, seed)
    models = [fit_student_t(split.train.rows[:, j]) for j in range(len(assets))]
    return split, models, pit(split.train, models), pit(split.test, models)
