"""Price ingestion, log returns, standardization and train/test splitting."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import (
    DegenerateColumn,
    DimensionMismatch,
    EmptyPartition,
    MissingColumn,
    NoCommonDates,
    NonPositivePrice,
    TooFewObservations,
    UnparseableRow,
)

PERCENTILE_LEVELS = (5, 25, 50, 75, 95)


@dataclass(frozen=True)
class PriceSeries:
    asset_id: str
    dates: tuple[dt.date, ...]
    closes: np.ndarray

    def __post_init__(self):
        if len(self.dates) != len(self.closes):
            raise DimensionMismatch("dates and closes differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError(f"{self.asset_id}: dates must be strictly increasing")
        if np.any(~(np.asarray(self.closes) > 0)):
            raise ValueError(f"{self.asset_id}: closes must be strictly positive")

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class ReturnMatrix:
    asset_ids: tuple[str, ...]
    rows: np.ndarray
    dates: tuple[dt.date, ...] = ()

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=float)
        if rows.ndim != 2 or rows.shape[1] != len(self.asset_ids):
            raise DimensionMismatch(
                f"rows shape {rows.shape} does not match {len(self.asset_ids)} assets"
            )
        if not np.all(np.isfinite(rows)):
            raise ValueError("return matrix contains non-finite entries")
        if self.dates and len(self.dates) != rows.shape[0]:
            raise DimensionMismatch("dates and rows differ in length")
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        object.__setattr__(self, "dates", tuple(self.dates))

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows.shape

    def column(self, asset_id: str) -> np.ndarray:
        return self.rows[:, self.asset_ids.index(asset_id)]

    def take(self, index: np.ndarray) -> "ReturnMatrix":
        dates = tuple(self.dates[i] for i in index) if self.dates else ()
        return ReturnMatrix(self.asset_ids, self.rows[index], dates)


@dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    std: float
    skewness: float
    kurtosis: float
    min: float
    max: float
    percentiles: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class SplitDataset:
    train: ReturnMatrix
    test: ReturnMatrix
    seed: int
    ratio: float
    train_index: np.ndarray
    test_index: np.ndarray


def load_price_csv(path, asset_id: str | None = None) -> PriceSeries:
    """Read a ``date,close`` CSV into a :class:`PriceSeries`.

    Rows may appear in any order; they are sorted by date. Line numbers in
    errors are 1-based and count the header.
    """
    path = Path(path)
    asset_id = asset_id or path.stem
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise MissingColumn(f"{path}: empty file") from None
        for col in ("date", "close"):
            if col not in header:
                raise MissingColumn(f"{path}: header lacks {col!r} column")
        i_date, i_close = header.index("date"), header.index("close")
        records = {}
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                day = dt.date.fromisoformat(row[i_date].strip())
                close = float(row[i_close])
            except (IndexError, ValueError) as exc:
                raise UnparseableRow(line, f"({exc})", path) from None
            if not math.isfinite(close):
                raise UnparseableRow(line, "(non-finite close)", path)
            if close <= 0:
                raise NonPositivePrice(line, close, path)
            if day in records:
                raise UnparseableRow(line, f"(duplicate date {day})", path)
            records[day] = close
    days = sorted(records)
    return PriceSeries(asset_id, tuple(days), np.array([records[d] for d in days]))


def align_and_log_returns(series: Sequence[PriceSeries]) -> ReturnMatrix:
    """Intersect the series' calendars and take daily log returns."""
    if not series:
        raise NoCommonDates("no series given")
    common = set(series[0].dates)
    for s in series[1:]:
        common &= set(s.dates)
    if len(common) < 2:
        raise NoCommonDates(f"only {len(common)} common dates across {len(series)} series")
    days = sorted(common)
    cols = []
    for s in series:
        lookup = dict(zip(s.dates, s.closes))
        prices = np.array([lookup[d] for d in days])
        cols.append(np.log(prices[1:] / prices[:-1]))
    return ReturnMatrix(tuple(s.asset_id for s in series), np.column_stack(cols), tuple(days[1:]))


def standardize(matrix: ReturnMatrix) -> tuple[ReturnMatrix, list[tuple[float, float]]]:
    """Scale each column to sample mean 0 and sample std 1 (divisor M-1).

    Returns the standardized matrix and the per-column ``(mean, std)`` used,
    so :func:`unstandardize` can invert it.
    """
    x = matrix.rows
    if x.shape[0] < 2:
        raise TooFewObservations("standardization needs at least 2 rows")
    mean = x.mean(axis=0)
    centered = x - mean
    # second centering pass removes the rounding left by the first
    mean2 = centered.mean(axis=0)
    centered -= mean2
    mean = mean + mean2
    std = centered.std(axis=0, ddof=1)
    for j, s in enumerate(std):
        if not s > 0:
            raise DegenerateColumn(matrix.asset_ids[j])
    z = centered / std
    params = [(float(m), float(s)) for m, s in zip(mean, std)]
    return ReturnMatrix(matrix.asset_ids, z, matrix.dates), params


def unstandardize(matrix: ReturnMatrix, params: Sequence[tuple[float, float]]) -> ReturnMatrix:
    if len(params) != matrix.shape[1]:
        raise DimensionMismatch("one (mean, std) pair per column required")
    mean = np.array([p[0] for p in params])
    std = np.array([p[1] for p in params])
    return ReturnMatrix(matrix.asset_ids, matrix.rows * std + mean, matrix.dates)


def summary_stats(column) -> SummaryStats:
    """Moments and percentiles of a raw return column.

    Std uses the M-1 divisor. Skewness is the moment estimator and kurtosis
    is the raw (non-excess) fourth standardized moment; both are 0 for a
    constant column instead of NaN.
    """
    x = np.asarray(column, dtype=float)
    if x.size < 2:
        raise TooFewObservations(f"need at least 2 observations, got {x.size}")
    std = float(x.std(ddof=1))
    if np.ptp(x) == 0:
        skew, kurt = 0.0, 0.0
    else:
        skew = float(stats.skew(x, bias=True))
        kurt = float(stats.kurtosis(x, fisher=False, bias=True))
    pct = np.percentile(x, PERCENTILE_LEVELS, method="linear")
    return SummaryStats(
        count=int(x.size),
        mean=float(x.mean()),
        std=std,
        skewness=skew,
        kurtosis=kurt,
        min=float(x.min()),
        max=float(x.max()),
        percentiles={lvl: float(v) for lvl, v in zip(PERCENTILE_LEVELS, pct)},
    )


def split_train_test(matrix: ReturnMatrix, ratio: float = 0.8, seed: int = 0) -> SplitDataset:
    """Seeded shuffle, then the first ``floor(ratio * M)`` rows go to train.

    The permutation comes from numpy's PCG64 generator (a 64-bit PRNG) via
    ``Generator.permutation``, which is a Fisher-Yates shuffle, so splits are
    reproducible across platforms for a given seed.
    """
    if not 0 < ratio < 1:
        raise ValueError(f"ratio must lie in (0, 1), got {ratio}")
    m = matrix.shape[0]
    n_train = int(math.floor(ratio * m + 1e-9))
    if n_train == 0 or n_train == m:
        raise EmptyPartition(f"ratio {ratio} on {m} rows leaves an empty side")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(m)
    train_idx, test_idx = perm[:n_train], perm[n_train:]
    return SplitDataset(
        train=matrix.take(train_idx),
        test=matrix.take(test_idx),
        seed=seed,
        ratio=ratio,
        train_index=train_idx,
        test_index=test_idx,
    )


def write_return_csv(matrix: ReturnMatrix, path) -> None:
    """Write ``date,<asset1>,...`` rows; an undated matrix gets row numbers."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *matrix.asset_ids])
        for i, row in enumerate(matrix.rows):
            label = matrix.dates[i].isoformat() if matrix.dates else str(i)
            w.writerow([label, *(repr(float(v)) for v in row)])


def read_return_csv(path) -> ReturnMatrix:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "date":
            raise MissingColumn(f"{path}: first column must be 'date'")
        dates, rows = [], []
        for line, row in enumerate(reader, start=2):
            try:
                rows.append([float(v) for v in row[1:]])
                dates.append(row[0])
            except ValueError as exc:
                raise UnparseableRow(line, f"({exc})", path) from None
    arr = np.array(rows, dtype=float).reshape(len(rows), len(header) - 1)
    try:
        parsed = tuple(dt.date.fromisoformat(d) for d in dates)
    except ValueError:
        parsed = ()
    return ReturnMatrix(tuple(header[1:]), arr, parsed)
