"""Conversion between copula-space samples and measurement bitstrings.

Each variable is binned to ``m`` bits, ``b = floor(d * 2**m)``, and the
per-variable codes are concatenated with variable 0 in the most significant
position: ``(0.735, 0.222)`` at ``m = 2`` gives ``10 | 00 = 0b1000``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, OutOfRange, TooManyQubits
from .marginals import PseudoSampleMatrix
from .sim import MAX_QUBITS, DiscreteDistribution


@dataclass(frozen=True)
class CodecConfig:
    num_vars: int
    bits_per_var: int

    def __post_init__(self):
        if self.num_vars < 1 or self.bits_per_var < 1:
            raise ValueError("num_vars and bits_per_var must be positive")
        if self.num_vars * self.bits_per_var > MAX_QUBITS:
            raise TooManyQubits(f"{self.num_vars * self.bits_per_var} bits exceeds {MAX_QUBITS}")

    @property
    def num_outcomes(self) -> int:
        return 1 << (self.num_vars * self.bits_per_var)


def _bins(d: np.ndarray, m: int) -> np.ndarray:
    if np.any(~((d >= 0.0) & (d < 1.0))):
        bad = d[~((d >= 0.0) & (d < 1.0))].flat[0]
        raise OutOfRange(f"copula-space entry {bad!r} outside [0, 1)")
    # floor of d*2^m is exact in binary floating point, and < 2^m for d < 1
    return np.floor(d * (1 << m)).astype(np.int64)


def encode_rows(rows, config: CodecConfig) -> np.ndarray:
    """Vectorized :func:`encode` over an ``N x n`` array."""
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    n, m = config.num_vars, config.bits_per_var
    if rows.shape[1] != n:
        raise DimensionMismatch(f"rows have {rows.shape[1]} columns, codec expects {n}")
    b = _bins(rows, m)
    shifts = m * np.arange(n - 1, -1, -1, dtype=np.int64)
    return (b << shifts).sum(axis=1)


def encode(sample, config: CodecConfig) -> int:
    return int(encode_rows(np.asarray(sample, dtype=float)[None, :], config)[0])


def encode_dataset(pseudo, config: CodecConfig) -> DiscreteDistribution:
    """Normalized histogram of encoded rows over all ``2**(n*m)`` outcomes."""
    rows = pseudo.rows if isinstance(pseudo, PseudoSampleMatrix) else np.asarray(pseudo)
    if rows.ndim != 2 or rows.shape[1] != config.num_vars:
        raise DimensionMismatch(f"expected {config.num_vars} columns, got shape {rows.shape}")
    if rows.shape[0] == 0:
        raise DimensionMismatch("cannot build a histogram from zero rows")
    idx = encode_rows(rows, config)
    counts = np.bincount(idx, minlength=config.num_outcomes).astype(float)
    return DiscreteDistribution(counts / counts.sum())


def split_index(indices, config: CodecConfig) -> np.ndarray:
    """Per-variable bin codes of each index, shape ``(len(indices), n)``."""
    idx = np.atleast_1d(np.asarray(indices, dtype=np.int64))
    if np.any((idx < 0) | (idx >= config.num_outcomes)):
        raise OutOfRange(f"index outside [0, {config.num_outcomes})")
    n, m = config.num_vars, config.bits_per_var
    shifts = m * np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] >> shifts) & ((1 << m) - 1)


def decode_indices(indices, config: CodecConfig, seed: int) -> np.ndarray:
    """Map outcome indices to copula-space rows with uniform in-bin padding.

    One seeded stream is consumed in row-major order, so the result depends
    only on ``seed`` and the index sequence.
    """
    b = split_index(indices, config)
    width = 1.0 / (1 << config.bits_per_var)
    rng = np.random.default_rng(seed)
    delta = rng.random(b.shape) * width
    out = b * width + delta
    # guard the top bin: b*w + delta may round up to exactly 1.0
    return np.minimum(out, np.nextafter(b * width + width, 0.0))


def decode(index: int, config: CodecConfig, seed: int) -> np.ndarray:
    return decode_indices([index], config, seed)[0]


def decode_counts(counts, config: CodecConfig, seed: int) -> np.ndarray:
    """Expand a histogram of counts into decoded rows, in index order."""
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size != config.num_outcomes:
        raise DimensionMismatch(f"{counts.size} counts for {config.num_outcomes} outcomes")
    idx = np.repeat(np.arange(config.num_outcomes), counts)
    return decode_indices(idx, config, seed)
