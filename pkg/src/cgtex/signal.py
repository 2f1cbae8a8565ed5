"""Multichannel records, K x N segmentation and per-segment statistics."""

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import linalg

__all__ = [
    "MultichannelRecord",
    "SegmentedSignal",
    "SegmentStat",
    "ingest_csv",
    "segment",
    "segment_stats",
    "spd_cholesky",
    "quad_forms",
    "DataFormatError",
]


class DataFormatError(ValueError):
    """Raised for unreadable or malformed input tables."""


@dataclass(frozen=True)
class MultichannelRecord:
    """T x d samples plus channel metadata."""

    samples: np.ndarray
    sample_rate: float = 2000.0
    channel_names: tuple = ()

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        if s.ndim != 2 or s.shape[0] < 1 or s.shape[1] < 1:
            raise ValueError("samples must be a non-empty T x d matrix")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples must be finite")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        names = tuple(self.channel_names) or tuple(f"ch{i + 1}" for i in range(s.shape[1]))
        if len(names) != s.shape[1]:
            raise ValueError("one channel name per column is required")
        object.__setattr__(self, "channel_names", names)

    @property
    def T(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class SegmentedSignal:
    """Observations arranged as ``segments[k, n, :]``, K segments of N samples."""

    segments: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.segments, dtype=float)
        if y.ndim != 3:
            raise ValueError("segments must have shape (K, N, d)")
        if not np.all(np.isfinite(y)):
            raise ValueError("segments must be finite")
        y.setflags(write=False)
        object.__setattr__(self, "segments", y)

    @property
    def K(self) -> int:
        return self.segments.shape[0]

    @property
    def N(self) -> int:
        return self.segments.shape[1]

    @property
    def d(self) -> int:
        return self.segments.shape[2]

    def flat(self) -> np.ndarray:
        """All K*N samples as a (K*N, d) matrix in source order."""
        return self.segments.reshape(-1, self.d)


@dataclass(frozen=True)
class SegmentStat:
    t1: np.ndarray
    seg_mean: np.ndarray


def ingest_csv(path, channel_selection: Optional[Sequence[str]] = None,
               sample_rate: float = 2000.0) -> MultichannelRecord:
    """
    Read a header-first, comma-separated table with one column per channel.

    Parameters
    ----------
    path : str or Path
        CSV file. First row holds the channel names.
    channel_selection : sequence of str, optional
        Columns to keep, in the given order. All columns when omitted.
    sample_rate : float
        Sampling frequency in Hz; not stored in the file.

    Raises
    ------
    FileNotFoundError
        The file does not exist.
    DataFormatError
        Empty file, unknown column, or a cell that is not a finite number
        (the message names the row and column).
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"input file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataFormatError(f"{path}: empty file")
        header = [h.strip() for h in header]
        names = list(channel_selection) if channel_selection else header
        missing = [n for n in names if n not in header]
        if missing:
            raise DataFormatError(f"{path}: missing column(s) {', '.join(missing)}")
        cols = [header.index(n) for n in names]
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for c, name in zip(cols, names):
                cell = row[c].strip() if c < len(row) else ""
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if not math.isfinite(v):
                    raise DataFormatError(
                        f"{path}: row {lineno}, column {name!r}: non-numeric value {cell!r}")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return MultichannelRecord(np.array(rows), sample_rate=sample_rate, channel_names=tuple(names))


def segment(record: MultichannelRecord, K: int, N: int) -> SegmentedSignal:
    """Cut the first K*N samples into K contiguous segments; the tail is dropped."""
    if K < 1 or N < 1:
        raise ValueError("K and N must be positive")
    if K * N > record.T:
        raise ValueError(f"K*N = {K * N} exceeds the record length T = {record.T}")
    return SegmentedSignal(record.samples[: K * N].reshape(K, N, record.d))


def spd_cholesky(sigma) -> np.ndarray:
    """Lower Cholesky factor of a symmetric positive-definite matrix."""
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    if sigma.shape[0] != sigma.shape[1]:
        raise ValueError("covariance must be square")
    if not np.allclose(sigma, sigma.T, rtol=1e-10, atol=1e-12 * np.abs(sigma).max()):
        raise ValueError("covariance must be symmetric")
    try:
        return linalg.cholesky(sigma, lower=True)
    except linalg.LinAlgError as exc:
        raise ValueError("covariance is not positive definite") from exc


def quad_forms(y: np.ndarray, mu, chol: np.ndarray) -> np.ndarray:
    """(y - mu)^T Sigma^{-1} (y - mu) along the last axis, Sigma = chol chol^T."""
    d = chol.shape[0]
    r = (np.asarray(y) - np.asarray(mu)).reshape(-1, d)
    w = linalg.solve_triangular(chol, r.T, lower=True)
    return np.einsum("ij,ij->j", w, w).reshape(np.shape(y)[:-1])


def segment_stats(sig: SegmentedSignal, mu, sigma) -> SegmentStat:
    """Half-sum of Mahalanobis forms per segment, and the segment means."""
    chol = spd_cholesky(sigma)
    q = quad_forms(sig.segments, mu, chol)
    return SegmentStat(t1=0.5 * q.sum(axis=1), seg_mean=sig.segments.mean(axis=1))
