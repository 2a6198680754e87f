"""CSV ingestion, chronological splits, window slicing and normalisation."""
import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataError

EPS = 1e-8

# conventional ETT borders: 12 / 4 / 4 months of 30 days
_ETT_MONTHS = (12, 4, 4)


@dataclass
class SeriesMatrix:
    """Multivariate series stored variate-major, ``values.shape == (D, L)``.

    ``context`` holds the points that precede this series in the file it was
    split from (``(D, start)``); validation and test windows may borrow their
    lookback from it.
    """

    values: np.ndarray
    variate_names: list
    timestamps: list
    context: np.ndarray = field(default=None, repr=False)

    @property
    def D(self):
        return self.values.shape[0]

    @property
    def L(self):
        return self.values.shape[1]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise DataError(f"values must be 2-D (variates x time), got shape {self.values.shape}")
        if self.context is None:
            self.context = np.empty((self.values.shape[0], 0))


def load_csv(path):
    """Read a header-first CSV whose first column is a timestamp.

    Errors name the 1-based data row and 1-based file column of the
    offending cell.
    """
    if not os.path.isfile(path):
        raise DataError(f"no such data file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if len(header) < 2:
            raise DataError(f"{path}: need a timestamp column and at least one value column")
        width = len(header)
        stamps, rows = [], []
        for r, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}: data row {r} has {len(row)} cells, header has {width}")
            vals = []
            for c, cell in enumerate(row[1:], start=2):
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: non-numeric cell {cell!r} at data row {r}, column {c}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite value at data row {r}, column {c}")
                vals.append(v)
            stamps.append(row[0])
            rows.append(vals)
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows, found {len(rows)}")
    return SeriesMatrix(np.array(rows, dtype=np.float64).T.copy(), header[1:], stamps)


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/validation/test split.

    ``mode="ratio"`` cuts at ``floor(L * r_train)`` and
    ``floor(L * (r_train + r_val))``. ``mode="ett"`` uses the fixed
    12/4/4-month borders; ``points_per_hour`` is 1 for hourly ETT and 4 for
    the 15-minute files.
    """

    mode: str = "ratio"
    ratios: tuple = (0.7, 0.1, 0.2)
    points_per_hour: int = 1

    def __post_init__(self):
        if self.mode not in ("ratio", "ett"):
            raise DataError(f"unknown split mode {self.mode!r}")
        if self.mode == "ratio":
            if len(self.ratios) != 3 or min(self.ratios) < 0 or abs(sum(self.ratios) - 1) > 1e-9:
                raise DataError(f"split ratios must be three non-negative numbers summing to 1, "
                                f"got {self.ratios}")

    def borders(self, L):
        if self.mode == "ratio":
            a = math.floor(L * self.ratios[0])
            b = math.floor(L * (self.ratios[0] + self.ratios[1]))
            return 0, a, b, L
        day = 24 * self.points_per_hour
        sizes = [m * 30 * day for m in _ETT_MONTHS]
        a, b, c = sizes[0], sizes[0] + sizes[1], sum(sizes)
        if c > L:
            raise DataError(f"ETT borders need {c} points, series has {L}")
        return 0, a, b, c


def _slice(series, start, stop):
    return SeriesMatrix(series.values[:, start:stop], list(series.variate_names),
                        series.timestamps[start:stop], context=series.values[:, :start])


def split(series, spec, T=None, H=None):
    """Return ``(train, val, test)`` segments.

    When ``T`` and ``H`` are given, every segment is checked to admit at least
    one window (train fully interior, val/test with lookback overhang).
    """
    _, a, b, c = spec.borders(series.L)
    parts = (_slice(series, 0, a), _slice(series, a, b), _slice(series, b, c))
    if T is not None and H is not None:
        short = []
        for name, seg, overhang in zip(("train", "validation", "test"), parts, (False, True, True)):
            if count_windows(seg, T, H, overhang) < 1:
                short.append(f"{name} ({seg.L} points)")
        if short:
            raise DataError(f"segment too short for one window (T={T}, H={H}): " + ", ".join(short))
    return parts


@dataclass
class WindowPair:
    lookback: np.ndarray
    target: np.ndarray
    origin_index: int


def count_windows(segment, T, H, allow_overhang=False):
    if allow_overhang:
        # lookback may start up to T points before the segment
        reach = min(T, segment.context.shape[1])
        return segment.L + reach - T - H + 1
    return segment.L - T - H + 1


class WindowSet:
    """Stride-1 (lookback, target) windows over one segment.

    Indexing returns :class:`WindowPair`; :meth:`batch` gathers many windows
    at once as ``(n, D, T)`` and ``(n, D, H)`` arrays.
    """

    def __init__(self, segment, T, H, allow_overhang=False):
        if T < 1 or H < 1:
            raise DataError(f"T and H must be >= 1, got T={T}, H={H}")
        n = count_windows(segment, T, H, allow_overhang)
        if n < 1:
            raise DataError(f"no valid window: segment of {segment.L} points, T={T}, H={H}"
                            + (" (with overhang)" if allow_overhang else ""))
        self.T, self.H = T, H
        self.D = segment.D
        reach = min(T, segment.context.shape[1]) if allow_overhang else 0
        self._data = np.concatenate([segment.context[:, segment.context.shape[1] - reach:],
                                     segment.values], axis=1)
        self._reach = reach
        self._n = n
        self._view = sliding_window_view(self._data, T + H, axis=1)

    def __len__(self):
        return self._n

    @property
    def origins(self):
        return np.arange(self._n) + self.T - self._reach

    def __getitem__(self, i):
        if i < 0:
            i += self._n
        if not 0 <= i < self._n:
            raise IndexError(i)
        w = self._view[:, i]
        return WindowPair(w[:, :self.T].copy(), w[:, self.T:].copy(), i + self.T - self._reach)

    def batch(self, idx):
        w = self._view[:, idx]  # (D, n, T+H)
        w = np.moveaxis(w, 0, 1)
        return w[..., :self.T], w[..., self.T:]


    def samples(self, idx):
        """Univariate samples: flat index ``i`` is window ``i // D``, variate ``i % D``.

        Returns ``(lookbacks, targets)`` with shapes ``(n, T)`` and ``(n, H)``.
        """
        idx = np.asarray(idx)
        w = self._view[idx % self.D, idx // self.D]
        return w[:, :self.T], w[:, self.T:]


def windows(segment, T, H, allow_overhang=False):
    return WindowSet(segment, T, H, allow_overhang)


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray


def normalize(lookback, center=True):
    """Per-row (last axis) instance normalisation.

    Works on any leading shape; ``mean.shape == lookback.shape[:-1]``. With
    ``center=False`` the mean is recorded as zero and only the std divides.
    """
    x = np.asarray(lookback, dtype=np.float64)
    mean = x.mean(axis=-1)
    std = np.maximum(x.std(axis=-1), EPS)
    if not center:
        mean = np.zeros_like(mean)
    return (x - mean[..., None]) / std[..., None], NormStats(mean, std)


def denormalize(x, stats):
    return np.asarray(x) * stats.std[..., None] + stats.mean[..., None]


def fit_standardizer(series):
    """Dataset-level z-score statistics per variate (fit on the train split)."""
    return NormStats(series.values.mean(axis=1), np.maximum(series.values.std(axis=1), EPS))


def standardize(series, stats):
    vals = (series.values - stats.mean[:, None]) / stats.std[:, None]
    ctx = (series.context - stats.mean[:, None]) / stats.std[:, None]
    return SeriesMatrix(vals, list(series.variate_names), list(series.timestamps), context=ctx)
