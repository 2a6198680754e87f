"""Period images: fold a lookback into a (within-period, period) grid and back."""
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError

DEFAULT_PERIODS = {"hourly": 24, "15min": 96, "10min": 144}


@dataclass
class PeriodImage:
    """``values[p, m]`` is point ``p`` of historical period ``m`` (oldest first)."""

    values: np.ndarray
    remainder: np.ndarray

    @property
    def P(self):
        return self.values.shape[-2]

    @property
    def N(self):
        return self.values.shape[-1]


@dataclass(frozen=True)
class PatchLayout:
    K: int
    boundaries: tuple

    @property
    def lengths(self):
        b = self.boundaries
        return [b[k + 1] - b[k] for k in range(self.K)]

    def row_patch(self):
        """Patch index of every row, shape ``(P,)``."""
        return np.repeat(np.arange(self.K), self.lengths)


def default_period(frequency):
    """One day of points for the given sampling frequency."""
    key = str(frequency).lower().replace("-", "").replace("_", "")
    key = {"h": "hourly", "hour": "hourly", "min15": "15min", "15m": "15min",
           "min10": "10min", "10m": "10min"}.get(key, key)
    if key not in DEFAULT_PERIODS:
        raise ConfigError(f"unknown sampling frequency {frequency!r}; "
                          f"expected one of {sorted(DEFAULT_PERIODS)}")
    return DEFAULT_PERIODS[key]


def detect_period(x):
    """Dominant period from the magnitude spectrum of the mean-removed series.

    The DC bin is skipped; among equal magnitudes the lowest frequency wins.
    The result ``round(T / f)`` is clamped to ``[2, T // 2]``.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[0]
    if T < 4:
        raise DataError(f"period detection needs at least 4 points, got {T}")
    centred = x - x.mean()
    if np.ptp(x) == 0 or not np.any(centred):
        raise DataError("cannot detect a period in a constant series; supply the period explicitly")
    mag = np.abs(np.fft.rfft(centred))
    mag[0] = -np.inf
    # argmax returns the first (lowest-frequency) maximum
    f = int(np.argmax(mag))
    return int(min(max(round(T / f), 2), T // 2))


def to_image(x, P):
    """Fold the most recent ``(T // P) * P`` points into a ``(P, T // P)`` image.

    Accepts a batch ``(..., T)``; the image then has shape ``(..., P, N)``.
    """
    x = np.asarray(x, dtype=np.float64)
    T = x.shape[-1]
    if P < 1 or T < P:
        raise DataError(f"lookback of {T} points is shorter than the period {P}")
    N = T // P
    r = T - N * P
    body = x[..., r:].reshape(x.shape[:-1] + (N, P))
    return PeriodImage(np.swapaxes(body, -1, -2), x[..., :r])


def from_image(img, H):
    """Unfold an image column by column (oldest first) and keep ``H`` points."""
    img = np.asarray(img)
    P, M = img.shape[-2:]
    if P * M < H:
        raise DataError(f"image of {P}x{M} holds {P * M} points, fewer than H={H}")
    flat = np.swapaxes(img, -1, -2).reshape(img.shape[:-2] + (P * M,))
    return flat[..., :H]


def patch_layout(P, K):
    if not 1 <= K <= P:
        raise ConfigError(f"patch count K={K} must lie in [1, P={P}]" +
                          ("; patch count exceeds period" if K > P else ""))
    step = P // K
    return PatchLayout(K, tuple([k * step for k in range(K)] + [P]))
