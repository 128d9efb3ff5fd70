"""Online multi-scale history of block features.

Each segment owns one buffer holding the last 480 minutes of basic block
features. Pushing a minute applies the imputation rules (forward fill from
the last valid value still inside the buffer span, otherwise the median of
all values seen so far); emitting a minute summarizes every feature with
median / IQR / regression slope over each history scale, clipped to the
available history during warm-up.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

import numpy as np

CAPACITY = 480
MIN_PRESENT = 3


def sorted_window_quantiles(window: np.ndarray) -> tuple[np.ndarray, ...]:
    """25/50/75 % quantiles per column, ignoring NaN entries.

    Single np.sort pass (NaNs sort to the end) followed by type-7 linear
    interpolation on the valid prefix of each column; columns with no
    valid entries yield NaN.
    """
    m, n_cols = window.shape
    srt = np.sort(window, axis=0)
    n = m - np.isnan(window).sum(axis=0)
    cols = np.arange(n_cols)
    out = []
    safe_n = np.maximum(n, 1)
    for q in (0.25, 0.50, 0.75):
        pos = q * (safe_n - 1)
        lo = np.floor(pos).astype(np.intp)
        hi = np.minimum(lo + 1, safe_n - 1)
        frac = pos - lo
        vals = srt[lo, cols] * (1.0 - frac) + srt[hi, cols] * frac
        vals[n == 0] = np.nan
        out.append(vals)
    return tuple(out)


def window_summaries(window: np.ndarray, min_present: int = MIN_PRESENT) -> np.ndarray:
    """Median, IQR and least-squares slope per column of one window.

    Slope is per minute on the window's local minute grid, so it is
    time-origin invariant by construction. Columns with fewer than
    ``min_present`` finite entries are NaN across all three summaries.

    Returns an array of shape (3, n_columns) ordered Med, Iqr, Slope.
    """
    window = np.asarray(window, dtype=np.float64)
    m, n_cols = window.shape
    q25, q50, q75 = sorted_window_quantiles(window)

    mask = np.isfinite(window)
    n = mask.sum(axis=0).astype(np.float64)
    t = np.arange(m, dtype=np.float64)
    z = np.where(mask, window, 0.0)
    sx = t @ mask
    sxx = (t * t) @ mask
    sy = z.sum(axis=0)
    sxy = t @ z
    denom = n * sxx - sx * sx
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = (n * sxy - sx * sy) / denom
    slope[denom == 0] = np.nan

    out = np.vstack([q50, q75 - q25, slope])
    out[:, n < min_present] = np.nan
    return out


@dataclass
class FeatureSample:
    """One emitted per-minute row over the full column schema."""

    minute_index: int
    values: np.ndarray

    @property
    def missing(self) -> np.ndarray:
        return ~np.isfinite(self.values)


@dataclass
class _AccumulatedMedian:
    """Online median of every valid raw value seen for one feature."""

    values: list[float] = field(default_factory=list)

    def add(self, x: float) -> None:
        bisect.insort(self.values, x)

    def median(self) -> float:
        n = len(self.values)
        if n == 0:
            return float("nan")
        if n % 2:
            return self.values[n // 2]
        return 0.5 * (self.values[n // 2 - 1] + self.values[n // 2])


class HistoryBuffer:
    """Ring of the last 480 per-minute feature vectors with imputation state."""

    def __init__(self, n_features: int, scales: tuple[int, ...], capacity: int = CAPACITY):
        if max(scales) > capacity:
            raise ValueError("largest scale exceeds buffer capacity")
        self.n_features = n_features
        self.scales = tuple(scales)
        self.capacity = capacity
        self._ring = np.full((capacity, n_features), np.nan)
        self._count = 0
        self._next_minute = 0
        self._last_valid_value = np.full(n_features, np.nan)
        self._last_valid_minute = np.full(n_features, -1, dtype=np.int64)
        self._accumulated = [_AccumulatedMedian() for _ in range(n_features)]

    def push(self, minute_index: int, raw: np.ndarray) -> np.ndarray:
        """Append one minute of raw basic features; returns the stored row.

        Minutes must arrive in order without gaps. Missing entries are
        forward filled from the last valid value if it is still within the
        buffer span, otherwise set to the accumulated-history median;
        entries with no history at all stay missing.
        """
        if minute_index != self._next_minute:
            raise ValueError(
                f"out-of-order push: expected minute {self._next_minute}, "
                f"got {minute_index}"
            )
        raw = np.asarray(raw, dtype=np.float64)
        if raw.shape != (self.n_features,):
            raise ValueError("feature vector length mismatch")
        valid = np.isfinite(raw)
        filled = raw.copy()

        need = ~valid
        in_span = self._last_valid_minute >= minute_index - (self.capacity - 1)
        ff = need & (self._last_valid_minute >= 0) & in_span
        filled[ff] = self._last_valid_value[ff]
        fallback = need & ~ff
        if fallback.any():
            for j in np.flatnonzero(fallback):
                filled[j] = self._accumulated[j].median()

        self._last_valid_value[valid] = raw[valid]
        self._last_valid_minute[valid] = minute_index
        for j in np.flatnonzero(valid):
            self._accumulated[j].add(float(raw[j]))

        self._ring[minute_index % self.capacity] = filled
        self._count = min(self._count + 1, self.capacity)
        self._next_minute += 1
        return filled

    def window(self, length: int) -> np.ndarray:
        """Copy of the last min(length, pushed) stored rows, oldest first."""
        m = min(length, self._count)
        end = self._next_minute
        idx = (np.arange(end - m, end)) % self.capacity
        return self._ring[idx]

    def emit(self, current_icp: float = float("nan")) -> FeatureSample:
        """Summaries over every scale plus the two non-history features.

        Layout matches the schema: basic-major, then summary, then scale;
        ``TimeSinceSegmentStart`` and the current ICP median close the row.
        """
        if self._count == 0:
            raise ValueError("emit before any push")
        minute = self._next_minute - 1
        n_scales = len(self.scales)
        stack = np.empty((len(self.scales), 3, self.n_features))
        cache: dict[int, np.ndarray] = {}
        for i, scale in enumerate(self.scales):
            m = min(scale, self._count)
            if m not in cache:
                cache[m] = window_summaries(self.window(m))
            stack[i] = cache[m]
        # (scale, summary, feature) -> (feature, summary, scale) then flatten.
        body = stack.transpose(2, 1, 0).reshape(-1)
        values = np.concatenate([body, [float(minute), current_icp]])
        return FeatureSample(minute_index=minute, values=values)
