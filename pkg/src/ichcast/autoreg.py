"""Cerebral autoregulation indices on 1-minute blocks.

Correlation-family indices (PRx, PAx, AMP, RAP, IAAC) are Pearson
correlations of pressure-derived quantities; spectral indices (slow-wave
power fraction, transfer gain) operate on the 1/60-0.05 Hz band of the
block spectrum. Waveform variants reduce to the 1 Hz grid or to beats
first. A NaN result means the index is undefined for this minute.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK_SECONDS = 60
SUB_WINDOWS = 6
SUB_SECONDS = 10
MIN_CORR_POINTS = 3
SLOW_WAVE_BINS = (1, 2, 3)  # k/60 Hz = 0.0167, 0.0333, 0.05


@dataclass(frozen=True)
class SubWindowStats:
    """Per-10-second means and amplitudes (max - min) of one block."""

    means: np.ndarray
    amplitudes: np.ndarray


def pearson(x: np.ndarray, y: np.ndarray) -> float:
    """Pearson correlation; NaN for degenerate (zero-variance) input."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y) or len(x) < 2:
        return float("nan")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = np.sqrt((xc**2).sum() * (yc**2).sum())
    if denom == 0.0:
        return float("nan")
    return float((xc * yc).sum() / denom)


def subwindow_stats(series_1hz: np.ndarray) -> SubWindowStats:
    x = np.asarray(series_1hz, dtype=np.float64).reshape(SUB_WINDOWS, SUB_SECONDS)
    return SubWindowStats(
        means=x.mean(axis=1), amplitudes=x.max(axis=1) - x.min(axis=1)
    )


def _corr_min_points(x: np.ndarray, y: np.ndarray) -> float:
    if len(x) < MIN_CORR_POINTS:
        return float("nan")
    return pearson(x, y)


def prx_index(icp_1hz: np.ndarray, abpm_1hz: np.ndarray) -> float:
    """Pressure-reactivity: correlation of the 60 ICP vs ABPm samples."""
    return pearson(icp_1hz, abpm_1hz)


def amp_index(a_1hz: np.ndarray, b_1hz: np.ndarray) -> float:
    """Correlation of per-sub-window amplitudes of the two series."""
    return _corr_min_points(
        subwindow_stats(a_1hz).amplitudes, subwindow_stats(b_1hz).amplitudes
    )


def pax_index(icp_1hz: np.ndarray, abpm_1hz: np.ndarray) -> float:
    """Correlation of sub-window ICP amplitude vs sub-window ABPm mean."""
    return _corr_min_points(
        subwindow_stats(icp_1hz).amplitudes, subwindow_stats(abpm_1hz).means
    )


def rap_index(icp_1hz: np.ndarray) -> float:
    """Compensatory reserve: sub-window ICP amplitude vs ICP mean."""
    stats = subwindow_stats(icp_1hz)
    return _corr_min_points(stats.amplitudes, stats.means)


def amp_index_beats(amps_a: np.ndarray, amps_b: np.ndarray, onsets: np.ndarray) -> float:
    """Waveform AMP variant: sub-window means of per-beat amplitudes.

    Each beat contributes its pulse amplitude to the 10 s sub-window that
    contains its onset; sub-windows without beats are dropped pairwise.
    """
    amps_a = np.asarray(amps_a, dtype=np.float64)
    amps_b = np.asarray(amps_b, dtype=np.float64)
    sub = np.clip((np.asarray(onsets) // SUB_SECONDS).astype(int), 0, SUB_WINDOWS - 1)
    mean_a = np.full(SUB_WINDOWS, np.nan)
    mean_b = np.full(SUB_WINDOWS, np.nan)
    for w in range(SUB_WINDOWS):
        mask = sub == w
        if mask.any():
            mean_a[w] = amps_a[mask].mean()
            mean_b[w] = amps_b[mask].mean()
    ok = np.isfinite(mean_a) & np.isfinite(mean_b)
    return _corr_min_points(mean_a[ok], mean_b[ok])


def iaac_index(amps_icp: np.ndarray, amps_abp: np.ndarray) -> float:
    """Across-beat correlation of ICP vs ABP pulse amplitudes."""
    return _corr_min_points(np.asarray(amps_icp), np.asarray(amps_abp))


def to_1hz(samples: np.ndarray, rate: int) -> np.ndarray:
    """Per-second averaging of a waveform block down to the 1 Hz grid."""
    x = np.asarray(samples, dtype=np.float64)
    if rate == 1:
        return x
    return x.reshape(BLOCK_SECONDS, rate).mean(axis=1)


def slow_wave_index(samples: np.ndarray, rate: int = 1) -> float:
    """Fraction of mean-removed spectral power in the slow-wave band.

    Waveform input is averaged to 1 Hz first. The band covers DFT bins
    1..3 of the 60-sample block (1/60 Hz through 0.05 Hz inclusive).
    """
    x = to_1hz(samples, rate)
    spec = np.fft.rfft(x - x.mean())
    power = np.abs(spec) ** 2
    power[0] = 0.0
    if len(x) % 2 == 0:
        total = 2.0 * power[1:-1].sum() + power[-1]
        band = 2.0 * power[list(SLOW_WAVE_BINS)].sum()
    else:
        total = 2.0 * power[1:].sum()
        band = 2.0 * power[list(SLOW_WAVE_BINS)].sum()
    if total == 0.0:
        return float("nan")
    return float(band / total)


def tf_index(x: np.ndarray, y: np.ndarray, rate: int = 1) -> float:
    """Slow-wave-band transfer gain from driving channel y to x.

    Sum over band bins of |X_k conj(Y_k)| divided by the band power of y;
    NaN when the driving channel carries no band power.
    """
    xs = to_1hz(x, rate)
    ys = to_1hz(y, rate)
    sx = np.fft.rfft(xs - xs.mean())
    sy = np.fft.rfft(ys - ys.mean())
    bins = list(SLOW_WAVE_BINS)
    denom = float((np.abs(sy[bins]) ** 2).sum())
    if denom == 0.0:
        return float("nan")
    cross = float(np.abs(sx[bins] * np.conj(sy[bins])).sum())
    return cross / denom
