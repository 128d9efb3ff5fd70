"""1-minute block partitioning, sanitization and per-block summaries.

Blocks are non-overlapping 60-second windows: 60 samples for 1 Hz series,
7500 samples for 125 Hz waveforms. A block is either valid (gaps repaired
by linear interpolation) or invalid (institutionally marked, no features).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import CHANNEL_RATES, Record

BLOCK_SECONDS = 60

# Physical plausibility bounds per channel; values outside are treated as
# sensor artifacts. Channels absent here are screened for finiteness only.
DEFAULT_PLAUSIBILITY: dict[str, tuple[float, float]] = {
    "ICP": (-10.0, 100.0),
    "wICP": (-10.0, 100.0),
    "CPP": (-20.0, 300.0),
    "ABPm": (-20.0, 300.0),
    "ABPd": (-20.0, 300.0),
    "ABPs": (-20.0, 300.0),
    "wABP": (-20.0, 300.0),
    "HR": (20.0, 300.0),
}

STAT_NAMES = ("Med", "Iqr", "LineLength", "ShannonEntropy")

# Spectral band edges in Hz; membership is half-open [lo, hi).
BAND_EDGES: tuple[tuple[int, int], ...] = (
    (0, 1), (1, 2), (2, 3), (3, 6), (6, 9), (9, 12), (12, 15),
)
ENTROPY_BINS = 10


@dataclass
class Block:
    """One channel-minute of samples plus its validity flag."""

    minute_index: int
    channel: str
    samples: np.ndarray
    valid: bool = True

    @property
    def rate(self) -> int:
        return CHANNEL_RATES[self.channel]


def partition_blocks(record: Record) -> dict[str, list[Block]]:
    """Split every channel into floor(L/60) one-minute blocks.

    A trailing partial minute is discarded. Returned sample arrays are
    views into the record; callers must not mutate them.
    """
    n_minutes = record.n_minutes
    out: dict[str, list[Block]] = {}
    for name, samples in record.channels.items():
        per_block = CHANNEL_RATES[name] * BLOCK_SECONDS
        out[name] = [
            Block(m, name, samples[m * per_block:(m + 1) * per_block])
            for m in range(n_minutes)
        ]
    return out


def plausibility_range(channel: str, overrides: dict | None = None) -> tuple[float, float]:
    table = DEFAULT_PLAUSIBILITY if overrides is None else overrides
    lo, hi = table.get(channel, (-np.inf, np.inf))
    if not lo < hi:
        raise ValueError(f"plausibility range for {channel} must satisfy lo < hi")
    return lo, hi


def sanitize_samples(
    samples: np.ndarray, lo: float, hi: float
) -> tuple[np.ndarray, bool]:
    """Range/NaN screening and gap repair for one block's samples.

    Samples outside [lo, hi] or non-finite are invalidated. If at least half
    of the block is valid the gaps are filled by linear interpolation
    between nearest valid neighbours (edge gaps extend the nearest valid
    sample); otherwise the block is invalid and returned untouched.
    """
    x = np.asarray(samples, dtype=np.float64)
    ok = np.isfinite(x) & (x >= lo) & (x <= hi)
    n = len(x)
    n_ok = int(ok.sum())
    if n_ok * 2 < n:
        return x, False
    if n_ok == n:
        return x, True
    idx = np.arange(n)
    filled = x.copy()
    filled[~ok] = np.interp(idx[~ok], idx[ok], x[ok])
    return filled, True


def sanitize_block(block: Block, plausibility: dict | None = None) -> Block:
    lo, hi = plausibility_range(block.channel, plausibility)
    filled, valid = sanitize_samples(block.samples, lo, hi)
    return Block(block.minute_index, block.channel, filled, valid)


def shannon_entropy(x: np.ndarray, bins: int = ENTROPY_BINS) -> float:
    """Entropy (bits) of an equal-width histogram over the block's [min, max].

    A constant block has an empty range and is defined to have entropy 0.
    """
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        return 0.0
    counts, _ = np.histogram(x, bins=bins, range=(lo, hi))
    p = counts[counts > 0] / len(x)
    return float(-(p * np.log2(p)).sum())


def stat_complexity(samples: np.ndarray) -> dict[str, float]:
    """Median, interquartile range, line length and Shannon entropy."""
    x = np.asarray(samples, dtype=np.float64)
    q25, q50, q75 = np.percentile(x, [25.0, 50.0, 75.0])
    return {
        "Med": float(q50),
        "Iqr": float(q75 - q25),
        "LineLength": float(np.abs(np.diff(x)).sum()),
        "ShannonEntropy": shannon_entropy(x),
    }


def spectral_energies(
    samples: np.ndarray, rate: int, bands: tuple[tuple[int, int], ...] = BAND_EDGES
) -> np.ndarray:
    """One-sided band energies of a mean-removed block.

    Normalization is 2/N^2 per non-DC, non-Nyquist bin so that the energies
    summed over all bins equal the sample variance (Parseval). Band
    membership is half-open on the upper edge; the bin at exactly the upper
    edge belongs to the next band.
    """
    x = np.asarray(samples, dtype=np.float64)
    n = len(x)
    if x.max() == x.min():
        return np.zeros(len(bands))
    spec = np.fft.rfft(x - x.mean())
    power = np.abs(spec) ** 2 * (2.0 / n**2)
    if n % 2 == 0:
        power[-1] *= 0.5  # Nyquist bin appears once in the full spectrum
    # Bin k sits at frequency k * rate / n; with 60 s blocks the bin width
    # is exactly 1/60 Hz, so band [lo, hi) covers k in [lo*n/rate, hi*n/rate).
    out = np.empty(len(bands))
    for i, (lo, hi) in enumerate(bands):
        k_lo = int(np.ceil(lo * n / rate))
        k_hi = int(np.ceil(hi * n / rate))
        out[i] = power[max(k_lo, 1):min(k_hi, len(power))].sum()
    return out


def band_energies(samples: np.ndarray, rate: int = 125) -> dict[str, float]:
    """Named spectral band energies for one valid waveform block."""
    values = spectral_energies(samples, rate)
    return {
        f"{lo}-{hi}Hz": float(v) for (lo, hi), v in zip(BAND_EDGES, values)
    }


def block_median(block: Block) -> float:
    """Median of a sanitized block; NaN when the block is invalid."""
    if not block.valid:
        return float("nan")
    return float(np.median(block.samples))
