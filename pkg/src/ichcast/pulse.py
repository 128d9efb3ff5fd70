"""Beat detection and pressure-pulse morphology.

Per minute: R-peaks are detected on the ECG block, individual wICP/wABP
pulses are segmented between post-R pressure troughs, time-normalized to
100 points, robust-averaged, and the averaged pulse is reduced to the
morphological descriptor sets (20 intracranial metrics, 16 arterial).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, filtfilt, find_peaks

PULSE_POINTS = 100
MIN_BEATS = 5
ONSET_SEARCH_SECONDS = 0.5
MIN_RR_SECONDS = 0.2
MAX_RR_SECONDS = 3.0
TEMPLATE_CORR_MIN = 0.8

ICP_METRIC_NAMES = (
    "Mean", "Dias", "DP1", "DP2", "DP3", "DP12", "DP13", "DP23",
    "L1", "L2", "L3", "L12", "L13", "L23",
    "Curv1", "Curv2", "Curv3", "Slope", "DecayTimeConst", "AverageLatency",
)
ABP_METRIC_NAMES = (
    "A", "UpstrokeTime", "TimeAtPi", "TimeAtDw", "DownstrokeTime",
    "SysDiasTimeDifference", "HeightSysPeak", "HeightInflPoint",
    "HeightDicroticWave", "R1", "R2", "R3", "R4", "R5", "R6", "Aix",
)


@dataclass
class BeatTrack:
    """Strictly increasing R-peak times (seconds) within one block."""

    minute_index: int
    onsets: np.ndarray

    def __post_init__(self):
        self.onsets = np.asarray(self.onsets, dtype=np.float64)
        if len(self.onsets) > 1:
            gaps = np.diff(self.onsets)
            if (gaps <= 0).any():
                raise ValueError("beat onsets must be strictly increasing")

    def __len__(self) -> int:
        return len(self.onsets)

    @property
    def empty(self) -> bool:
        return len(self.onsets) == 0


def _longest_physiologic_run(times: np.ndarray) -> np.ndarray:
    """Longest stretch of beats whose RR intervals stay in [0.2, 3] s."""
    if len(times) < 2:
        return times
    gaps = np.diff(times)
    ok = (gaps >= MIN_RR_SECONDS) & (gaps <= MAX_RR_SECONDS)
    best_start, best_len = 0, 1
    start, length = 0, 1
    for i, good in enumerate(ok):
        if good:
            length += 1
        else:
            start, length = i + 1, 1
        if length > best_len:
            best_start, best_len = start, length
    return times[best_start:best_start + best_len]


def detect_beats(ecg: np.ndarray, minute_index: int = 0, rate: int = 125) -> BeatTrack:
    """R-peak detection: 5-15 Hz band-limit, differentiate, square,
    150 ms moving-window integration, adaptive threshold with a 200 ms
    refractory period. Returns an empty track when fewer than five
    physiologically spaced peaks are found."""
    x = np.asarray(ecg, dtype=np.float64)
    nyq = rate / 2.0
    b, a = butter(2, [5.0 / nyq, 15.0 / nyq], btype="band")
    filt = filtfilt(b, a, x)
    energy = np.diff(filt) ** 2
    window = max(1, int(round(0.150 * rate)))
    mwi = np.convolve(energy, np.ones(window) / window, mode="same")

    refractory = int(round(MIN_RR_SECONDS * rate))
    candidates, _ = find_peaks(mwi, distance=refractory)
    if len(candidates) == 0:
        return BeatTrack(minute_index, np.empty(0))

    # QRS trains concentrate energy: peaks tower over the background by
    # orders of magnitude, beatless noise by a factor of ~3. Gate on it;
    # a zero background (noise-free train) passes trivially.
    floor = float(np.median(mwi))
    if floor > 0.0 and float(np.median(np.sort(mwi[candidates])[-5:])) < 20.0 * floor:
        return BeatTrack(minute_index, np.empty(0))

    # Adaptive signal/noise levels, Pan-Tompkins style; the signal level
    # seeds from the strongest candidates so late-arriving QRS complexes
    # cannot be undercut by an initial noise estimate.
    spk = float(np.median(np.sort(mwi[candidates])[-5:]))
    npk = float(np.median(mwi))
    accepted = []
    for c in candidates:
        v = mwi[c]
        thr = npk + 0.25 * (spk - npk)
        if v >= thr:
            accepted.append(c)
            spk = 0.125 * v + 0.875 * spk
        else:
            npk = 0.125 * v + 0.875 * npk

    if not accepted:
        return BeatTrack(minute_index, np.empty(0))

    # Refine each fiducial to the raw-signal maximum nearby (the MWI peak
    # lags the R-peak by roughly half the integration window).
    half = window
    peaks = []
    for c in accepted:
        lo = max(0, c - half)
        hi = min(len(x), c + half // 2 + 1)
        peaks.append(lo + int(np.argmax(x[lo:hi])))
    times = np.unique(np.asarray(peaks, dtype=np.float64)) / rate
    times = _longest_physiologic_run(times)
    if len(times) < MIN_BEATS:
        return BeatTrack(minute_index, np.empty(0))
    return BeatTrack(minute_index, times)


@dataclass
class SegmentedPulses:
    """Per-beat pressure windows between consecutive post-R troughs."""

    pulses: list[np.ndarray] = field(default_factory=list)
    onset_latencies: list[float] = field(default_factory=list)  # R-to-trough, s
    periods: list[float] = field(default_factory=list)          # trough-to-trough, s
    amplitudes: list[float] = field(default_factory=list)       # max - min per pulse
    beat_indices: list[int] = field(default_factory=list)
    n_rejected: int = 0

    def __len__(self) -> int:
        return len(self.pulses)


def _onset_after(pressure: np.ndarray, r_idx: int, rate: int) -> int | None:
    """Index of the pressure trough within 0.5 s after an R-peak.

    The trough must be a local minimum interior to the search window; a
    monotone stretch has none and the beat is rejected.
    """
    lo = r_idx + 1
    hi = min(len(pressure), r_idx + int(ONSET_SEARCH_SECONDS * rate) + 1)
    if hi - lo < 3:
        return None
    w = pressure[lo:hi]
    # last index attaining the minimum: in a flat valley the onset is the
    # sample adjacent to the upstroke
    i = len(w) - 1 - int(np.argmin(w[::-1]))
    if i == 0 or i == len(w) - 1:
        return None
    if w[i] <= w[i - 1] and w[i] <= w[i + 1]:
        return lo + i
    return None


def segment_pulses(
    pressure: np.ndarray, beats: BeatTrack, rate: int = 125
) -> SegmentedPulses:
    """Cut one pulse per beat, spanning trough(R_i) to trough(R_{i+1}).

    Beats whose onset search window leaves the block, or whose local
    minimum does not exist (monotone pressure), are counted as rejected.
    """
    out = SegmentedPulses()
    if beats.empty:
        return out
    x = np.asarray(pressure, dtype=np.float64)
    r_indices = np.round(beats.onsets * rate).astype(int)
    onsets = [_onset_after(x, r, rate) for r in r_indices]
    for i in range(len(r_indices) - 1):
        start, end = onsets[i], onsets[i + 1]
        if start is None or end is None or end <= start + 3:
            out.n_rejected += 1
            continue
        period = (end - start) / rate
        if not MIN_RR_SECONDS <= period <= MAX_RR_SECONDS:
            out.n_rejected += 1
            continue
        window = x[start:end + 1]
        out.pulses.append(window)
        out.onset_latencies.append(start / rate - beats.onsets[i])
        out.periods.append(period)
        out.amplitudes.append(float(window.max() - window.min()))
        out.beat_indices.append(i)
    return out


@dataclass
class AveragedPulse:
    """Time-normalized (100-point) point-wise mean pulse for one minute."""

    samples: np.ndarray
    n_beats: int
    mean_period: float
    onset_value: float
    mean_latency: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if len(self.samples) != PULSE_POINTS:
            raise ValueError(f"averaged pulse must have {PULSE_POINTS} samples")
        if not np.isfinite(self.samples).all():
            raise ValueError("averaged pulse samples must be finite")


def _resample_unit(pulse: np.ndarray) -> np.ndarray:
    src = np.linspace(0.0, 1.0, len(pulse))
    dst = np.linspace(0.0, 1.0, PULSE_POINTS)
    return np.interp(dst, src, pulse)


def build_averaged_pulse(segmented: SegmentedPulses) -> AveragedPulse | None:
    """Resample, gate against the median template (Pearson r >= 0.8),
    average the survivors point-wise. None when fewer than 5 survive."""
    if len(segmented) < MIN_BEATS:
        return None
    stack = np.vstack([_resample_unit(p) for p in segmented.pulses])
    template = np.median(stack, axis=0)
    t_centered = template - template.mean()
    t_norm = float(np.sqrt((t_centered**2).sum()))
    if t_norm == 0.0:
        return None
    centered = stack - stack.mean(axis=1, keepdims=True)
    norms = np.sqrt((centered**2).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = centered @ t_centered / (norms * t_norm)
    keep = np.isfinite(corr) & (corr >= TEMPLATE_CORR_MIN)
    if keep.sum() < MIN_BEATS:
        return None
    mean_pulse = stack[keep].mean(axis=0)
    periods = np.asarray(segmented.periods)[keep]
    latencies = np.asarray(segmented.onset_latencies)[keep]
    return AveragedPulse(
        samples=mean_pulse,
        n_beats=int(keep.sum()),
        mean_period=float(periods.mean()),
        onset_value=float(mean_pulse[0]),
        mean_latency=float(latencies.mean()),
    )


def _sub_peaks(samples: np.ndarray) -> list[int]:
    """Up to three most prominent concave local maxima in the first 60 %,
    returned in latency order."""
    limit = int(0.6 * PULSE_POINTS)
    peaks, props = find_peaks(samples[:limit], prominence=0.0)
    if len(peaks) == 0:
        return []
    d2 = np.empty_like(samples)
    d2[1:-1] = samples[:-2] - 2 * samples[1:-1] + samples[2:]
    d2[0] = d2[-1] = 0.0
    concave = peaks[d2[peaks] < 0]
    if len(concave) == 0:
        return []
    order = np.argsort(-props["prominences"][np.isin(peaks, concave)])
    chosen = concave[order][:3]
    return sorted(int(i) for i in chosen)


def _curvature(samples: np.ndarray, idx: int) -> float:
    return float(samples[idx - 1] - 2 * samples[idx] + samples[idx + 1])


def _decay_time_constant(samples: np.ndarray, start: int, mean_period: float) -> float:
    """Tau of a least-squares exponential fit to the descending limb."""
    y = samples[start:]
    t = (np.arange(len(y)) / (PULSE_POINTS - 1)) * mean_period
    ok = y > 0
    if ok.sum() < 3:
        return float("nan")
    slope = np.polyfit(t[ok], np.log(y[ok]), 1)[0]
    if slope >= 0:
        return float("nan")
    return float(-1.0 / slope)


def icp_pulse_metrics(p: AveragedPulse) -> dict[str, float]:
    """20 intracranial pulse descriptors (missing entries are NaN).

    Sub-peak heights are measured above the diastolic onset value, and
    latencies are mapped back to seconds through the mean beat period.
    """
    nan = float("nan")
    out = {name: nan for name in ICP_METRIC_NAMES}
    s = p.samples
    dias = p.onset_value
    out["Mean"] = float(s.mean())
    out["Dias"] = dias
    out["AverageLatency"] = p.mean_latency
    peaks = _sub_peaks(s)
    dt = p.mean_period / (PULSE_POINTS - 1)
    dp = {}
    lat = {}
    for rank, idx in enumerate(peaks, start=1):
        dp[rank] = float(s[idx] - dias)
        lat[rank] = float(idx * dt)
        out[f"DP{rank}"] = dp[rank]
        out[f"L{rank}"] = lat[rank]
        out[f"Curv{rank}"] = _curvature(s, idx)
    for i, j in ((1, 2), (1, 3), (2, 3)):
        if i in dp and j in dp:
            out[f"DP{i}{j}"] = dp[i] - dp[j]
            out[f"L{i}{j}"] = lat[i] - lat[j]
    if 1 in dp and lat[1] > 0:
        out["Slope"] = dp[1] / lat[1]
    if peaks:
        out["DecayTimeConst"] = _decay_time_constant(s, peaks[-1], p.mean_period)
    return out


def _first_inflection_after(samples: np.ndarray, start: int) -> int | None:
    """Index of the first second-difference sign change after `start`."""
    d2 = samples[:-2] - 2 * samples[1:-1] + samples[2:]  # curvature at i+1
    for i in range(max(start, 1), len(samples) - 2):
        a, b = d2[i - 1], d2[i]
        if a == 0.0 and b == 0.0:
            continue
        if a == 0.0 or b == 0.0 or (a < 0) != (b < 0):
            return i + 1
    return None


def _first_local_min_after(samples: np.ndarray, start: int) -> int | None:
    for i in range(start + 1, len(samples) - 1):
        if samples[i] <= samples[i - 1] and samples[i] <= samples[i + 1]:
            return i
    return None


def _first_local_max_after(samples: np.ndarray, start: int) -> int | None:
    for i in range(start + 1, len(samples) - 1):
        if samples[i] >= samples[i - 1] and samples[i] >= samples[i + 1]:
            return i
    return None


def abp_pulse_metrics(p: AveragedPulse) -> dict[str, float]:
    """16 arterial pulse descriptors (missing entries are NaN).

    The systolic peak is the global maximum; the inflection point is the
    first curvature sign change after it; the dicrotic wave is the first
    local maximum after the dicrotic notch (itself the first local minimum
    after the systolic peak). Areas are trapezoidal, above the onset value.
    """
    nan = float("nan")
    out = {name: nan for name in ABP_METRIC_NAMES}
    s = p.samples
    dias = p.onset_value
    dt = p.mean_period / (PULSE_POINTS - 1)
    sys_idx = int(np.argmax(s))
    height_sys = float(s[sys_idx] - dias)
    out["HeightSysPeak"] = height_sys
    up = sys_idx * dt
    down = (PULSE_POINTS - 1 - sys_idx) * dt
    out["UpstrokeTime"] = up
    out["DownstrokeTime"] = down
    out["SysDiasTimeDifference"] = up - down
    if p.mean_period > 0:
        out["R5"] = up / p.mean_period
        out["R6"] = down / p.mean_period
    area_total = float(np.trapezoid(s - dias, dx=dt))
    out["A"] = area_total

    infl = _first_inflection_after(s, sys_idx)
    if infl is not None:
        out["TimeAtPi"] = infl * dt
        out["HeightInflPoint"] = float(s[infl] - dias)
        if height_sys != 0.0:
            out["R3"] = out["HeightInflPoint"] / height_sys
            out["Aix"] = (out["HeightInflPoint"] - height_sys) / height_sys

    notch = _first_local_min_after(s, sys_idx)
    if notch is not None:
        dw = _first_local_max_after(s, notch)
        if dw is not None:
            out["TimeAtDw"] = dw * dt
            out["HeightDicroticWave"] = float(s[dw] - dias)
            if height_sys != 0.0:
                out["R4"] = out["HeightDicroticWave"] / height_sys
        if area_total != 0.0:
            out["R1"] = float(np.trapezoid(s[:notch + 1] - dias, dx=dt)) / area_total
            out["R2"] = float(np.trapezoid(s[notch:] - dias, dx=dt)) / area_total
    return out
