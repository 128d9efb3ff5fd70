"""Seeded synthetic neuro-ICU records with planted pre-hypertensive precursors.

The generator builds a beat-resolved intracranial pressure waveform (three
sub-peak pulse template), an arterial waveform coupled to it, ECG,
plethysmograph and respiration channels, and derives the 1 Hz series from
the waveforms. Before each planted hypertension onset the mean pressure
ramps up late while pulse amplitude, slow-wave activity and ICP/ABP
coupling grow over the whole precursor window, so early-warning signal
lives in waveform-derived features rather than in the mean trace alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .records import ALL_CHANNELS, Record

WAVE_RATE = 125

# Pulse-template landmark fractions (position within one beat).
_ICP_PEAKS = ((0.15, 1.00), (0.30, 0.80), (0.45, 0.60))
_ICP_SIGMA = 0.055
_ABP_SYS = (0.22, 1.00, 0.075)
_ABP_DICRO = (0.58, 0.30, 0.065)
_R_FRAC = 0.05          # R-peak position within a beat
_PTT_SECONDS = 0.20     # pulse transit: pressure trough lag after the R-peak


@dataclass(frozen=True)
class SynthConfig:
    """Configuration for one synthetic segment; generation is pure in this."""

    duration_hours: float
    event_onsets: tuple[int, ...] = ()
    precursor_lead: int = 360
    baseline_icp_mean: float = 9.1
    baseline_icp_std: float = 6.8
    heart_rate: float = 75.0
    seed: int = 0
    channels: tuple[str, ...] = ALL_CHANNELS
    abp_coupling: float = 0.7
    pulse_amp_base: float = 1.3
    pulse_amp_gain: float = 1.8
    event_duration: int = 18
    segment_id: str = ""

    def __post_init__(self):
        if self.duration_hours <= 0:
            raise ValueError("duration_hours must be positive")
        if self.precursor_lead > 480:
            raise ValueError("precursor_lead must be at most 480 minutes")
        onsets = tuple(self.event_onsets)
        if list(onsets) != sorted(set(onsets)):
            raise ValueError("event onsets must be strictly increasing")
        for a, b in zip(onsets, onsets[1:]):
            if b - a < 10:
                raise ValueError(f"onsets {a} and {b} closer than 10 minutes apart")
        n_minutes = int(self.duration_hours * 60)
        for e in onsets:
            if not 0 <= e < n_minutes:
                raise ValueError(f"onset {e} outside segment of {n_minutes} minutes")
        unknown = set(self.channels) - set(ALL_CHANNELS)
        if unknown:
            raise ValueError(f"unknown channels: {sorted(unknown)}")

    @property
    def n_minutes(self) -> int:
        return int(self.duration_hours * 60)


def _gauss(x: np.ndarray, center: float, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * ((x - center) / sigma) ** 2)


def _template(kind: str, n: int = 512) -> np.ndarray:
    """Zero-mean, unit peak-to-peak pulse template sampled on [0, 1)."""
    s = np.arange(n) / n
    if kind == "icp":
        y = sum(h * _gauss(s, c, _ICP_SIGMA) for c, h in _ICP_PEAKS)
    elif kind == "abp":
        c1, h1, w1 = _ABP_SYS
        c2, h2, w2 = _ABP_DICRO
        y = h1 * _gauss(s, c1, w1) + h2 * _gauss(s, c2, w2)
    elif kind == "pleth":
        y = _gauss(s, 0.30, 0.11) + 0.25 * _gauss(s, 0.62, 0.10)
    elif kind == "ecg":
        y = (
            _gauss(s, _R_FRAC, 0.010)
            - 0.15 * _gauss(s, _R_FRAC - 0.035, 0.012)
            - 0.12 * _gauss(s, _R_FRAC + 0.035, 0.012)
            + 0.18 * _gauss(s, 0.38, 0.055)
        )
    else:
        raise ValueError(kind)
    y = y - y.mean()
    return y / (y.max() - y.min())


def _piecewise_profile(n_minutes: int, knots: list[tuple[float, float]]) -> np.ndarray:
    """Piecewise-linear minute-grid profile through (minute, value) knots."""
    t = np.arange(n_minutes, dtype=float)
    xs = np.array([k[0] for k in knots])
    ys = np.array([k[1] for k in knots])
    return np.interp(t, xs, ys, left=0.0, right=0.0)


def _event_profiles(cfg: SynthConfig) -> tuple[np.ndarray, np.ndarray]:
    """Mean-pressure offset (mmHg) and precursor intensity (0..1) per minute.

    Overlapping events combine by maximum, not by sum, so stacked ramps
    cannot push the baseline into implausible territory.
    """
    n = cfg.n_minutes
    mean_off = np.zeros(n)
    intensity = np.zeros(n)
    base = cfg.baseline_icp_mean
    for e in cfg.event_onsets:
        dur = cfg.event_duration
        # Mean stays near baseline until late, then crosses 20 mmHg at the
        # planted onset minute and holds above it for >= dur minutes.
        mean_knots = [
            (e - cfg.precursor_lead, 0.0),
            (e - 90, 0.8),
            (e - 30, 4.0),
            (e - 10, 6.0),
            (e - 2, 16.5 - base),
            (e - 1, 18.7 - base),
            (e, 22.0 - base),
            (e + 4, 25.5 - base),
            (e + dur, 25.5 - base),
            (e + dur + 12, 0.0),
        ]
        gain_knots = [
            (e - cfg.precursor_lead, 0.0),
            (e, 1.0),
            (e + dur, 1.0),
            (e + dur + 60, 0.0),
        ]
        mean_off = np.maximum(mean_off, _piecewise_profile(n, mean_knots))
        intensity = np.maximum(intensity, _piecewise_profile(n, gain_knots))
    return mean_off, intensity


def _ar1(rng: np.random.Generator, n: int, phi: float, std: float) -> np.ndarray:
    """Stationary AR(1) noise with the given marginal std."""
    innov = rng.normal(0.0, std * np.sqrt(1 - phi * phi), size=n)
    out = np.empty(n)
    acc = rng.normal(0.0, std)
    for i in range(n):
        acc = phi * acc + innov[i]
        out[i] = acc
    return out


class _BeatGrid:
    """Beat onset times and per-sample (beat index, phase) lookups."""

    def __init__(self, rng: np.random.Generator, n_seconds: int, heart_rate: float):
        rr_nominal = 60.0 / heart_rate
        n_beats = int(np.ceil((n_seconds + 8.0) / rr_nominal)) + 2
        jitter = np.clip(rng.normal(0.0, 0.02, size=n_beats), -0.06, 0.06)
        self.rr = rr_nominal * (1.0 + jitter)
        self.onsets = np.cumsum(self.rr) - self.rr[0] - 2.0 * rr_nominal
        self.r_times = self.onsets + _R_FRAC * self.rr

    def phase(self, t: np.ndarray, shift: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        ts = t - shift
        idx = np.searchsorted(self.onsets, ts, side="right") - 1
        idx = np.clip(idx, 0, len(self.onsets) - 1)
        frac = (ts - self.onsets[idx]) / self.rr[idx]
        return idx, np.clip(frac, 0.0, 1.0 - 1e-9)


def _render_train(
    template: np.ndarray, frac: np.ndarray, amp: np.ndarray | float
) -> np.ndarray:
    n = len(template)
    vals = np.interp(frac * n, np.arange(n + 1), np.append(template, template[0]))
    return amp * vals


def synth_record(cfg: SynthConfig) -> tuple[Record, list[int]]:
    """Generate one synthetic record; deterministic in the config.

    Returns the record together with the planted onset minutes (ground
    truth for the event detector).
    """
    rng = np.random.default_rng(cfg.seed)
    n_min = cfg.n_minutes
    n_sec = n_min * 60
    n_wave = n_sec * WAVE_RATE

    mean_off_min, intensity_min = _event_profiles(cfg)

    t_sec = np.arange(n_sec, dtype=float)
    t_min_grid = np.arange(n_min, dtype=float) * 60.0
    mean_off = np.interp(t_sec, t_min_grid, mean_off_min)
    intensity = np.interp(t_sec, t_min_grid, intensity_min)

    # Lundberg-style slow waves (20-60 s periods, inside the slow-wave band),
    # amplified while a precursor is active.
    phases = rng.uniform(0, 2 * np.pi, size=3)
    slow = (
        0.9 * np.sin(2 * np.pi * t_sec / 25.0 + phases[0])
        + 0.7 * np.sin(2 * np.pi * t_sec / 40.0 + phases[1])
        + 0.5 * np.sin(2 * np.pi * t_sec / 55.0 + phases[2])
    )
    slow_icp = slow * (1.0 + 0.5 * intensity)

    noise_icp = _ar1(rng, n_sec, phi=0.9, std=0.2 * cfg.baseline_icp_std)
    icp_mean_1hz = cfg.baseline_icp_mean + mean_off + slow_icp + noise_icp

    # Arterial mean: flat base, own noise, plus the shared slow waves scaled
    # by a coupling gain that rises with precursor intensity (drives PRx up).
    coupling = 0.05 + (cfg.abp_coupling - 0.05) * intensity
    noise_abp = _ar1(rng, n_sec, phi=0.9, std=1.6)
    abp_mean_1hz = 92.0 + 3.0 * mean_off / 16.4 + coupling * slow * 2.2 + noise_abp

    beats = _BeatGrid(rng, n_sec, cfg.heart_rate)
    # Slow multiplicative wander keeps the instantaneous amplitude level
    # ambiguous across segments; the precursor is a within-segment change.
    wander = 1.0 + _ar1(rng, n_min, phi=0.95, std=0.05)
    amp_min = cfg.pulse_amp_base * (1.0 + cfg.pulse_amp_gain * intensity_min) * wander
    amp_at_beat = np.interp(beats.onsets, t_min_grid, amp_min, left=amp_min[0], right=amp_min[-1])

    t_wave = np.arange(n_wave, dtype=float) / WAVE_RATE
    idx_r, frac_r = beats.phase(t_wave)
    idx_p, frac_p = beats.phase(t_wave, shift=_PTT_SECONDS)

    wanted = set(cfg.channels)
    need_wicp = bool(wanted & {"wICP", "ICP", "CPP"})
    need_wabp = bool(wanted & {"wABP", "ABPm", "ABPd", "ABPs", "CPP"})

    channels: dict[str, np.ndarray] = {}

    def upsample(series_1hz: np.ndarray) -> np.ndarray:
        return np.interp(t_wave, t_sec, series_1hz)

    wicp = wabp = None
    if need_wicp:
        wicp = (
            upsample(icp_mean_1hz)
            + _render_train(_template("icp"), frac_p, amp_at_beat[idx_p])
            + 0.35 * np.sin(2 * np.pi * 0.25 * t_wave)
            + rng.normal(0.0, 0.12, size=n_wave)
        )
    if need_wabp:
        wabp = (
            upsample(abp_mean_1hz)
            + _render_train(_template("abp"), frac_p, 42.0)
            + 0.8 * np.sin(2 * np.pi * 0.25 * t_wave)
            + rng.normal(0.0, 0.25, size=n_wave)
        )

    def per_second(wave: np.ndarray, reduce) -> np.ndarray:
        return reduce(wave.reshape(n_sec, WAVE_RATE), axis=1)

    if "wICP" in wanted:
        channels["wICP"] = wicp
    if "wABP" in wanted:
        channels["wABP"] = wabp
    if "ICP" in wanted or "CPP" in wanted:
        icp_series = per_second(wicp, np.mean)
    if "ABPm" in wanted or "CPP" in wanted:
        abpm_series = per_second(wabp, np.mean)
    if "ICP" in wanted:
        channels["ICP"] = icp_series
    if "ABPm" in wanted:
        channels["ABPm"] = abpm_series
    if "ABPs" in wanted:
        channels["ABPs"] = per_second(wabp, np.max)
    if "ABPd" in wanted:
        channels["ABPd"] = per_second(wabp, np.min)
    if "CPP" in wanted:
        channels["CPP"] = abpm_series - icp_series
    if "HR" in wanted:
        idx_sec, _ = beats.phase(t_sec)
        channels["HR"] = 60.0 / beats.rr[idx_sec] + rng.normal(0.0, 0.3, size=n_sec)
    if "ECG" in wanted:
        channels["ECG"] = (
            _render_train(_template("ecg"), frac_r, 1.0)
            + rng.normal(0.0, 0.01, size=n_wave)
        )
    if "wPLETH" in wanted:
        channels["wPLETH"] = (
            _render_train(_template("pleth"), frac_p, 1.0)
            * (1.0 + 0.25 * np.sin(2 * np.pi * 0.25 * t_wave))
            + rng.normal(0.0, 0.02, size=n_wave)
        )
    if "wRESP" in wanted:
        channels["wRESP"] = (
            np.sin(2 * np.pi * 0.25 * t_wave)
            + rng.normal(0.0, 0.05, size=n_wave)
        )

    segment_id = cfg.segment_id or f"synth-{cfg.seed:016x}"
    record = Record(
        segment_id=segment_id,
        start_time=0.0,
        channels={name: arr.astype(np.float32) for name, arr in channels.items()},
    )
    return record, list(cfg.event_onsets)


@dataclass(frozen=True)
class CohortSpec:
    """Layout of a synthetic study cohort: which segments carry events."""

    n_segments: int = 40
    duration_hours: float = 16.0
    event_fraction: float = 0.25
    precursor_leads: tuple[int, ...] = (480, 420, 360)
    seed: int = 0
    channels: tuple[str, ...] = ALL_CHANNELS
    onset_range: tuple[int, int] = (640, 880)
    heart_rate: float = 75.0

    def configs(self) -> list[SynthConfig]:
        """Per-segment configs; event segments are spread evenly through the
        cohort, and pulse-amplitude baselines and heart rates vary per
        segment so amplitude level alone cannot separate the classes."""
        n_events = int(round(self.n_segments * self.event_fraction))
        event_ids = set(
            np.linspace(0, self.n_segments - 1, n_events, dtype=int).tolist()
        ) if n_events else set()
        rng = np.random.default_rng(self.seed)
        out = []
        lo, hi = self.onset_range
        hi = min(hi, int(self.duration_hours * 60) - 40)
        for i in range(self.n_segments):
            if i in event_ids:
                onsets = (int(rng.integers(lo, hi + 1)),)
                lead = self.precursor_leads[i % len(self.precursor_leads)]
            else:
                onsets = ()
                lead = self.precursor_leads[0]
            out.append(
                SynthConfig(
                    duration_hours=self.duration_hours,
                    event_onsets=onsets,
                    precursor_lead=lead,
                    heart_rate=float(rng.uniform(0.92, 1.08)) * self.heart_rate,
                    pulse_amp_base=float(rng.uniform(1.0, 2.1)),
                    seed=int(rng.integers(0, 2**62)),
                    channels=self.channels,
                    segment_id=f"synth-{i:03d}",
                )
            )
        return out
