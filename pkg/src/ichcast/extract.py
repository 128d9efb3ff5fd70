"""Per-record streaming feature extraction.

Walks a record minute by minute: sanitizes each channel block, computes
the basic block features required by the schema (lazily per group, so a
schema without pulse features never runs beat detection), pushes the raw
vector through the history buffer and collects the emitted rows into the
feature matrix. Also returns the per-minute raw ICP medians used by the
event detector and the baselines.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autoreg
from .blocks import (
    BLOCK_SECONDS,
    band_energies,
    plausibility_range,
    sanitize_samples,
    stat_complexity,
)
from .history import HistoryBuffer
from .pulse import (
    AveragedPulse,
    BeatTrack,
    SegmentedPulses,
    abp_pulse_metrics,
    build_averaged_pulse,
    detect_beats,
    icp_pulse_metrics,
    segment_pulses,
)
from .records import CHANNEL_RATES, Record
from .schema import FeatureSchema

_NAN = float("nan")


@dataclass
class _MinuteContext:
    """Sanitized blocks and lazily computed feature groups for one minute."""

    minute: int
    blocks: dict[str, np.ndarray]          # channel -> sanitized samples
    valid: dict[str, bool]
    _cache: dict = field(default_factory=dict)

    def ok(self, *channels: str) -> bool:
        return all(self.valid.get(c, False) for c in channels)

    def beats(self) -> BeatTrack:
        if "beats" not in self._cache:
            if self.ok("ECG"):
                self._cache["beats"] = detect_beats(self.blocks["ECG"], self.minute)
            else:
                self._cache["beats"] = BeatTrack(self.minute, np.empty(0))
        return self._cache["beats"]

    def segmented(self, channel: str) -> SegmentedPulses:
        key = ("segmented", channel)
        if key not in self._cache:
            beats = self.beats()
            if beats.empty or not self.ok(channel):
                self._cache[key] = SegmentedPulses()
            else:
                self._cache[key] = segment_pulses(self.blocks[channel], beats)
        return self._cache[key]

    def averaged(self, channel: str) -> AveragedPulse | None:
        key = ("averaged", channel)
        if key not in self._cache:
            self._cache[key] = build_averaged_pulse(self.segmented(channel))
        return self._cache[key]

    def group(self, key: tuple) -> dict[str, float] | float:
        if key in self._cache:
            return self._cache[key]
        value = self._compute(key)
        self._cache[key] = value
        return value

    def _compute(self, key: tuple):
        kind = key[0]
        if kind == "stat":
            ch = key[1]
            return stat_complexity(self.blocks[ch]) if self.ok(ch) else None
        if kind == "band":
            ch = key[1]
            return band_energies(self.blocks[ch]) if self.ok(ch) else None
        if kind == "icp_pulse":
            p = self.averaged("wICP") if self.ok("wICP") else None
            return icp_pulse_metrics(p) if p is not None else None
        if kind == "abp_pulse":
            p = self.averaged("wABP") if self.ok("wABP") else None
            return abp_pulse_metrics(p) if p is not None else None
        if kind == "autoreg":
            return self._autoreg(key[1])
        raise KeyError(key)

    def _beat_amplitude_pairs(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-beat wICP/wABP amplitudes paired by beat index."""
        seg_i = self.segmented("wICP")
        seg_a = self.segmented("wABP")
        map_i = dict(zip(seg_i.beat_indices, seg_i.amplitudes))
        map_a = dict(zip(seg_a.beat_indices, seg_a.amplitudes))
        shared = sorted(set(map_i) & set(map_a))
        onsets = self.beats().onsets
        return (
            np.array([map_i[b] for b in shared]),
            np.array([map_a[b] for b in shared]),
            np.array([onsets[b] for b in shared]),
        )

    def _autoreg(self, which: str) -> float:
        b = self.blocks
        if which == "prx":
            return autoreg.prx_index(b["ICP"], b["ABPm"]) if self.ok("ICP", "ABPm") else _NAN
        if which == "pax":
            return autoreg.pax_index(b["ICP"], b["ABPm"]) if self.ok("ICP", "ABPm") else _NAN
        if which == "rap":
            return autoreg.rap_index(b["ICP"]) if self.ok("ICP") else _NAN
        if which == "amp_icp_abpm":
            return autoreg.amp_index(b["ICP"], b["ABPm"]) if self.ok("ICP", "ABPm") else _NAN
        if which == "amp_icp_cpp":
            return autoreg.amp_index(b["ICP"], b["CPP"]) if self.ok("ICP", "CPP") else _NAN
        if which == "amp_cpp_abpm":
            return autoreg.amp_index(b["CPP"], b["ABPm"]) if self.ok("CPP", "ABPm") else _NAN
        if which == "slow_icp":
            return autoreg.slow_wave_index(b["ICP"], 1) if self.ok("ICP") else _NAN
        if which == "slow_wicp":
            return autoreg.slow_wave_index(b["wICP"], 125) if self.ok("wICP") else _NAN
        if which == "tf_icp_abpm":
            return autoreg.tf_index(b["ICP"], b["ABPm"], 1) if self.ok("ICP", "ABPm") else _NAN
        if which == "tf_icp_cpp":
            return autoreg.tf_index(b["ICP"], b["CPP"], 1) if self.ok("ICP", "CPP") else _NAN
        if which == "tf_cpp_abpm":
            return autoreg.tf_index(b["CPP"], b["ABPm"], 1) if self.ok("CPP", "ABPm") else _NAN
        if which == "tf_wicp_wabp":
            return autoreg.tf_index(b["wICP"], b["wABP"], 125) if self.ok("wICP", "wABP") else _NAN
        if which in ("amp_wicp_wabp", "iaac"):
            if not self.ok("wICP", "wABP") or len(self.beats()) < 5:
                return _NAN
            amps_i, amps_a, onsets = self._beat_amplitude_pairs()
            if which == "iaac":
                return autoreg.iaac_index(amps_i, amps_a)
            return autoreg.amp_index_beats(amps_i, amps_a, onsets)
        raise KeyError(which)


def basic_vector(ctx: _MinuteContext, schema: FeatureSchema) -> np.ndarray:
    """Raw basic feature vector (NaN = missing) for one minute."""
    out = np.full(len(schema.basic), _NAN)
    for i, feat in enumerate(schema.basic):
        if not ctx.ok(*feat.channels):
            continue
        kind = feat.key[0]
        if kind == "autoreg":
            out[i] = ctx.group(feat.key)
        else:
            group = ctx.group(feat.key[:2] if kind in ("stat", "band") else feat.key[:1])
            if group is not None:
                out[i] = group[feat.key[-1]]
    return out


@dataclass
class ExtractionResult:
    """Everything extracted from one record."""

    segment_id: str
    features: np.ndarray          # (minutes, schema.n_columns) float32
    icp_medians: np.ndarray       # raw per-minute medians, NaN where invalid
    raw_basic: np.ndarray | None  # (minutes, n_basic) when requested
    schema: FeatureSchema


def minute_blocks(
    record: Record, channels: tuple[str, ...], plausibility: dict | None = None
):
    """Yield one sanitized :class:`_MinuteContext` per full minute.

    Channels the record does not carry are simply absent from the context;
    downstream features that need them come out missing.
    """
    n_minutes = record.n_minutes
    ranges = {ch: plausibility_range(ch, plausibility) for ch in channels}
    usable = n_minutes * BLOCK_SECONDS
    views = {
        ch: record.channels[ch][: usable * CHANNEL_RATES[ch]].reshape(
            n_minutes, CHANNEL_RATES[ch] * BLOCK_SECONDS
        )
        for ch in channels
        if ch in record.channels
    }
    for m in range(n_minutes):
        blocks: dict[str, np.ndarray] = {}
        valid: dict[str, bool] = {}
        for ch, view in views.items():
            lo, hi = ranges[ch]
            samples, ok = sanitize_samples(view[m], lo, hi)
            blocks[ch] = samples
            valid[ch] = ok
        yield _MinuteContext(minute=m, blocks=blocks, valid=valid)


def extract_record(
    record: Record,
    schema: FeatureSchema,
    plausibility: dict | None = None,
    keep_raw: bool = False,
    pulse_dump: "callable | None" = None,
) -> ExtractionResult:
    """Run the full streaming pipeline over one record.

    The trailing partial minute (if any) is discarded by block
    partitioning. ``pulse_dump(minute, channel, averaged)`` is invoked for
    every averaged pulse when provided (debug export).
    """
    n_minutes = record.n_minutes
    needed = tuple(ch for ch in schema.channels)
    buffer = HistoryBuffer(len(schema.basic), schema.scales)
    rows = np.empty((n_minutes, schema.n_columns), dtype=np.float32)
    icp_medians = np.full(n_minutes, _NAN)
    raw_rows = np.empty((n_minutes, len(schema.basic))) if keep_raw else None

    want_summaries = tuple(schema.summaries)
    full_summary = want_summaries == ("Med", "Iqr", "Slope")
    n_scales = len(schema.scales)

    for ctx in minute_blocks(record, needed, plausibility):
        m = ctx.minute
        raw = basic_vector(ctx, schema)
        if raw_rows is not None:
            raw_rows[m] = raw
        if "ICP" in ctx.blocks and ctx.valid.get("ICP", False):
            icp_medians[m] = float(np.median(ctx.blocks["ICP"]))
        buffer.push(m, raw)
        sample = buffer.emit(current_icp=icp_medians[m])
        if full_summary:
            rows[m] = sample.values
        else:
            rows[m] = _select_summaries(sample.values, want_summaries, n_scales, len(schema.basic))
        if pulse_dump is not None:
            for ch in ("wICP", "wABP"):
                if ch in ctx.blocks:
                    avg = ctx.averaged(ch) if ctx.ok(ch) else None
                    if avg is not None:
                        pulse_dump(m, ch, avg)
    return ExtractionResult(
        segment_id=record.segment_id,
        features=rows,
        icp_medians=icp_medians,
        raw_basic=raw_rows,
        schema=schema,
    )


def _select_summaries(
    values: np.ndarray, summaries: tuple[str, ...], n_scales: int, n_basic: int
) -> np.ndarray:
    """Drop summary blocks the schema does not carry (emit is Med/Iqr/Slope)."""
    all_summaries = ("Med", "Iqr", "Slope")
    idx = [all_summaries.index(s) for s in summaries]
    body = values[:-2].reshape(n_basic, 3, n_scales)[:, idx, :].reshape(-1)
    return np.concatenate([body, values[-2:]])
