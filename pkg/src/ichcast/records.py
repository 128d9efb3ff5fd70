"""Record data model, on-disk layout and cohort admission filters.

A record is one contiguous monitoring segment: 1 Hz derived series plus
125 Hz waveforms, all aligned to a common start time. Missing samples are
encoded as IEEE NaN in memory and in the binary payloads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Channel registry: sample rate and unit per known channel name.
SERIES_CHANNELS = ("ICP", "CPP", "ABPm", "ABPd", "ABPs", "HR")
WAVEFORM_CHANNELS = ("wICP", "wABP", "wPLETH", "wRESP", "ECG")
ALL_CHANNELS = SERIES_CHANNELS + WAVEFORM_CHANNELS

CHANNEL_RATES = {name: 1 for name in SERIES_CHANNELS}
CHANNEL_RATES.update({name: 125 for name in WAVEFORM_CHANNELS})

CHANNEL_UNITS = {
    "ICP": "mmHg", "CPP": "mmHg", "ABPm": "mmHg", "ABPd": "mmHg",
    "ABPs": "mmHg", "HR": "bpm", "wICP": "mmHg", "wABP": "mmHg",
    "wPLETH": "arbitrary", "wRESP": "arbitrary", "ECG": "mV",
}

MANIFEST_NAME = "manifest.json"
TRUTH_NAME = "truth.json"


class RecordFormatError(Exception):
    """Raised for malformed manifests, payload mismatches or unknown channels."""


@dataclass(frozen=True)
class ChannelSpec:
    """Identity, sample rate and physical unit of one channel."""

    name: str
    rate: int
    unit: str

    def __post_init__(self):
        if self.name not in CHANNEL_RATES:
            raise RecordFormatError(f"unknown channel name: {self.name!r}")
        expected = CHANNEL_RATES[self.name]
        if self.rate != expected:
            raise RecordFormatError(
                f"channel {self.name} must be sampled at {expected} Hz, got {self.rate}"
            )

    @classmethod
    def for_name(cls, name: str) -> "ChannelSpec":
        if name not in CHANNEL_RATES:
            raise RecordFormatError(f"unknown channel name: {name!r}")
        return cls(name, CHANNEL_RATES[name], CHANNEL_UNITS[name])


@dataclass
class Record:
    """One segment's aligned multichannel samples.

    All 1 Hz arrays share a common length L (seconds); 125 Hz arrays have
    length 125*L. Arrays are float32 and immutable by convention: the
    pipeline never writes into a loaded record.
    """

    segment_id: str
    start_time: float
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not self.channels:
            raise RecordFormatError("record has no channels")
        L = self.n_seconds
        if L < 1:
            raise RecordFormatError("record must span at least one second")
        for name, samples in self.channels.items():
            if name not in CHANNEL_RATES:
                raise RecordFormatError(f"unknown channel name: {name!r}")
            expected = CHANNEL_RATES[name] * L
            if samples.ndim != 1 or len(samples) != expected:
                raise RecordFormatError(
                    f"channel {name}: expected {expected} samples, got {samples.shape}"
                )

    @property
    def n_seconds(self) -> int:
        """Common 1 Hz length L derived from the first channel."""
        name, samples = next(iter(self.channels.items()))
        return len(samples) // CHANNEL_RATES[name]

    @property
    def n_minutes(self) -> int:
        return self.n_seconds // 60

    @property
    def duration_hours(self) -> float:
        return self.n_seconds / 3600.0

    def channel_spec(self, name: str) -> ChannelSpec:
        return ChannelSpec.for_name(name)


def save_record(record: Record, path: str | Path) -> Path:
    """Write a record directory: manifest.json plus one .f32 file per channel.

    Payloads are little-endian float32; NaN is the missing-sample sentinel.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "segment_id": record.segment_id,
        "start_time": record.start_time,
        "n_seconds": record.n_seconds,
        "channels": [
            {"name": name, "rate": CHANNEL_RATES[name], "unit": CHANNEL_UNITS[name]}
            for name in sorted(record.channels)
        ],
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for name, samples in record.channels.items():
        samples.astype("<f4").tofile(path / f"{name}.f32")
    return path


def load_record(path: str | Path) -> Record:
    """Load a record directory written by :func:`save_record`.

    Raises RecordFormatError on a malformed manifest, a payload whose length
    disagrees with the declared L, or an unknown channel name.
    """
    path = Path(path)
    manifest_path = path / MANIFEST_NAME
    if not manifest_path.is_file():
        raise RecordFormatError(f"missing manifest: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise RecordFormatError(f"malformed manifest {manifest_path}: {exc}") from exc
    for key in ("segment_id", "start_time", "n_seconds", "channels"):
        if key not in manifest:
            raise RecordFormatError(f"manifest missing key {key!r}")
    L = int(manifest["n_seconds"])
    channels: dict[str, np.ndarray] = {}
    for entry in manifest["channels"]:
        name = entry.get("name")
        spec = ChannelSpec.for_name(name)
        if int(entry.get("rate", spec.rate)) != spec.rate:
            raise RecordFormatError(f"channel {name}: declared rate {entry.get('rate')}")
        payload = path / f"{name}.f32"
        if not payload.is_file():
            raise RecordFormatError(f"missing payload for channel {name}: {payload}")
        samples = np.fromfile(payload, dtype="<f4")
        expected = spec.rate * L
        if len(samples) != expected:
            raise RecordFormatError(
                f"channel {name}: declared {expected} samples, file has {len(samples)}"
            )
        channels[name] = samples
    return Record(
        segment_id=str(manifest["segment_id"]),
        start_time=float(manifest["start_time"]),
        channels=channels,
    )


def save_truth(onset_minutes: list[int], path: str | Path) -> Path:
    """Write planted ground-truth event onsets next to a synthetic record."""
    path = Path(path)
    (path / TRUTH_NAME).write_text(
        json.dumps({"onset_minutes": list(onset_minutes)}, indent=2)
    )
    return path / TRUTH_NAME


def load_truth(path: str | Path) -> list[int]:
    data = json.loads((Path(path) / TRUTH_NAME).read_text())
    return list(data["onset_minutes"])


@dataclass(frozen=True)
class CohortFilter:
    """Numeric admission criteria: minimum duration and missing-value cap."""

    min_hours: float = 24.0
    max_missing_ratio: float = 0.25

    def __post_init__(self):
        if self.min_hours <= 0:
            raise ValueError("min_hours must be positive")
        if not 0.0 <= self.max_missing_ratio <= 1.0:
            raise ValueError("max_missing_ratio must be in [0, 1]")


@dataclass(frozen=True)
class SegmentAssessment:
    accepted: bool
    duration_hours: float
    missing_ratios: dict[str, float]
    reasons: tuple[str, ...]


def missing_ratio(samples: np.ndarray) -> float:
    """Fraction of NaN samples in a channel array."""
    return float(np.isnan(samples).sum()) / len(samples)


def validate_segment(record: Record, filt: CohortFilter | None = None) -> SegmentAssessment:
    """Accept a segment iff it is long enough and every present channel's
    missing ratio is within the cap. Pure predicate, never raises."""
    filt = filt or CohortFilter()
    ratios = {name: missing_ratio(samples) for name, samples in record.channels.items()}
    reasons = []
    hours = record.duration_hours
    if hours < filt.min_hours:
        reasons.append(f"duration {hours:.2f} h below minimum {filt.min_hours:g} h")
    for name in sorted(ratios):
        if ratios[name] > filt.max_missing_ratio:
            reasons.append(
                f"channel {name} missing ratio {ratios[name]:.3f} exceeds "
                f"{filt.max_missing_ratio:g}"
            )
    return SegmentAssessment(
        accepted=not reasons,
        duration_hours=hours,
        missing_ratios=ratios,
        reasons=tuple(reasons),
    )


def seed_from(*parts) -> int:
    """Derive a stable 63-bit seed from a tuple of strings/ints.

    Uses SHA-256 so results are reproducible across processes and platforms
    (Python's builtin hash() is salted per process).
    """
    import hashlib

    text = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode()).digest()
    return int.from_bytes(digest[:8], "little") & (2**63 - 1)


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise RecordFormatError(message)


def is_missing(x: float) -> bool:
    return isinstance(x, float) and math.isnan(x)
