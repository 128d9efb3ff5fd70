"""Hypertension event detection and per-minute alarm labels.

An event starts at the first of five consecutive minutes whose median ICP
exceeds 20 mmHg and ends at the last supra-threshold minute before five
consecutive minutes at or below the threshold. Labels implement the
8-hour early-warning task: a minute is positive when an event starts
within the next 480 minutes and the patient is not already hypertensive;
minutes inside events and minutes whose forecast window leaves the record
are excluded.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ICH_THRESHOLD = 20.0
ICH_RUN = 5
HORIZON_MINUTES = 480

NEGATIVE = 0
POSITIVE = 1
EXCLUDED_IN_EVENT = 2
EXCLUDED_TRUNCATED = 3

CLASS_NAMES = {
    NEGATIVE: "negative",
    POSITIVE: "positive",
    EXCLUDED_IN_EVENT: "excluded_in_event",
    EXCLUDED_TRUNCATED: "excluded_truncated",
}


@dataclass(frozen=True)
class IchEvent:
    """One hypertension episode, minute indices inclusive."""

    start_minute: int
    end_minute: int

    def __post_init__(self):
        if self.end_minute < self.start_minute + ICH_RUN - 1:
            raise ValueError("event must span at least five minutes")

    def contains(self, minute: int) -> bool:
        return self.start_minute <= minute <= self.end_minute


def detect_events(
    icp_medians: np.ndarray,
    threshold: float = ICH_THRESHOLD,
    run: int = ICH_RUN,
) -> list[IchEvent]:
    """Scan per-minute medians for hypertension episodes.

    Missing medians (NaN) count as below threshold, so they break onset
    runs and accrue toward termination.
    """
    medians = np.asarray(icp_medians, dtype=np.float64)
    above = np.zeros(len(medians), dtype=bool)
    finite = np.isfinite(medians)
    above[finite] = medians[finite] > threshold
    events: list[IchEvent] = []
    i = 0
    n = len(above)
    while i < n:
        if not above[i]:
            i += 1
            continue
        run_len = 1
        while i + run_len < n and above[i + run_len]:
            run_len += 1
        if run_len < run:
            i += run_len
            continue
        # Event started; walk forward until `run` consecutive quiet minutes.
        start = i
        last_above = i + run_len - 1
        j = i + run_len
        quiet = 0
        while j < n and quiet < run:
            if above[j]:
                last_above = j
                quiet = 0
            else:
                quiet += 1
            j += 1
        events.append(IchEvent(start, last_above))
        i = j
    return events


@dataclass
class LabelTrack:
    """Per-minute class codes plus the event list for one segment."""

    classes: np.ndarray
    events: list[IchEvent]
    horizon: int = HORIZON_MINUTES

    @property
    def n_minutes(self) -> int:
        return len(self.classes)

    @property
    def labeled_mask(self) -> np.ndarray:
        return (self.classes == POSITIVE) | (self.classes == NEGATIVE)

    @property
    def y(self) -> np.ndarray:
        """Binary labels over labeled minutes only."""
        return (self.classes[self.labeled_mask] == POSITIVE).astype(np.int64)

    def counts(self) -> dict[str, int]:
        return {
            name: int((self.classes == code).sum())
            for code, name in CLASS_NAMES.items()
        }


def minutes_to_next_event(events: list[IchEvent], n_minutes: int) -> np.ndarray:
    """Distance in minutes to the next event start (strictly ahead); NaN if none."""
    out = np.full(n_minutes, np.nan)
    starts = sorted(e.start_minute for e in events)
    for t in range(n_minutes):
        idx = np.searchsorted(starts, t, side="right")
        if idx < len(starts):
            out[t] = starts[idx] - t
    return out


def build_label_track(
    events: list[IchEvent], n_minutes: int, horizon: int = HORIZON_MINUTES
) -> LabelTrack:
    """Assign each minute to {positive, negative, excluded} per the task.

    Positive: outside all events, some event starts in (t, t+horizon].
    Excluded in event: the minute lies inside an event. Excluded
    truncated: the forecast window is cut off by the end of record with no
    event start in the observed remainder. Everything else is negative.
    """
    classes = np.full(n_minutes, NEGATIVE, dtype=np.int8)
    next_start = minutes_to_next_event(events, n_minutes)
    last_observed = n_minutes - 1
    for t in range(n_minutes):
        if any(e.contains(t) for e in events):
            classes[t] = EXCLUDED_IN_EVENT
        elif np.isfinite(next_start[t]) and next_start[t] <= horizon:
            classes[t] = POSITIVE
        elif t + horizon > last_observed:
            classes[t] = EXCLUDED_TRUNCATED
    return LabelTrack(classes=classes, events=list(events), horizon=horizon)


def write_label_csv(track: LabelTrack, path: str | Path) -> Path:
    """Export one row per minute: minute, class, nearest_future_event_start."""
    path = Path(path)
    next_start = minutes_to_next_event(track.events, track.n_minutes)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["minute", "class", "nearest_future_event_start"])
        for t in range(track.n_minutes):
            nearest = ""
            if np.isfinite(next_start[t]):
                nearest = str(t + int(next_start[t]))
            writer.writerow([t, CLASS_NAMES[int(track.classes[t])], nearest])
    return path
