"""Canonical feature naming and schema construction.

A basic block feature is one per-minute scalar (e.g. ``Med(ICP)`` or
``SpectralEnergy(wICP)_0-1Hz``). The machine-learning schema expands every
basic feature into summary x scale columns named
``<Summary>(<Basic>)@<scale>`` and appends the two non-history features.
Ablation (channel / category / summary / scale subsets) only removes
columns and never changes retained values: a feature enters a schema only
when every channel it needs is selected.
"""

from __future__ import annotations

from dataclasses import dataclass

from .blocks import BAND_EDGES, STAT_NAMES
from .pulse import ABP_METRIC_NAMES, ICP_METRIC_NAMES
from .records import SERIES_CHANNELS, ALL_CHANNELS

STAT_CHANNELS = ("ICP", "CPP", "ABPm", "ABPd", "ABPs", "HR")
BAND_CHANNELS = ("wICP", "wABP", "wPLETH", "wRESP", "ECG")

CATEGORIES = ("stat", "band", "autoreg", "pulse")
SUMMARIES = ("Med", "Iqr", "Slope")
SCALES = (15, 30, 60, 120, 240, 360, 480)

TIME_SINCE_START = "TimeSinceSegmentStart"
CURRENT_ICP = "CurrentICP"
SPECIAL_FEATURES = (TIME_SINCE_START, CURRENT_ICP)


@dataclass(frozen=True)
class BasicFeature:
    """One per-minute scalar: name, category, and the channels it needs.

    ``channels`` lists every channel that must be selected (and valid that
    minute) for the value to exist, including the ECG reference when beats
    are required. ``key`` addresses the value inside the extractor's
    per-minute context: (group, item).
    """

    name: str
    category: str
    channels: tuple[str, ...]
    key: tuple[str, ...]


def _stat_features() -> list[BasicFeature]:
    out = []
    for ch in STAT_CHANNELS:
        for stat in STAT_NAMES:
            out.append(BasicFeature(
                name=f"{stat}({ch})",
                category="stat",
                channels=(ch,),
                key=("stat", ch, stat),
            ))
    return out


def _band_features() -> list[BasicFeature]:
    out = []
    for ch in BAND_CHANNELS:
        for lo, hi in BAND_EDGES:
            out.append(BasicFeature(
                name=f"SpectralEnergy({ch})_{lo}-{hi}Hz",
                category="band",
                channels=(ch,),
                key=("band", ch, f"{lo}-{hi}Hz"),
            ))
    return out


# Autoregulation signatures follow the published naming even where an
# argument is carried for fidelity only (the CPP slot of PRx/PAx/RAP).
# Single-source indices additionally require the arterial reference of
# their family so that channel ablation keeps autoregulation features a
# strictly cross-channel category.
_AUTOREG_SERIES: tuple[tuple[str, tuple[str, ...], str], ...] = (
    ("AmpIndex(ICP,ABPm)", ("ICP", "ABPm"), "amp_icp_abpm"),
    ("AmpIndex(ICP,CPP)", ("ICP", "CPP"), "amp_icp_cpp"),
    ("AmpIndex(CPP,ABPm)", ("CPP", "ABPm"), "amp_cpp_abpm"),
    ("PaxIndex(ICP,CPP,ABPm)", ("ICP", "CPP", "ABPm"), "pax"),
    ("PrxIndex(ICP,CPP,ABPm)", ("ICP", "CPP", "ABPm"), "prx"),
    ("RapIndex(ICP,CPP)", ("ICP", "CPP"), "rap"),
    ("SlowWaveIndex(ICP)", ("ICP", "ABPm"), "slow_icp"),
    ("TFIndex(ICP,ABPm)", ("ICP", "ABPm"), "tf_icp_abpm"),
    ("TFIndex(ICP,CPP)", ("ICP", "CPP"), "tf_icp_cpp"),
    ("TFIndex(CPP,ABPm)", ("CPP", "ABPm"), "tf_cpp_abpm"),
)
_AUTOREG_WAVE: tuple[tuple[str, tuple[str, ...], str], ...] = (
    ("AmpIndex(wICP,wABP)", ("wICP", "wABP", "ECG"), "amp_wicp_wabp"),
    ("SlowWaveIndex(wICP)", ("wICP", "wABP"), "slow_wicp"),
    ("TFIndex(wICP,wABP)", ("wICP", "wABP"), "tf_wicp_wabp"),
    ("IaacIndex(wICP,wABP)", ("wICP", "wABP", "ECG"), "iaac"),
)


def _autoreg_features() -> list[BasicFeature]:
    out = []
    for name, needs, key in _AUTOREG_SERIES + _AUTOREG_WAVE:
        out.append(BasicFeature(
            name=name, category="autoreg", channels=needs, key=("autoreg", key),
        ))
    return out


def _pulse_features() -> list[BasicFeature]:
    out = []
    for metric in ICP_METRIC_NAMES:
        out.append(BasicFeature(
            name=f"IcpPulse_{metric}(wICP)",
            category="pulse",
            channels=("wICP", "ECG"),
            key=("icp_pulse", metric),
        ))
    for metric in ABP_METRIC_NAMES:
        out.append(BasicFeature(
            name=f"AbpPulse_{metric}(wABP)",
            category="pulse",
            channels=("wABP", "ECG"),
            key=("abp_pulse", metric),
        ))
    return out


def full_catalog() -> tuple[BasicFeature, ...]:
    """Every basic block feature in canonical order."""
    return tuple(
        _stat_features() + _band_features() + _autoreg_features() + _pulse_features()
    )


@dataclass(frozen=True)
class FeatureSchema:
    """Frozen column layout of the emitted feature matrix.

    Columns are ordered basic-major: for each basic feature, for each
    summary, for each scale; the two non-history features come last.
    """

    basic: tuple[BasicFeature, ...]
    summaries: tuple[str, ...]
    scales: tuple[int, ...]
    channels: tuple[str, ...]
    categories: tuple[str, ...] = CATEGORIES

    @property
    def n_columns(self) -> int:
        return len(self.basic) * len(self.summaries) * len(self.scales) + 2

    @property
    def column_names(self) -> tuple[str, ...]:
        names = [
            f"{summary}({feat.name})@{scale}"
            for feat in self.basic
            for summary in self.summaries
            for scale in self.scales
        ]
        return tuple(names) + SPECIAL_FEATURES

    @property
    def basic_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.basic)

    def basic_index(self, name: str) -> int:
        return self.basic_names.index(name)

    def column_index(self, name: str) -> int:
        return self.column_names.index(name)

    def to_dict(self) -> dict:
        return {
            "channels": list(self.channels),
            "categories": list(self.categories),
            "summaries": list(self.summaries),
            "scales": list(self.scales),
            "basic": [
                {"name": f.name, "category": f.category, "channels": list(f.channels)}
                for f in self.basic
            ],
            "columns": list(self.column_names),
        }


def parse_column_name(name: str) -> tuple[str | None, str | None, int | None]:
    """Split ``Summary(Basic)@scale`` into its parts; specials map to Nones."""
    if name in SPECIAL_FEATURES:
        return None, None, None
    head, _, scale = name.rpartition("@")
    summary, _, rest = head.partition("(")
    return summary, rest[:-1], int(scale)


def build_schema(
    channels: tuple[str, ...] | list[str] = ALL_CHANNELS,
    categories: tuple[str, ...] | list[str] = CATEGORIES,
    summaries: tuple[str, ...] | list[str] = SUMMARIES,
    max_scale: int = 480,
) -> FeatureSchema:
    """Schema for a channel/category/summary/scale selection.

    Selections are validated against the known sets; scale restriction
    keeps every configured scale up to ``max_scale``.
    """
    channels = tuple(channels)
    unknown = set(channels) - set(ALL_CHANNELS)
    if unknown:
        raise ValueError(f"unknown channels: {sorted(unknown)}")
    bad = set(categories) - set(CATEGORIES)
    if bad:
        raise ValueError(f"unknown categories: {sorted(bad)}")
    bad = set(summaries) - set(SUMMARIES)
    if bad:
        raise ValueError(f"unknown summaries: {sorted(bad)}")
    scales = tuple(s for s in SCALES if s <= max_scale)
    if not scales:
        raise ValueError(f"max_scale {max_scale} excludes every scale")
    selected = set(channels)
    basic = tuple(
        f for f in full_catalog()
        if f.category in categories and set(f.channels) <= selected
    )
    ordered_summaries = tuple(s for s in SUMMARIES if s in summaries)
    ordered_categories = tuple(c for c in CATEGORIES if c in categories)
    return FeatureSchema(
        basic=basic, summaries=ordered_summaries, scales=scales,
        channels=channels, categories=ordered_categories,
    )


def series_only_channels() -> tuple[str, ...]:
    return tuple(SERIES_CHANNELS)
