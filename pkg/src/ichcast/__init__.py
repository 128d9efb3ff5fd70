"""ichcast: streaming multi-scale waveform features and 8-hour forecasting
of acute intracranial hypertension."""

__version__ = "0.1.0"

from .records import ChannelSpec, CohortFilter, Record, load_record, save_record
from .synth import CohortSpec, SynthConfig, synth_record
from .schema import FeatureSchema, build_schema
from .labels import IchEvent, LabelTrack, build_label_track, detect_events

__all__ = [
    "ChannelSpec", "CohortFilter", "Record", "load_record", "save_record",
    "CohortSpec", "SynthConfig", "synth_record",
    "FeatureSchema", "build_schema",
    "IchEvent", "LabelTrack", "build_label_track", "detect_events",
    "__version__",
]
