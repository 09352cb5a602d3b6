"""Streaming activity recognition for smart-home sensor event logs.

Segments an unbounded event stream without a sliding window by detecting
learned begin/end sensor patterns, classifies each segment online with a
bank of per-class HMM filters, and labels finalized segments by a
duration-likelihood threshold rule.
"""

from .errors import ActsegError
from .ingest import (
    ActivityClassSet,
    BoundaryMark,
    DatasetSplit,
    LabeledSegment,
    OTHER_CLASS,
    ParseReport,
    SensorEvent,
    SensorVocabulary,
    extract_labeled_segments,
    load_dataset,
    parse_event_line,
    split_chronological,
)
from .model import (
    ActivityModel,
    DurationDistribution,
    FilterState,
    Hmm,
    ModelConfig,
    forward_init,
    forward_step,
    load_model,
    save_model,
    sequence_loglik,
)
from .infer import (
    Prediction,
    SegmentRecord,
    StreamState,
    finalize_open_segment,
    label_segment,
    new_stream_state,
    process_event,
    run_stream,
)
from .train import TrainingReport, calibrate_thresholds, train_full
from .evaluate import (
    ConfusionCounts,
    accuracy,
    baseline_fixed_window,
    begin_detection_accuracy,
    evaluate_stream,
    sweep,
)
from .synth import ActivityProfile, StreamProfile, generate_stream, well_separated_profile

__version__ = "0.1.0"

__all__ = [
    "ActsegError",
    "ActivityClassSet",
    "ActivityModel",
    "ActivityProfile",
    "BoundaryMark",
    "ConfusionCounts",
    "DatasetSplit",
    "DurationDistribution",
    "FilterState",
    "Hmm",
    "LabeledSegment",
    "ModelConfig",
    "OTHER_CLASS",
    "ParseReport",
    "Prediction",
    "SegmentRecord",
    "SensorEvent",
    "SensorVocabulary",
    "StreamProfile",
    "StreamState",
    "TrainingReport",
    "accuracy",
    "baseline_fixed_window",
    "begin_detection_accuracy",
    "calibrate_thresholds",
    "evaluate_stream",
    "extract_labeled_segments",
    "finalize_open_segment",
    "forward_init",
    "forward_step",
    "generate_stream",
    "label_segment",
    "load_dataset",
    "load_model",
    "new_stream_state",
    "parse_event_line",
    "process_event",
    "run_stream",
    "save_model",
    "sequence_loglik",
    "split_chronological",
    "sweep",
    "train_full",
    "well_separated_profile",
]
