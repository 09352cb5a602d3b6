"""Supervised estimation of every model component plus threshold calibration.

Training is deterministic: state assignments are positional (event i of a
T-event segment maps to hidden state ``i*K//T``), all tables are count-based
with additive smoothing, and every tie-break prefers the smallest value.
Per-class estimations are independent; results are merged in class order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .errors import EmptyTrainingSetError, EmptyValidationSetError
from .ingest import (
    OTHER_CLASS,
    ActivityClassSet,
    LabeledSegment,
    SensorEvent,
    SensorVocabulary,
    count_segments_per_class,
    extract_labeled_segments,
)
from .model import ActivityModel, DurationDistribution, Hmm, ModelConfig, sequence_loglik

logger = logging.getLogger(__name__)


def assign_states(length: int, k_states: int) -> list[int]:
    """Positional state assignment: index i of a length-T sequence -> i*K//T."""
    if length < 1:
        raise ValueError("sequence length must be >= 1")
    return [(i * k_states) // length for i in range(length)]


def estimate_hmm(
    sequences: Sequence[Sequence[int]],
    k_states: int,
    vocab_size: int,
    smoothing: float,
) -> Hmm:
    """Count-based MLE with additive smoothing over positionally assigned states."""
    if not sequences:
        raise EmptyTrainingSetError("no training sequences")
    init_counts = np.zeros(k_states)
    trans_counts = np.zeros((k_states, k_states))
    emit_counts = np.zeros((k_states, vocab_size))
    for seq in sequences:
        states = assign_states(len(seq), k_states)
        init_counts[states[0]] += 1
        for prev, cur in zip(states, states[1:]):
            trans_counts[prev, cur] += 1
        for state, y in zip(states, seq):
            emit_counts[state, y] += 1
    initial = (init_counts + smoothing) / (init_counts.sum() + smoothing * k_states)
    transition = (trans_counts + smoothing) / (
        trans_counts.sum(axis=1, keepdims=True) + smoothing * k_states
    )
    emission = (emit_counts + smoothing) / (
        emit_counts.sum(axis=1, keepdims=True) + smoothing * vocab_size
    )
    return Hmm(initial=initial, transition=transition, emission=emission)


def train_activity_hmm(
    segments: Sequence[LabeledSegment],
    vocabulary: SensorVocabulary,
    config: ModelConfig,
) -> Hmm:
    """Estimate one class's activity HMM from its full segment sequences."""
    sequences = [[vocabulary.encode_event(e) for e in seg.events] for seg in segments]
    return estimate_hmm(sequences, config.k_states, vocabulary.size, config.smoothing)


def context_windows(
    segments: Sequence[LabeledSegment],
    events: Sequence[SensorEvent],
    n_preceding: int,
    anchor: str,
) -> tuple[list[list[SensorEvent]], int]:
    """Collect the ``n_preceding`` events ending at each segment boundary.

    ``anchor`` is ``"start"`` (window ends at the segment's first event) or
    ``"end"`` (window ends at its last event). Boundaries with fewer than
    ``n_preceding`` events of context are skipped and counted.
    """
    if anchor not in ("start", "end"):
        raise ValueError(f"anchor must be 'start' or 'end', got {anchor!r}")
    windows: list[list[SensorEvent]] = []
    skipped = 0
    for seg in segments:
        boundary = seg.start_index if anchor == "start" else seg.end_index
        first = boundary - n_preceding + 1
        if first < 0:
            skipped += 1
            continue
        windows.append(list(events[first : boundary + 1]))
    return windows, skipped


def train_boundary_hmm(
    segments: Sequence[LabeledSegment],
    events: Sequence[SensorEvent],
    vocabulary: SensorVocabulary,
    config: ModelConfig,
    anchor: str,
) -> tuple[Hmm, int]:
    """Train one class's begin (anchor='start') or end (anchor='end') detector."""
    windows, skipped = context_windows(segments, events, config.n_preceding, anchor)
    if not windows:
        raise EmptyTrainingSetError(
            f"no boundary context windows (anchor={anchor}, {skipped} skipped)"
        )
    sequences = [[vocabulary.encode_event(e) for e in win] for win in windows]
    hmm = estimate_hmm(sequences, config.k_states, vocabulary.size, config.smoothing)
    return hmm, skipped


def fit_duration(segments: Sequence[LabeledSegment], config: ModelConfig) -> DurationDistribution:
    """Equal-width histogram over one class's segment durations.

    Edges span [0, max duration]; a zero span (all durations 0) is clamped
    to [0, 1 s] to keep edges strictly increasing.
    """
    if not segments:
        raise EmptyTrainingSetError("no segments to fit a duration histogram")
    durations = np.array([seg.duration_s for seg in segments], dtype=float)
    span = float(durations.max())
    if span <= 0.0:
        span = 1.0
    edges = np.linspace(0.0, span, config.n_duration_bins + 1)
    counts, _ = np.histogram(durations, bins=edges)
    mass = counts / counts.sum()
    return DurationDistribution(bin_edges=edges, bin_mass=mass, n_samples=len(segments))


@dataclass
class TrainingReport:
    """Deterministic summary of one training run (no wall-clock fields)."""

    n_train_events: int = 0
    n_segments: int = 0
    per_class_segments: dict[str, int] = field(default_factory=dict)
    dropped_classes: dict[str, str] = field(default_factory=dict)
    skipped_begin_contexts: dict[str, int] = field(default_factory=dict)
    skipped_end_contexts: dict[str, int] = field(default_factory=dict)
    extraction_issues: list[str] = field(default_factory=list)
    vocabulary_size: int = 0
    begin_threshold: float | None = None
    end_threshold: float | None = None
    alpha: float | None = None
    calibration: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_train_events": self.n_train_events,
            "n_segments": self.n_segments,
            "per_class_segments": self.per_class_segments,
            "dropped_classes": self.dropped_classes,
            "skipped_begin_contexts": self.skipped_begin_contexts,
            "skipped_end_contexts": self.skipped_end_contexts,
            "extraction_issues": self.extraction_issues,
            "vocabulary_size": self.vocabulary_size,
            "begin_threshold": self.begin_threshold,
            "end_threshold": self.end_threshold,
            "alpha": self.alpha,
            "calibration": self.calibration,
        }


def _boundary_scores(
    model: ActivityModel,
    obs: np.ndarray,
    segments: Sequence[LabeledSegment],
    anchor: str,
) -> np.ndarray:
    """Detector scores observed at true boundaries in an encoded stream."""
    n = model.config.n_preceding
    scores = []
    for seg in segments:
        if seg.label not in model.classes:
            continue
        boundary = seg.start_index if anchor == "start" else seg.end_index
        first = boundary - n + 1
        if first < 0:
            continue
        window = obs[first : boundary + 1].tolist()
        if anchor == "start":
            per_class = [
                sequence_loglik(model.begin_hmms[name], window) / n + model.log_class_prior[i]
                for i, name in enumerate(model.classes.names)
            ]
            scores.append(max(per_class))
        else:
            scores.append(sequence_loglik(model.end_hmms[seg.label], window) / n)
    return np.array(scores, dtype=float)


def _candidate_thresholds(scores: np.ndarray, n_candidates: int = 10) -> list[float]:
    # The tiny margin keeps a threshold derived from an observed score
    # inclusive of that score under floating-point re-computation.
    qs = np.linspace(0.0, 0.9, n_candidates)
    return sorted(set(float(q) - 1e-9 * max(1.0, abs(float(q))) for q in np.quantile(scores, qs)))


def calibrate_thresholds(
    model: ActivityModel,
    validation_events: Sequence[SensorEvent],
    tolerance_events: int | None = None,
) -> tuple[ModelConfig, dict]:
    """Choose begin/end thresholds and alpha on a labeled validation split.

    Candidate thresholds are deciles of the detector scores observed at true
    boundaries; each candidate pair is evaluated by running the recognizer
    over the validation stream and scoring begin-detection accuracy. With
    thresholds fixed, alpha maximizes segment-level event accuracy over the
    configured grid. All ties break toward the smallest value.
    """
    from .evaluate import confusion_from_pairs, event_ground_truth, match_begin_fires
    from .infer import run_stream

    if not validation_events:
        raise EmptyValidationSetError("validation split is empty")
    segments, _ = extract_labeled_segments(validation_events)
    segments = [s for s in segments if s.label in model.classes]
    if not segments:
        raise EmptyValidationSetError("validation split has no labeled segments of known classes")

    n = model.config.n_preceding
    tolerance = n if tolerance_events is None else tolerance_events
    obs = np.array([model.vocabulary.encode_event(e) for e in validation_events], dtype=np.int64)
    true_starts = [s.start_index for s in segments if s.start_index - n + 1 >= 0]
    if not true_starts:
        raise EmptyValidationSetError("no validation segment has enough begin context")

    begin_scores = _boundary_scores(model, obs, segments, "start")
    end_scores = _boundary_scores(model, obs, segments, "end")
    begin_candidates = _candidate_thresholds(begin_scores)
    end_candidates = _candidate_thresholds(end_scores)

    # Tie-break: smallest begin threshold (most sensitive onset detector),
    # then largest end threshold (most specific end detector). A premature
    # end fire returns the machine to Idle and is invisible to the begin
    # metric, so permissive end thresholds must not win ties.
    best = (-1.0, None, None)
    for bt in begin_candidates:
        for et in reversed(end_candidates):
            _, found = run_stream(
                model,
                validation_events,
                collect_predictions=False,
                begin_threshold=bt,
                end_threshold=et,
            )
            fires = [seg.start_index + n - 1 for seg in found]
            hits, _ = match_begin_fires(true_starts, fires, tolerance)
            acc = hits / len(true_starts)
            if acc > best[0]:
                best = (acc, bt, et)
    begin_acc, begin_threshold, end_threshold = best

    predictions, found = run_stream(
        model,
        validation_events,
        begin_threshold=begin_threshold,
        end_threshold=end_threshold,
    )
    truth = event_ground_truth(validation_events, model.classes)
    labels = tuple(model.classes.names) + (OTHER_CLASS,)
    alpha_accuracy: dict[float, float] = {}
    best_alpha = (-1.0, None)
    for alpha in model.config.alpha_grid:
        pred = [OTHER_CLASS] * len(validation_events)
        for seg in found:
            final = seg.winner_class if seg.duration_likelihood >= alpha else OTHER_CLASS
            for i in range(seg.start_index, seg.end_index + 1):
                pred[i] = final
        counts = confusion_from_pairs(truth, pred, labels)
        acc = counts.matrix.trace() / counts.total
        alpha_accuracy[alpha] = float(acc)
        if acc > best_alpha[0]:
            best_alpha = (acc, alpha)

    config = replace(
        model.config,
        begin_threshold=begin_threshold,
        end_threshold=end_threshold,
        alpha=best_alpha[1],
    )
    details = {
        "begin_candidates": begin_candidates,
        "end_candidates": end_candidates,
        "begin_detection_accuracy": begin_acc,
        "alpha_accuracy": {f"{a:g}": v for a, v in alpha_accuracy.items()},
        "n_true_starts": len(true_starts),
    }
    return config, details


def train_full(
    train_events: Sequence[SensorEvent],
    validation_events: Sequence[SensorEvent],
    config: ModelConfig | None = None,
) -> tuple[ActivityModel, TrainingReport]:
    """Train every model component and calibrate thresholds.

    Classes lacking segments or boundary context windows are dropped with a
    warning. Pure function of (events, config): repeated runs produce
    identical models.
    """
    config = config or ModelConfig()
    if not train_events:
        raise EmptyTrainingSetError("no training events")

    vocabulary = SensorVocabulary.from_events(train_events, unk_enabled=config.unk_enabled)
    segments, issues = extract_labeled_segments(train_events)
    segments = [s for s in segments if s.label != OTHER_CLASS]
    if not segments:
        raise EmptyTrainingSetError("training events contain no labeled segments")

    report = TrainingReport(
        n_train_events=len(train_events),
        n_segments=len(segments),
        per_class_segments=dict(sorted(count_segments_per_class(segments).items())),
        extraction_issues=issues,
        vocabulary_size=vocabulary.size,
    )

    by_class: dict[str, list[LabeledSegment]] = {}
    for seg in segments:
        by_class.setdefault(seg.label, []).append(seg)

    begin_hmms: dict[str, Hmm] = {}
    activity_hmms: dict[str, Hmm] = {}
    end_hmms: dict[str, Hmm] = {}
    durations: dict[str, DurationDistribution] = {}
    kept: list[str] = []
    for name in sorted(by_class):
        segs = by_class[name]
        try:
            begin, skipped_b = train_boundary_hmm(segs, train_events, vocabulary, config, "start")
            end, skipped_e = train_boundary_hmm(segs, train_events, vocabulary, config, "end")
        except EmptyTrainingSetError as exc:
            report.dropped_classes[name] = str(exc)
            logger.warning("dropping class %s: %s", name, exc)
            continue
        begin_hmms[name] = begin
        end_hmms[name] = end
        activity_hmms[name] = train_activity_hmm(segs, vocabulary, config)
        durations[name] = fit_duration(segs, config)
        report.skipped_begin_contexts[name] = skipped_b
        report.skipped_end_contexts[name] = skipped_e
        kept.append(name)

    if not kept:
        raise EmptyTrainingSetError("every class was dropped for lack of boundary context")

    classes = ActivityClassSet(names=tuple(kept))
    seg_counts = np.array([len(by_class[name]) for name in kept], dtype=float)
    model = ActivityModel(
        classes=classes,
        vocabulary=vocabulary,
        begin_hmms=begin_hmms,
        activity_hmms=activity_hmms,
        end_hmms=end_hmms,
        durations=durations,
        class_prior=seg_counts / seg_counts.sum(),
        config=config,
    )

    calibrated, details = calibrate_thresholds(model, validation_events)
    model = replace(model, config=calibrated)
    report.begin_threshold = calibrated.begin_threshold
    report.end_threshold = calibrated.end_threshold
    report.alpha = calibrated.alpha
    report.calibration = details
    return model, report
