"""Metrics, parameter sweeps, and the fixed-window comparison baseline.

Event-level micro-accuracy (diagonal over total of the confusion matrix) is
the primary metric; it reduces to (tp+tn)/(tp+tn+fp+fn) in the binary case.
Two per-event scorings are reported for a recognizer run: "online" compares
each event against the recognizer's live top class, "segment" against the
final label its finalized segment received retroactively. Ground truth for
an event is the label of the annotated segment containing it, or "Other"
outside segments / for labels missing from the model's class set.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyEvaluationError, NoTrueStartsError
from .ingest import (
    OTHER_CLASS,
    ActivityClassSet,
    SensorEvent,
    extract_labeled_segments,
)
from .infer import SegmentRecord, run_stream
from .model import ActivityModel, ModelConfig


@dataclass
class ConfusionCounts:
    """Class-by-class confusion matrix with per-class one-vs-rest counts."""

    labels: tuple[str, ...]
    matrix: np.ndarray  # matrix[true][pred]

    def __post_init__(self) -> None:
        self.matrix = np.asarray(self.matrix, dtype=np.int64)
        n = len(self.labels)
        if self.matrix.shape != (n, n):
            raise ValueError(f"matrix shape {self.matrix.shape} != ({n}, {n})")

    @property
    def total(self) -> int:
        return int(self.matrix.sum())

    def per_class(self, name: str) -> dict[str, int]:
        i = self.labels.index(name)
        tp = int(self.matrix[i, i])
        fn = int(self.matrix[i].sum()) - tp
        fp = int(self.matrix[:, i].sum()) - tp
        tn = self.total - tp - fn - fp
        return {"tp": tp, "fp": fp, "fn": fn, "tn": tn}

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "matrix": self.matrix.tolist(),
            "total": self.total,
            "per_class": {name: self.per_class(name) for name in self.labels},
        }


def confusion_from_pairs(
    truth: Sequence[str],
    predicted: Sequence[str],
    labels: tuple[str, ...],
) -> ConfusionCounts:
    if len(truth) != len(predicted):
        raise ValueError("truth and prediction sequences differ in length")
    index = {name: i for i, name in enumerate(labels)}
    matrix = np.zeros((len(labels), len(labels)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        matrix[index[t], index[p]] += 1
    return ConfusionCounts(labels=labels, matrix=matrix)


def accuracy(counts: ConfusionCounts) -> float:
    """Micro-accuracy: correctly labeled events over all events."""
    total = counts.total
    if total == 0:
        raise EmptyEvaluationError("no scored events")
    return float(counts.matrix.trace() / total)


def binary_accuracy(tp: int, tn: int, fp: int, fn: int) -> float:
    """(tp+tn) / (tp+tn+fp+fn); the one-vs-rest special case."""
    total = tp + tn + fp + fn
    if total == 0:
        raise EmptyEvaluationError("no scored samples")
    return (tp + tn) / total


def event_ground_truth(events: Sequence[SensorEvent], classes: ActivityClassSet) -> list[str]:
    """Per-event truth labels from the stream's annotated segments."""
    truth = [OTHER_CLASS] * len(events)
    segments, _ = extract_labeled_segments(events)
    for seg in segments:
        label = seg.label if seg.label in classes else OTHER_CLASS
        for i in range(seg.start_index, seg.end_index + 1):
            truth[i] = label
    return truth


def segment_event_labels(n_events: int, records: Sequence[SegmentRecord]) -> list[str]:
    """Retroactive per-event labels from finalized segments."""
    labels = [OTHER_CLASS] * n_events
    for record in records:
        for i in range(record.start_index, record.end_index + 1):
            labels[i] = record.final_label
    return labels


@dataclass
class EvaluationResult:
    online: ConfusionCounts
    segment: ConfusionCounts
    online_accuracy: float
    segment_accuracy: float
    n_events: int
    n_segments: int
    unk_rate: float
    segments: list[SegmentRecord] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {
            "n_events": self.n_events,
            "n_segments": self.n_segments,
            "online_accuracy": self.online_accuracy,
            "segment_accuracy": self.segment_accuracy,
            "unk_rate": self.unk_rate,
            "online_confusion": self.online.to_dict(),
            "segment_confusion": self.segment.to_dict(),
        }


def evaluate_stream(
    model: ActivityModel,
    events: Sequence[SensorEvent],
    alpha: float | None = None,
    use_kernel: bool = True,
) -> EvaluationResult:
    """Run the recognizer over a labeled stream and score every event."""
    if not events:
        raise EmptyEvaluationError("no events to evaluate")
    labels = tuple(model.classes.names) + (OTHER_CLASS,)
    truth = event_ground_truth(events, model.classes)
    predictions, records = run_stream(model, events, alpha=alpha, use_kernel=use_kernel)

    online_pred = [
        p.top_class if p.mode == "active" and p.top_class in model.classes else OTHER_CLASS
        for p in predictions
    ]
    segment_pred = segment_event_labels(len(events), records)
    online = confusion_from_pairs(truth, online_pred, labels)
    segment = confusion_from_pairs(truth, segment_pred, labels)

    unk = model.vocabulary.index_of.get("<UNK>")
    unk_count = 0
    if unk is not None:
        unk_count = sum(1 for e in events if model.vocabulary.encode_event(e) == unk)
    return EvaluationResult(
        online=online,
        segment=segment,
        online_accuracy=accuracy(online),
        segment_accuracy=accuracy(segment),
        n_events=len(events),
        n_segments=len(records),
        unk_rate=unk_count / len(events),
        segments=records,
    )


def match_begin_fires(
    true_starts: Sequence[int],
    fires: Sequence[int],
    tolerance_events: int,
) -> tuple[int, int]:
    """Count (hits, spurious fires) for onset detection.

    A true start is a hit iff some fire lies within +/- tolerance events of
    it; a fire is spurious iff no true start lies within tolerance of it.
    """
    hits = 0
    for start in true_starts:
        if any(abs(f - start) <= tolerance_events for f in fires):
            hits += 1
    spurious = sum(
        1 for f in fires if not any(abs(f - s) <= tolerance_events for s in true_starts)
    )
    return hits, spurious


@dataclass
class BeginDetectionResult:
    accuracy: float
    hits: int
    true_starts: int
    spurious_fires: int
    spurious_rate: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "hits": self.hits,
            "true_starts": self.true_starts,
            "spurious_fires": self.spurious_fires,
            "spurious_rate": self.spurious_rate,
        }


def begin_detection_accuracy(
    model: ActivityModel,
    events: Sequence[SensorEvent],
    tolerance_events: int | None = None,
    use_kernel: bool = True,
) -> BeginDetectionResult:
    """Fraction of annotated activity onsets the recognizer fires near."""
    tolerance = model.config.n_preceding if tolerance_events is None else tolerance_events
    if tolerance < 0:
        raise ValueError("tolerance_events must be >= 0")
    segments, _ = extract_labeled_segments(events)
    true_starts = [s.start_index for s in segments if s.label in model.classes]
    if not true_starts:
        raise NoTrueStartsError("stream has no annotated activity starts of known classes")
    _, records = run_stream(model, events, collect_predictions=False, use_kernel=use_kernel)
    n = model.config.n_preceding
    fires = [r.start_index + n - 1 for r in records]
    hits, spurious = match_begin_fires(true_starts, fires, tolerance)
    return BeginDetectionResult(
        accuracy=hits / len(true_starts),
        hits=hits,
        true_starts=len(true_starts),
        spurious_fires=spurious,
        spurious_rate=spurious / len(events) if events else 0.0,
    )


@dataclass
class SweepReport:
    parameter: str
    values: list[float]
    metrics: list[float]
    best: float

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "values": self.values,
            "metrics": self.metrics,
            "best": self.best,
        }

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(f"{self.parameter},metric\n")
        for value, metric in zip(self.values, self.metrics):
            out.write(f"{value:g},{metric:.6f}\n")
        return out.getvalue()


def sweep(
    parameter: str,
    grid: Sequence[float],
    train_events: Sequence[SensorEvent],
    validation_events: Sequence[SensorEvent],
    config: ModelConfig | None = None,
) -> SweepReport:
    """Re-train/re-evaluate over a parameter grid.

    ``n_preceding`` points retrain and score begin-detection accuracy on the
    validation split; ``alpha`` points share one trained model and score
    segment-level event accuracy. Best is the argmax, ties toward the
    smallest parameter value; results do not depend on grid order.
    """
    from .train import train_full

    if not grid:
        raise ValueError("sweep grid must be non-empty")
    config = config or ModelConfig()
    values = sorted(float(v) for v in grid)
    metrics: list[float] = []
    if parameter in ("n", "n_preceding"):
        from dataclasses import replace

        for value in values:
            point = replace(config, n_preceding=int(value))
            model, _ = train_full(train_events, validation_events, point)
            result = begin_detection_accuracy(model, validation_events)
            metrics.append(result.accuracy)
    elif parameter == "alpha":
        model, _ = train_full(train_events, validation_events, config)
        for value in values:
            result = evaluate_stream(model, validation_events, alpha=value)
            metrics.append(result.segment_accuracy)
    else:
        raise ValueError(f"unknown sweep parameter {parameter!r} (use 'n' or 'alpha')")

    best_i = 0
    for i in range(1, len(values)):
        if metrics[i] > metrics[best_i]:
            best_i = i
    return SweepReport(parameter=parameter, values=values, metrics=metrics, best=values[best_i])


def baseline_fixed_window(
    train_events: Sequence[SensorEvent],
    test_events: Sequence[SensorEvent],
    window_size: int = 20,
    smoothing: float = 1.0,
) -> tuple[ConfusionCounts, float]:
    """Fixed-length sliding-window comparison baseline.

    Classifies every event from the bag of the last ``window_size``
    observation tokens with a count-based generative model (per-class token
    multinomials with additive smoothing plus a class prior), trained on the
    labeled windows of the training stream and scored per test event.
    """
    if window_size < 1:
        raise ValueError("window_size must be >= 1")
    if not train_events or not test_events:
        raise EmptyEvaluationError("baseline needs non-empty train and test streams")

    train_segments, _ = extract_labeled_segments(train_events)
    classes = ActivityClassSet.from_segments(train_segments)
    labels = tuple(classes.names) + (OTHER_CLASS,)
    label_index = {name: i for i, name in enumerate(labels)}
    n_classes = len(labels)

    vocab: dict[str, int] = {}
    for event in train_events:
        vocab.setdefault(event.token, len(vocab))
    v = len(vocab) + 1  # reserved index for unseen test tokens

    def encode(events: Sequence[SensorEvent]) -> np.ndarray:
        return np.array([vocab.get(e.token, v - 1) for e in events], dtype=np.int64)

    train_obs = encode(train_events)
    train_truth = np.array(
        [label_index[t] for t in event_ground_truth(train_events, classes)], dtype=np.int64
    )

    # Each token occurrence lands in the bags of the next window_size events.
    token_counts = np.zeros((n_classes, v), dtype=np.float64)
    n_train = len(train_events)
    for offset in range(window_size):
        rows = train_truth[offset:]
        cols = train_obs[: n_train - offset]
        np.add.at(token_counts, (rows, cols), 1.0)

    class_counts = np.bincount(train_truth, minlength=n_classes).astype(np.float64)
    log_prior = np.log((class_counts + smoothing) / (class_counts.sum() + smoothing * n_classes))
    log_token = np.log(
        (token_counts + smoothing)
        / (token_counts.sum(axis=1, keepdims=True) + smoothing * v)
    )

    test_obs = encode(test_events)
    per_event = log_token[:, test_obs]  # (n_classes, n_test)
    prefix = np.cumsum(per_event, axis=1)
    scores = prefix.copy()
    scores[:, window_size:] = prefix[:, window_size:] - prefix[:, :-window_size]
    scores += log_prior[:, None]
    predicted_idx = scores.argmax(axis=0)

    test_truth = event_ground_truth(test_events, classes)
    predicted = [labels[i] for i in predicted_idx]
    counts = confusion_from_pairs(test_truth, predicted, labels)
    return counts, accuracy(counts)
