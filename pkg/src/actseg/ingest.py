"""Sensor event-log parsing, vocabulary building, splits, and labeled segments.

Input files are plain text, one event per line, whitespace separated:

    <date> <time> <sensor_id> <value> [<activity> [begin|end]]

with ``<date>`` as ``YYYY-MM-DD`` and ``<time>`` as ``HH:MM:SS`` with an
optional fractional part. The last two fields annotate activities: an inline
activity label, optionally qualified by a ``begin``/``end`` boundary mark.

All functions here are pure over immutable inputs and safe to call from
multiple threads.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyDatasetError, IoFailure, MalformedLineError

OTHER_CLASS = "Other"

#: Default activity-class set: eleven ADL classes plus the catch-all.
DEFAULT_ACTIVITY_CLASSES = (
    "Bed_to_Toilet",
    "Cook",
    "Eat",
    "Enter_Home",
    "Housekeeping",
    "Leave_Home",
    "Personal_Hygiene",
    "Relax",
    "Sleep",
    "Take_Medicine",
    "Take_Shower",
)

_TIMESTAMP_FORMATS = ("%Y-%m-%d %H:%M:%S.%f", "%Y-%m-%d %H:%M:%S")


class BoundaryMark(Enum):
    BEGIN = "begin"
    END = "end"


@dataclass(frozen=True)
class SensorEvent:
    """One timestamped sensor reading, the atomic stream unit."""

    timestamp: dt.datetime
    sensor_id: str
    value: str
    label: str | None = None
    mark: BoundaryMark | None = None

    @property
    def token(self) -> str:
        """Observation symbol for this event (sensor id + value)."""
        return f"{self.sensor_id}={self.value}"


def parse_event_line(line: str, line_no: int = 0) -> SensorEvent:
    """Parse one log line into a :class:`SensorEvent`.

    Raises :class:`MalformedLineError` (carrying ``line_no``) for lines with
    fewer than four fields, unparseable timestamps, or an unrecognized
    boundary mark.
    """
    fields = line.split()
    if len(fields) < 4:
        raise MalformedLineError(f"expected at least 4 fields, got {len(fields)}", line_no)
    if len(fields) > 6:
        raise MalformedLineError(f"expected at most 6 fields, got {len(fields)}", line_no)

    stamp = f"{fields[0]} {fields[1]}"
    timestamp = None
    for fmt in _TIMESTAMP_FORMATS:
        try:
            timestamp = dt.datetime.strptime(stamp, fmt)
            break
        except ValueError:
            continue
    if timestamp is None:
        raise MalformedLineError(f"unparseable timestamp {stamp!r}", line_no)

    label = fields[4] if len(fields) >= 5 else None
    mark = None
    if len(fields) == 6:
        try:
            mark = BoundaryMark(fields[5].lower())
        except ValueError:
            raise MalformedLineError(f"unrecognized boundary mark {fields[5]!r}", line_no) from None

    return SensorEvent(timestamp=timestamp, sensor_id=fields[2], value=fields[3], label=label, mark=mark)


def format_event_line(event: SensorEvent) -> str:
    """Render an event back to the log grammar (re-parses to an equal event)."""
    stamp = event.timestamp.strftime("%Y-%m-%d %H:%M:%S.%f")
    parts = [stamp, event.sensor_id, event.value]
    if event.label is not None:
        parts.append(event.label)
        if event.mark is not None:
            parts.append(event.mark.value)
    return " ".join(parts)


@dataclass
class ParseReport:
    """Bookkeeping from loading one event log."""

    path: str = ""
    total_lines: int = 0
    parsed: int = 0
    skipped: int = 0
    blank: int = 0
    errors: list[str] = field(default_factory=list)
    monotonicity_violations: list[int] = field(default_factory=list)
    distinct_sensors: int = 0
    segment_count: int = 0
    per_class_segments: dict[str, int] = field(default_factory=dict)
    extraction_issues: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "path": self.path,
            "total_lines": self.total_lines,
            "parsed": self.parsed,
            "skipped": self.skipped,
            "blank": self.blank,
            "errors": self.errors,
            "monotonicity_violations": self.monotonicity_violations,
            "distinct_sensors": self.distinct_sensors,
            "segment_count": self.segment_count,
            "per_class_segments": self.per_class_segments,
            "extraction_issues": self.extraction_issues,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def load_dataset(path: str | Path, on_error: str = "skip") -> tuple[list[SensorEvent], ParseReport]:
    """Load an event log in file order.

    ``on_error`` is ``"skip"`` (malformed lines counted and listed) or
    ``"abort"`` (first malformed line raises). Out-of-order timestamps are
    reported in the parse report, never reordered.
    """
    if on_error not in ("skip", "abort"):
        raise ValueError(f"on_error must be 'skip' or 'abort', got {on_error!r}")
    path = Path(path)
    report = ParseReport(path=str(path))
    events: list[SensorEvent] = []
    sensors: set[str] = set()
    try:
        with path.open("r", encoding="utf-8") as handle:
            prev_time: dt.datetime | None = None
            for line_no, line in enumerate(handle, start=1):
                report.total_lines += 1
                if not line.strip():
                    report.blank += 1
                    continue
                try:
                    event = parse_event_line(line, line_no)
                except MalformedLineError as exc:
                    if on_error == "abort":
                        raise
                    report.skipped += 1
                    report.errors.append(str(exc))
                    continue
                if prev_time is not None and event.timestamp < prev_time:
                    report.monotonicity_violations.append(line_no)
                prev_time = event.timestamp
                sensors.add(event.sensor_id)
                events.append(event)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    report.parsed = len(events)
    report.distinct_sensors = len(sensors)
    return events, report


@dataclass
class DatasetSplit:
    """Chronological, contiguous train/validation/test partition."""

    train: list[SensorEvent]
    validation: list[SensorEvent]
    test: list[SensorEvent]


def split_chronological(
    events: Sequence[SensorEvent],
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
) -> DatasetSplit:
    """Partition events in stream order by event count.

    Boundaries are ``round(N * cumulative_ratio)`` with Python's
    round-half-to-even, which keeps every split within one event of its
    exact proportion. No event is duplicated or dropped.
    """
    if not events:
        raise EmptyDatasetError("cannot split an empty event sequence")
    if any(r < 0 for r in ratios):
        raise ValueError(f"ratios must be non-negative, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {ratios}")
    n = len(events)
    b1 = round(n * ratios[0])
    b2 = round(n * (ratios[0] + ratios[1]))
    return DatasetSplit(
        train=list(events[:b1]),
        validation=list(events[b1:b2]),
        test=list(events[b2:]),
    )


@dataclass
class LabeledSegment:
    """A maximal run of events attributed to one activity instance.

    ``start_index``/``end_index`` are inclusive positions in the source
    stream the segment was extracted from (required to recover the events
    preceding a boundary).
    """

    label: str
    events: list[SensorEvent]
    start_index: int
    end_index: int

    @property
    def start_time(self) -> dt.datetime:
        return self.events[0].timestamp

    @property
    def end_time(self) -> dt.datetime:
        return self.events[-1].timestamp

    @property
    def duration_s(self) -> float:
        return (self.end_time - self.start_time).total_seconds()


def extract_labeled_segments(
    events: Sequence[SensorEvent],
) -> tuple[list[LabeledSegment], list[str]]:
    """Extract activity segments plus a list of annotation issues.

    If any event carries a begin/end boundary mark, mark-pair extraction is
    used: a segment spans from a ``begin``-marked event through its matching
    ``end``-marked event inclusive (intermediate events need not be labeled).
    Otherwise segments are maximal runs of a constant inline label.

    Salvage rules for unbalanced marks: an ``end`` without an open segment
    recovers the contiguous preceding run of events labeled with its class;
    a ``begin`` left open at stream end (or preempted by another ``begin``)
    is closed at the last event seen. Every salvage is reported.
    """
    if any(e.mark is not None for e in events):
        return _extract_by_marks(events)
    return _extract_by_runs(events)


def _extract_by_marks(events: Sequence[SensorEvent]) -> tuple[list[LabeledSegment], list[str]]:
    segments: list[LabeledSegment] = []
    issues: list[str] = []
    open_label: str | None = None
    open_start = -1

    def close(end_index: int, note: str | None = None) -> None:
        nonlocal open_label, open_start
        if open_label is None:
            return
        segments.append(
            LabeledSegment(
                label=open_label,
                events=list(events[open_start : end_index + 1]),
                start_index=open_start,
                end_index=end_index,
            )
        )
        if note:
            issues.append(note)
        open_label = None
        open_start = -1

    for i, event in enumerate(events):
        if event.mark is BoundaryMark.BEGIN:
            if open_label is not None:
                close(i - 1, f"begin of {event.label!r} at index {i} preempts open {open_label!r}")
            open_label = event.label or OTHER_CLASS
            open_start = i
        elif event.mark is BoundaryMark.END:
            label = event.label or OTHER_CLASS
            if open_label is None:
                salvaged = _salvage_run(events, i, label)
                if salvaged is not None:
                    segments.append(salvaged)
                issues.append(f"end of {label!r} at index {i} without begin; salvaged as label run")
            elif label != open_label:
                issues.append(f"end of {label!r} at index {i} closes open {open_label!r}")
                close(i)
            else:
                close(i)
    if open_label is not None:
        issues.append(f"begin of {open_label!r} at index {open_start} still open at stream end; closed there")
        close(len(events) - 1)
    return segments, issues


def _salvage_run(events: Sequence[SensorEvent], end_index: int, label: str) -> LabeledSegment | None:
    start = end_index
    while start > 0 and events[start - 1].label == label and events[start - 1].mark is None:
        start -= 1
    return LabeledSegment(
        label=label,
        events=list(events[start : end_index + 1]),
        start_index=start,
        end_index=end_index,
    )


def _extract_by_runs(events: Sequence[SensorEvent]) -> tuple[list[LabeledSegment], list[str]]:
    segments: list[LabeledSegment] = []
    run_label: str | None = None
    run_start = -1
    for i, event in enumerate(events):
        if event.label != run_label:
            if run_label is not None:
                segments.append(
                    LabeledSegment(
                        label=run_label,
                        events=list(events[run_start:i]),
                        start_index=run_start,
                        end_index=i - 1,
                    )
                )
            run_label = event.label
            run_start = i
    if run_label is not None:
        segments.append(
            LabeledSegment(
                label=run_label,
                events=list(events[run_start:]),
                start_index=run_start,
                end_index=len(events) - 1,
            )
        )
    return segments, []


UNK_TOKEN = "<UNK>"


@dataclass
class SensorVocabulary:
    """Bijective mapping observation token -> dense index in [0, V).

    Built from the training split only. When ``unk_enabled``, the last index
    (V-1) is reserved for :data:`UNK_TOKEN` and unknown test-time tokens map
    there; otherwise unknown tokens raise ``KeyError``.
    """

    index_of: dict[str, int]
    unk_enabled: bool = True

    @classmethod
    def from_events(cls, events: Iterable[SensorEvent], unk_enabled: bool = True) -> "SensorVocabulary":
        tokens = sorted({e.token for e in events})
        index_of = {tok: i for i, tok in enumerate(tokens)}
        if unk_enabled:
            index_of[UNK_TOKEN] = len(index_of)
        return cls(index_of=index_of, unk_enabled=unk_enabled)

    @property
    def size(self) -> int:
        return len(self.index_of)

    @property
    def tokens(self) -> list[str]:
        ordered = sorted(self.index_of, key=self.index_of.get)
        return ordered

    def encode(self, token: str) -> int:
        idx = self.index_of.get(token)
        if idx is None:
            if self.unk_enabled:
                return self.index_of[UNK_TOKEN]
            raise KeyError(f"unknown token {token!r} and no UNK index configured")
        return idx

    def encode_event(self, event: SensorEvent) -> int:
        return self.encode(event.token)

    def to_dict(self) -> dict:
        return {"tokens": self.tokens, "unk_enabled": self.unk_enabled}

    @classmethod
    def from_dict(cls, data: dict) -> "SensorVocabulary":
        return cls(
            index_of={tok: i for i, tok in enumerate(data["tokens"])},
            unk_enabled=bool(data["unk_enabled"]),
        )


@dataclass
class ActivityClassSet:
    """Ordered activity class names plus the reserved catch-all class."""

    names: tuple[str, ...]
    other: str = OTHER_CLASS

    def __post_init__(self) -> None:
        if len(set(self.names)) != len(self.names):
            raise ValueError("class names must be unique")
        if self.other in self.names:
            raise ValueError(f"{self.other!r} is reserved for the catch-all class")

    @classmethod
    def default(cls) -> "ActivityClassSet":
        return cls(names=DEFAULT_ACTIVITY_CLASSES)

    @classmethod
    def from_segments(cls, segments: Iterable[LabeledSegment]) -> "ActivityClassSet":
        names = sorted({s.label for s in segments if s.label != OTHER_CLASS})
        return cls(names=tuple(names))

    def __len__(self) -> int:
        return len(self.names)

    def __contains__(self, name: str) -> bool:
        return name in self.names

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_dict(self) -> dict:
        return {"names": list(self.names), "other": self.other}

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityClassSet":
        return cls(names=tuple(data["names"]), other=data["other"])


def count_segments_per_class(segments: Iterable[LabeledSegment]) -> dict[str, int]:
    return dict(Counter(s.label for s in segments))
