"""Synthetic sensor-stream generator with ground truth.

Generates labeled event streams in the ingest text format (inline labels
plus begin/end boundary marks), deterministic per seed. Each activity class
plants a begin pattern (its last sensor is the segment's first labeled
event, the earlier ones are emitted as unlabeled approach events just
before it), an end pattern closing the segment, a body sensor distribution,
and a duration range; activities are separated by unlabeled gap events.

Used as the testing oracle: the returned ground-truth segments come from
construction, not from re-parsing the emitted text.
"""

from __future__ import annotations

import datetime as dt
import random
from dataclasses import dataclass, field
from typing import Sequence, TextIO

from .errors import InvalidGeneratorSpec
from .ingest import BoundaryMark, LabeledSegment, SensorEvent, format_event_line

_MAX_BODY_EVENTS = 400
_BODY_EVENT_EVERY_S = 4.0
_END_PATTERN_SPACING_S = 1.0


@dataclass
class ActivityProfile:
    """Generation parameters for one activity class."""

    name: str
    begin_pattern: list[str]
    end_pattern: list[str]
    body_sensors: list[str]
    duration_range: tuple[float, float]  # bell-shaped draws within (lo, hi)
    body_weights: list[float] | None = None

    def validate(self) -> None:
        if not self.name:
            raise InvalidGeneratorSpec("activity name must be non-empty")
        if not self.begin_pattern or not self.end_pattern:
            raise InvalidGeneratorSpec(f"{self.name}: begin/end patterns must be non-empty")
        if not self.body_sensors:
            raise InvalidGeneratorSpec(f"{self.name}: body sensors must be non-empty")
        lo, hi = self.duration_range
        min_duration = len(self.end_pattern) * _END_PATTERN_SPACING_S + 2.0
        if not 0 < lo <= hi:
            raise InvalidGeneratorSpec(f"{self.name}: bad duration range {self.duration_range}")
        if lo <= min_duration:
            raise InvalidGeneratorSpec(
                f"{self.name}: minimum duration {lo} too short for the end pattern "
                f"(needs > {min_duration})"
            )
        if self.body_weights is not None:
            if len(self.body_weights) != len(self.body_sensors):
                raise InvalidGeneratorSpec(f"{self.name}: body_weights length mismatch")
            if any(w < 0 for w in self.body_weights) or sum(self.body_weights) <= 0:
                raise InvalidGeneratorSpec(f"{self.name}: body_weights must be non-negative, not all zero")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "begin_pattern": self.begin_pattern,
            "end_pattern": self.end_pattern,
            "body_sensors": self.body_sensors,
            "duration_range": list(self.duration_range),
            "body_weights": self.body_weights,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityProfile":
        try:
            return cls(
                name=data["name"],
                begin_pattern=list(data["begin_pattern"]),
                end_pattern=list(data["end_pattern"]),
                body_sensors=list(data["body_sensors"]),
                duration_range=tuple(data["duration_range"]),
                body_weights=list(data["body_weights"]) if data.get("body_weights") else None,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGeneratorSpec(f"bad activity profile: {exc}") from exc


@dataclass
class StreamProfile:
    """Generation parameters for the whole stream."""

    activities: list[ActivityProfile]
    gap_sensors: list[str]
    gap_events: tuple[int, int] = (6, 14)
    gap_spacing_s: tuple[float, float] = (2.0, 8.0)
    value_token: str = "ON"
    start_time: dt.datetime = field(default_factory=lambda: dt.datetime(2024, 1, 1, 0, 0, 0))

    def validate(self) -> None:
        if not self.gap_sensors:
            raise InvalidGeneratorSpec("gap sensors must be non-empty")
        if self.gap_events[0] < 1 or self.gap_events[0] > self.gap_events[1]:
            raise InvalidGeneratorSpec(f"bad gap event count range {self.gap_events}")
        if self.gap_spacing_s[0] <= 0 or self.gap_spacing_s[0] > self.gap_spacing_s[1]:
            raise InvalidGeneratorSpec(f"bad gap spacing range {self.gap_spacing_s}")
        for activity in self.activities:
            activity.validate()
        names = [a.name for a in self.activities]
        if len(set(names)) != len(names):
            raise InvalidGeneratorSpec("activity names must be unique")

    def to_dict(self) -> dict:
        return {
            "activities": [a.to_dict() for a in self.activities],
            "gap_sensors": self.gap_sensors,
            "gap_events": list(self.gap_events),
            "gap_spacing_s": list(self.gap_spacing_s),
            "value_token": self.value_token,
            "start_time": self.start_time.isoformat(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "StreamProfile":
        try:
            return cls(
                activities=[ActivityProfile.from_dict(a) for a in data["activities"]],
                gap_sensors=list(data["gap_sensors"]),
                gap_events=tuple(data.get("gap_events", (6, 14))),
                gap_spacing_s=tuple(data.get("gap_spacing_s", (2.0, 8.0))),
                value_token=data.get("value_token", "ON"),
                start_time=dt.datetime.fromisoformat(data.get("start_time", "2024-01-01T00:00:00")),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InvalidGeneratorSpec(f"bad stream profile: {exc}") from exc


def _pick(rng: random.Random, items: Sequence[str], weights: Sequence[float] | None) -> str:
    if weights is None:
        return items[rng.randrange(len(items))]
    total = sum(weights)
    point = rng.uniform(0.0, total)
    acc = 0.0
    for item, weight in zip(items, weights):
        acc += weight
        if point <= acc:
            return item
    return items[-1]


def generate_stream(
    profile: StreamProfile,
    n_activities: int,
    seed: int,
) -> tuple[list[SensorEvent], list[LabeledSegment]]:
    """Generate a stream plus its ground-truth segments, deterministic per seed."""
    profile.validate()
    if n_activities < 0:
        raise InvalidGeneratorSpec("n_activities must be >= 0")
    if n_activities > 0 and not profile.activities:
        raise InvalidGeneratorSpec("need at least one activity class to plant activities")
    rng = random.Random(seed)
    value = profile.value_token
    events: list[SensorEvent] = []
    truth: list[LabeledSegment] = []
    clock = profile.start_time

    def advance(lo: float, hi: float) -> dt.datetime:
        nonlocal clock
        clock += dt.timedelta(seconds=round(rng.uniform(lo, hi), 6))
        return clock

    def emit(sensor: str, label: str | None = None, mark: BoundaryMark | None = None) -> None:
        events.append(SensorEvent(timestamp=clock, sensor_id=sensor, value=value, label=label, mark=mark))

    def emit_gap_block() -> None:
        for _ in range(rng.randint(*profile.gap_events)):
            advance(*profile.gap_spacing_s)
            emit(profile.gap_sensors[rng.randrange(len(profile.gap_sensors))])

    for _ in range(n_activities):
        emit_gap_block()
        activity = profile.activities[rng.randrange(len(profile.activities))]

        for sensor in activity.begin_pattern[:-1]:
            advance(0.6, 1.2)
            emit(sensor)

        lo, hi = activity.duration_range
        duration = round(lo + (hi - lo) * rng.betavariate(2.0, 2.0), 6)
        end_len = len(activity.end_pattern)
        tail = [duration - (end_len - 1 - j) * _END_PATTERN_SPACING_S for j in range(end_len)]
        body_span = tail[0] - 1.0
        n_body = min(_MAX_BODY_EVENTS, max(1, int(body_span / _BODY_EVENT_EVERY_S)))
        offsets = sorted(round(rng.uniform(0.5, body_span), 6) for _ in range(n_body))

        advance(0.6, 1.2)
        t0 = clock
        start_index = len(events)
        emit(activity.begin_pattern[-1], activity.name, BoundaryMark.BEGIN)

        last = 0.0
        inner: list[tuple[float, str, BoundaryMark | None]] = [
            (off, _pick(rng, activity.body_sensors, activity.body_weights), None) for off in offsets
        ]
        inner.extend(
            (off, sensor, BoundaryMark.END if j == end_len - 1 else None)
            for j, (off, sensor) in enumerate(zip(tail, activity.end_pattern))
        )
        for off, sensor, mark in inner:
            if off <= last:  # keep timestamps strictly increasing
                off = last + 1e-6
            last = off
            clock = t0 + dt.timedelta(seconds=off)
            emit(sensor, activity.name, mark)

        truth.append(
            LabeledSegment(
                label=activity.name,
                events=events[start_index:],
                start_index=start_index,
                end_index=len(events) - 1,
            )
        )
    emit_gap_block()
    return events, truth


def write_stream(events: Sequence[SensorEvent], out: TextIO) -> None:
    """Write events in the ingest text format, one line per event."""
    for event in events:
        out.write(format_event_line(event))
        out.write("\n")


def well_separated_profile(n_classes: int, pattern_len: int = 3, n_body_sensors: int = 5) -> StreamProfile:
    """Profile with disjoint per-class vocabularies and unique boundary patterns."""
    if n_classes < 1:
        raise InvalidGeneratorSpec("need at least one class")
    if pattern_len < 1:
        raise InvalidGeneratorSpec("pattern_len must be >= 1")
    activities = []
    for i in range(n_classes):
        activities.append(
            ActivityProfile(
                name=f"Activity_{i:02d}",
                begin_pattern=[f"B{i:02d}_{j}" for j in range(pattern_len)],
                end_pattern=[f"E{i:02d}_{j}" for j in range(pattern_len)],
                body_sensors=[f"S{i:02d}_{j}" for j in range(n_body_sensors)],
                duration_range=(40.0 + 15.0 * i, 160.0 + 30.0 * i),
            )
        )
    return StreamProfile(activities=activities, gap_sensors=[f"G{j}" for j in range(6)])
