"""Tests for the synthetic stream generator."""

from __future__ import annotations

import io

import pytest

from actseg.errors import InvalidGeneratorSpec
from actseg.ingest import BoundaryMark, extract_labeled_segments, load_dataset
from actseg.synth import (
    ActivityProfile,
    StreamProfile,
    generate_stream,
    well_separated_profile,
    write_stream,
)


def _render(events) -> str:
    out = io.StringIO()
    write_stream(events, out)
    return out.getvalue()


class TestDeterminism:
    def test_same_seed_same_bytes(self):
        profile = well_separated_profile(2)
        a, _ = generate_stream(profile, 100, seed=42)
        b, _ = generate_stream(profile, 100, seed=42)
        assert _render(a) == _render(b)

    def test_different_seeds_differ(self):
        profile = well_separated_profile(2)
        a, _ = generate_stream(profile, 100, seed=42)
        b, _ = generate_stream(profile, 100, seed=43)
        assert _render(a) != _render(b)


class TestStreamShape:
    def test_zero_activities_gap_only(self):
        profile = well_separated_profile(2)
        events, truth = generate_stream(profile, 0, seed=1)
        assert truth == []
        assert events  # one trailing gap block
        assert all(e.label is None and e.mark is None for e in events)

    def test_timestamps_strictly_increasing(self):
        profile = well_separated_profile(3)
        events, _ = generate_stream(profile, 50, seed=2)
        for prev, cur in zip(events, events[1:]):
            assert prev.timestamp < cur.timestamp

    def test_ground_truth_matches_marks(self):
        profile = well_separated_profile(3)
        events, truth = generate_stream(profile, 40, seed=3)
        extracted, issues = extract_labeled_segments(events)
        assert issues == []
        assert [(s.start_index, s.end_index, s.label) for s in extracted] == [
            (s.start_index, s.end_index, s.label) for s in truth
        ]

    def test_marks_bound_each_activity(self):
        profile = well_separated_profile(2)
        events, truth = generate_stream(profile, 10, seed=4)
        for seg in truth:
            assert events[seg.start_index].mark is BoundaryMark.BEGIN
            assert events[seg.end_index].mark is BoundaryMark.END
            assert all(e.label == seg.label for e in seg.events)

    def test_durations_within_configured_range(self):
        profile = well_separated_profile(1)
        events, truth = generate_stream(profile, 30, seed=5)
        lo, hi = profile.activities[0].duration_range
        for seg in truth:
            assert lo <= seg.duration_s <= hi

    def test_round_trip_through_text_format(self, tmp_path):
        profile = well_separated_profile(2)
        events, _ = generate_stream(profile, 25, seed=6)
        path = tmp_path / "synthetic.txt"
        path.write_text(_render(events))
        loaded, report = load_dataset(path)
        assert report.skipped == 0
        assert report.monotonicity_violations == []
        assert loaded == events


class TestValidation:
    def test_no_classes_with_activities_rejected(self):
        profile = StreamProfile(activities=[], gap_sensors=["G0"])
        with pytest.raises(InvalidGeneratorSpec):
            generate_stream(profile, 5, seed=0)

    def test_negative_count_rejected(self):
        with pytest.raises(InvalidGeneratorSpec):
            generate_stream(well_separated_profile(1), -1, seed=0)

    def test_duration_too_short_for_end_pattern(self):
        activity = ActivityProfile(
            name="X",
            begin_pattern=["a", "b", "c"],
            end_pattern=["d", "e", "f"],
            body_sensors=["s"],
            duration_range=(3.0, 4.0),
        )
        with pytest.raises(InvalidGeneratorSpec):
            StreamProfile(activities=[activity], gap_sensors=["G0"]).validate()

    def test_weights_length_mismatch(self):
        activity = ActivityProfile(
            name="X",
            begin_pattern=["a"],
            end_pattern=["d"],
            body_sensors=["s", "t"],
            duration_range=(30.0, 40.0),
            body_weights=[1.0],
        )
        with pytest.raises(InvalidGeneratorSpec):
            activity.validate()

    def test_duplicate_names_rejected(self):
        activity = well_separated_profile(1).activities[0]
        profile = StreamProfile(activities=[activity, activity], gap_sensors=["G0"])
        with pytest.raises(InvalidGeneratorSpec):
            profile.validate()

    def test_profile_dict_round_trip(self):
        profile = well_separated_profile(2)
        rebuilt = StreamProfile.from_dict(profile.to_dict())
        a, _ = generate_stream(profile, 20, seed=7)
        b, _ = generate_stream(rebuilt, 20, seed=7)
        assert _render(a) == _render(b)


class TestWellSeparatedProfile:
    def test_sensor_sets_disjoint_across_classes(self):
        profile = well_separated_profile(4)
        seen: set[str] = set(profile.gap_sensors)
        for activity in profile.activities:
            sensors = set(activity.begin_pattern) | set(activity.end_pattern) | set(activity.body_sensors)
            assert not sensors & seen
            seen |= sensors
