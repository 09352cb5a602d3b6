"""CLI tests: flag grammar, exit codes, stdout/stderr discipline."""

from __future__ import annotations

import io
import json

import pytest

from actseg.cli import main
from actseg.synth import generate_stream, well_separated_profile, write_stream


@pytest.fixture(scope="module")
def corpus_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-corpus")
    profile = well_separated_profile(3)
    events, _ = generate_stream(profile, 150, seed=33)
    path = root / "corpus.txt"
    with path.open("w") as handle:
        write_stream(events, handle)
    return path


@pytest.fixture(scope="module")
def model_file(tmp_path_factory, corpus_file):
    root = tmp_path_factory.mktemp("cli-model")
    path = root / "model.json"
    code = main(["train", "--data", str(corpus_file), "--out", str(path)])
    assert code == 0
    return path


@pytest.fixture(scope="module")
def spec_file(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli-spec")
    profile = well_separated_profile(2)
    path = root / "profile.json"
    data = profile.to_dict()
    data["n_activities"] = 40
    path.write_text(json.dumps(data))
    return path


class TestTrain:
    def test_writes_model_and_report(self, corpus_file, tmp_path, capsys):
        out = tmp_path / "model.json"
        code = main(["train", "--data", str(corpus_file), "--out", str(out)])
        captured = capsys.readouterr()
        assert code == 0
        assert out.exists()
        report = json.loads(captured.out)
        assert report["training_report"]["alpha"] is not None
        assert report["split"]["train"] > report["split"]["test"]

    def test_missing_data_file_exit_code(self, tmp_path, capsys):
        code = main(["train", "--data", str(tmp_path / "nope.txt"), "--out", str(tmp_path / "m.json")])
        captured = capsys.readouterr()
        assert code == 3
        assert "nope.txt" in captured.err

    def test_unlabeled_corpus_exit_code(self, tmp_path, capsys):
        data = tmp_path / "plain.txt"
        data.write_text("2024-01-01 00:00:00.000000 M001 ON\n" * 50)
        code = main(["train", "--data", str(data), "--out", str(tmp_path / "m.json")])
        capsys.readouterr()
        assert code == 5

    def test_flag_overrides_config(self, corpus_file, tmp_path, capsys):
        out = tmp_path / "model.json"
        code = main(["train", "--data", str(corpus_file), "--out", str(out), "--k-states", "2"])
        capsys.readouterr()
        assert code == 0
        model = json.loads(out.read_text())
        assert model["config"]["k_states"] == 2


class TestStream:
    def test_one_prediction_line_per_event(self, model_file, corpus_file, capsys, monkeypatch):
        lines = corpus_file.read_text().splitlines()[:10]
        monkeypatch.setattr("sys.stdin", io.StringIO("\n".join(lines) + "\n"))
        code = main(["stream", "--model", str(model_file)])
        captured = capsys.readouterr()
        assert code == 0
        records = [json.loads(line) for line in captured.out.splitlines()]
        predictions = [r for r in records if r["type"] == "prediction"]
        assert len(predictions) == 10
        assert all(r["schema"] == 1 for r in records)

    def test_malformed_lines_diagnosed_on_stderr(self, model_file, corpus_file, capsys, monkeypatch):
        lines = corpus_file.read_text().splitlines()[:4]
        mixed = lines[:2] + ["not an event line"] + lines[2:]
        monkeypatch.setattr("sys.stdin", io.StringIO("\n".join(mixed) + "\n"))
        code = main(["stream", "--model", str(model_file)])
        captured = capsys.readouterr()
        assert code == 0
        predictions = [json.loads(line) for line in captured.out.splitlines() if json.loads(line)["type"] == "prediction"]
        assert len(predictions) == 4
        assert "malformed" in captured.err

    def test_segment_flushed_at_eof(self, model_file, corpus_file, capsys):
        code = main(["stream", "--model", str(model_file), "--input", str(corpus_file)])
        captured = capsys.readouterr()
        assert code == 0
        records = [json.loads(line) for line in captured.out.splitlines()]
        segments = [r for r in records if r["type"] == "segment"]
        assert segments
        assert all(r["final_label"] for r in segments)

    def test_missing_model_exit_code(self, tmp_path, capsys):
        code = main(["stream", "--model", str(tmp_path / "missing.json"), "--input", "-"])
        capsys.readouterr()
        assert code == 3


class TestEval:
    def test_accuracy_in_unit_interval(self, model_file, corpus_file, capsys):
        code = main(["eval", "--model", str(model_file), "--data", str(corpus_file)])
        captured = capsys.readouterr()
        assert code == 0
        report = json.loads(captured.out)
        assert 0.0 <= report["proposed"]["online_accuracy"] <= 1.0
        assert 0.0 <= report["proposed"]["segment_accuracy"] <= 1.0

    def test_baseline_adds_second_row(self, model_file, corpus_file, capsys):
        code = main(["eval", "--model", str(model_file), "--data", str(corpus_file), "--baseline", "20"])
        captured = capsys.readouterr()
        assert code == 0
        report = json.loads(captured.out)
        assert "baseline" in report and "proposed" in report
        assert report["baseline"]["window_size"] == 20

    def test_unknown_vocabulary_warned(self, model_file, tmp_path, capsys):
        profile = well_separated_profile(1)
        for activity in profile.activities:
            activity.name = "Foreign"
            activity.begin_pattern = ["Z1", "Z2", "Z3"]
            activity.end_pattern = ["Z4", "Z5", "Z6"]
            activity.body_sensors = ["Z7", "Z8"]
        profile.gap_sensors = ["Z9"]
        events, _ = generate_stream(profile, 20, seed=50)
        data = tmp_path / "foreign.txt"
        with data.open("w") as handle:
            write_stream(events, handle)
        code = main(["eval", "--model", str(model_file), "--data", str(data)])
        captured = capsys.readouterr()
        assert code == 0
        assert "unknown-token" in captured.err


class TestSweep:
    def test_alpha_grid_csv(self, corpus_file, capsys):
        code = main([
            "sweep", "--param", "alpha", "--grid", "0.02,0.04,0.06,0.08,0.10",
            "--data", str(corpus_file),
        ])
        captured = capsys.readouterr()
        rows = captured.out.strip().splitlines()
        assert code == 0
        assert rows[0] == "alpha,metric"
        assert len(rows) == 6

    def test_empty_grid_usage_error(self, corpus_file, capsys):
        code = main(["sweep", "--param", "alpha", "--grid", ",", "--data", str(corpus_file)])
        captured = capsys.readouterr()
        assert code == 2
        assert "grid" in captured.err


class TestSynth:
    def test_deterministic_output_file(self, spec_file, tmp_path, capsys):
        out_a, out_b = tmp_path / "a.txt", tmp_path / "b.txt"
        assert main(["synth", "--spec", str(spec_file), "--seed", "7", "--out", str(out_a)]) == 0
        assert main(["synth", "--spec", str(spec_file), "--seed", "7", "--out", str(out_b)]) == 0
        capsys.readouterr()
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_stdout_mode(self, spec_file, capsys):
        code = main(["synth", "--spec", str(spec_file), "--seed", "7", "--out", "-"])
        captured = capsys.readouterr()
        assert code == 0
        assert len(captured.out.splitlines()) > 40

    def test_invalid_spec_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"activities": [], "gap_sensors": []}))
        code = main(["synth", "--spec", str(bad), "--seed", "1", "--out", "-"])
        capsys.readouterr()
        assert code == 9

    def test_spec_json_error_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["synth", "--spec", str(bad), "--seed", "1", "--out", "-"])
        capsys.readouterr()
        assert code == 9


class TestUsage:
    def test_no_command_prints_help(self, capsys):
        code = main([])
        captured = capsys.readouterr()
        assert code == 2
        assert "train" in captured.err
