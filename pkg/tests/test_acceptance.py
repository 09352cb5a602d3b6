"""Acceptance suite: one test per criterion, one printed line per criterion.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
PASS/FAIL lines. Criterion 8 needs the two real smart-home logs and skips
with instructions when they are absent; everything else is self-contained.
"""

from __future__ import annotations

import inspect
import json
import os
import time
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

import actseg.infer
from actseg.evaluate import (
    ConfusionCounts,
    accuracy,
    baseline_fixed_window,
    begin_detection_accuracy,
    binary_accuracy,
    evaluate_stream,
    sweep,
)
from actseg.infer import label_segment, run_stream
from actseg.ingest import OTHER_CLASS, extract_labeled_segments, load_dataset, split_chronological
from actseg.model import ModelConfig, forward_init, forward_step, save_model
from actseg.synth import generate_stream, well_separated_profile
from actseg.train import train_full

from conftest import enumerate_forward, random_hmm, tiny_model


@contextmanager
def criterion(number: int, text: str):
    try:
        yield
    except pytest.skip.Exception:
        print(f"[SKIP] criterion {number}: {text}")
        raise
    except BaseException:
        print(f"[FAIL] criterion {number}: {text}")
        raise
    print(f"[PASS] criterion {number}: {text}")


def test_criterion_1_filtering_oracle():
    """Filtered posteriors and sequence likelihoods match path enumeration."""
    with criterion(1, "filtering matches exhaustive path enumeration (200 models, <10 s)"):
        rng = np.random.default_rng(2024)
        started = time.perf_counter()
        for _ in range(200):
            k = int(rng.integers(1, 5))
            v = int(rng.integers(2, 6))
            t = int(rng.integers(1, 7))
            hmm = random_hmm(rng, k, v)
            ys = [int(y) for y in rng.integers(0, v, size=t)]
            state = forward_init(hmm, ys[0])
            for y in ys[1:]:
                state = forward_step(hmm, state, y)
            oracle_post, oracle_ll = enumerate_forward(hmm, ys)
            np.testing.assert_allclose(np.exp(state.log_belief), oracle_post, rtol=1e-9)
            np.testing.assert_allclose(state.log_evidence, oracle_ll, rtol=1e-9)
        elapsed = time.perf_counter() - started
        assert elapsed < 10.0, f"oracle suite took {elapsed:.1f}s"


def test_criterion_2_normalization_over_long_run():
    """10^6 filter steps: every posterior sums to 1, evidence stays finite."""
    with criterion(2, "10^6-step filter keeps posteriors normalized and evidence finite"):
        rng = np.random.default_rng(7)
        hmm = random_hmm(rng, 8, 12)
        ys = rng.integers(0, 12, size=1_000_000)
        state = forward_init(hmm, int(ys[0]))
        worst = abs(float(np.exp(state.log_belief).sum()) - 1.0)
        for y in ys[1:]:
            state = forward_step(hmm, state, int(y))
            deviation = abs(float(np.exp(state.log_belief).sum()) - 1.0)
            if deviation > worst:
                worst = deviation
        assert worst < 1e-9, f"worst posterior-sum deviation {worst:.3e}"
        assert np.isfinite(state.log_evidence)
        assert state.steps == 1_000_000


def test_criterion_3_accuracy_exact_rational():
    """Accuracy agrees with exact rational arithmetic, zero tolerance."""
    with criterion(3, "accuracy equals exact rational arithmetic on 20 tables"):
        binary_tables = [
            (3, 2, 3, 2),
            (5, 5, 0, 0),
            (1, 0, 0, 0),
            (0, 1, 0, 0),
            (0, 0, 1, 2),
            (7, 11, 3, 9),
            (123, 456, 78, 90),
            (1, 1, 1, 1),
            (2, 3, 5, 7),
            (10, 0, 0, 30),
        ]
        for tp, tn, fp, fn in binary_tables:
            exact = Fraction(tp + tn, tp + tn + fp + fn)
            assert binary_accuracy(tp, tn, fp, fn) == float(exact)
        rng = np.random.default_rng(3)
        for _ in range(10):
            n = int(rng.integers(2, 6))
            matrix = rng.integers(0, 40, size=(n, n))
            matrix[0, 0] += 1  # non-empty
            counts = ConfusionCounts(
                labels=tuple(f"C{i}" for i in range(n)), matrix=matrix
            )
            exact = Fraction(int(np.trace(matrix)), int(matrix.sum()))
            assert accuracy(counts) == float(exact)


def test_criterion_4_duration_rule_boundary():
    """Winner kept iff duration likelihood >= alpha, boundary inclusive."""
    with criterion(4, "duration-threshold labeling is >=-inclusive over the full grid"):
        likelihoods = [0.0, 0.01, 0.02, 0.04, 0.05, 0.06, 0.08, 0.0799, 0.0801, 0.10, 0.5, 1.0]
        alphas = [0.0, 0.02, 0.04, 0.06, 0.08, 0.10, 0.5, 1.0]
        for level in likelihoods:
            for alpha in alphas:
                model = tiny_model(bin_mass=(level, 1.0 - level), alpha=alpha)
                final, likelihood = label_segment(model, "Task", 30.0)
                assert likelihood == level
                expected = "Task" if level >= alpha else OTHER_CLASS
                assert final == expected, (level, alpha)


def test_criterion_5_synthetic_end_to_end():
    """Full pipeline on the 5-class planted corpus: accuracy, onsets, rule."""
    with criterion(5, "planted 5-class corpus: accuracy >= 0.90, onsets >= 0.95, rule holds, <30 s"):
        started = time.perf_counter()
        profile = well_separated_profile(5)
        events, _ = generate_stream(profile, 500, seed=42)
        split = split_chronological(events)
        model, _ = train_full(split.train, split.validation, ModelConfig())
        result = evaluate_stream(model, split.test)
        onset = begin_detection_accuracy(model, split.test, tolerance_events=3)
        elapsed = time.perf_counter() - started
        assert result.online_accuracy >= 0.90, f"online accuracy {result.online_accuracy:.3f}"
        assert result.segment_accuracy >= 0.90, f"segment accuracy {result.segment_accuracy:.3f}"
        assert onset.accuracy >= 0.95, f"begin-detection accuracy {onset.accuracy:.3f}"
        for record in result.segments:
            expected = (
                record.winner_class
                if record.duration_likelihood >= model.config.alpha
                else OTHER_CLASS
            )
            assert record.final_label == expected
        assert elapsed < 30.0, f"pipeline took {elapsed:.1f}s"


def test_criterion_6_no_window_and_data_driven_durations(separated_model, separated_split):
    """No stream-window parameter in the inference path; durations track truth."""
    with criterion(6, "inference path is window-free; output durations track planted ones"):
        source = inspect.getsource(actseg.infer).lower()
        assert "window" not in source
        assert "sliding" not in source

        model, _ = separated_model
        _, records = run_stream(model, separated_split.test)
        truth, _ = extract_labeled_segments(separated_split.test)
        detected = np.array([r.duration_s for r in records])
        planted = np.array([s.duration_s for s in truth])
        assert detected.std() > 0  # segment lengths are data-driven, not fixed
        edges = np.linspace(0.0, max(planted.max(), detected.max()), 11)
        hist_detected, _ = np.histogram(detected, bins=edges)
        hist_planted, _ = np.histogram(planted, bins=edges)
        r = float(np.corrcoef(hist_detected, hist_planted)[0, 1])
        assert r >= 0.9, f"duration histogram correlation {r:.3f}"


def test_criterion_7_determinism(separated_split, tmp_path):
    """Identical inputs give byte-identical model files and reports."""
    with criterion(7, "train+eval twice: byte-identical model files and reports"):
        blobs = []
        for name in ("a", "b"):
            model, report = train_full(
                separated_split.train, separated_split.validation, ModelConfig()
            )
            path = tmp_path / f"model-{name}.json"
            save_model(model, path)
            result = evaluate_stream(model, separated_split.test)
            blobs.append(
                (
                    path.read_bytes(),
                    json.dumps(report.to_dict(), sort_keys=True),
                    json.dumps(result.to_dict(), sort_keys=True),
                )
            )
        assert blobs[0][0] == blobs[1][0], "model files differ"
        assert blobs[0][1] == blobs[1][1], "training reports differ"
        assert blobs[0][2] == blobs[1][2], "evaluation reports differ"


def _real_dataset_path(name: str) -> Path | None:
    env = os.environ.get(f"ACTSEG_{name.upper()}_DATA")
    if env:
        return Path(env)
    default = Path(__file__).resolve().parent.parent / "data" / f"{name}.txt"
    return default if default.exists() else None


@pytest.mark.parametrize(
    "name,best_alpha,target_accuracy",
    [("home1", 0.08, 0.646), ("home2", 0.06, 0.59)],
)
def test_criterion_8_real_datasets_conditional(name, best_alpha, target_accuracy):
    """CONDITIONAL: published sweep optima and accuracies on the real logs."""
    with criterion(8, f"{name}: published sweep optima and accuracy reproduced"):
        path = _real_dataset_path(name)
        if path is None or not path.exists():
            pytest.skip(
                f"real dataset not available; place it at data/{name}.txt or set "
                f"ACTSEG_{name.upper()}_DATA"
            )
        events, _ = load_dataset(path)
        split = split_chronological(events)

        alpha_report = sweep("alpha", (0.02, 0.04, 0.06, 0.08, 0.10), split.train, split.validation)
        assert alpha_report.best == best_alpha

        n_report = sweep("n", (2, 3, 4, 5, 6), split.train, split.validation)
        assert n_report.best == 3

        model, _ = train_full(split.train, split.validation, ModelConfig())
        result = evaluate_stream(model, split.test)
        proposed = max(result.online_accuracy, result.segment_accuracy)
        assert abs(proposed - target_accuracy) <= 0.05

        _, baseline_acc = baseline_fixed_window(split.train, split.test, window_size=20)
        assert proposed > baseline_acc


def test_criterion_9_throughput():
    """Streaming inference sustains >= 1e5 events/s on one core (12-class, K=4)."""
    with criterion(9, "streaming >= 1e5 events/s for a 12-class K=4 model"):
        profile = well_separated_profile(12)
        events, _ = generate_stream(profile, 3000, seed=3)
        assert len(events) >= 200_000
        split = split_chronological(events)
        model, _ = train_full(split.train, split.validation, ModelConfig(k_states=4))
        assert len(model.classes) == 12
        run_stream(model, events[:5000])  # warm the compiled kernel
        started = time.perf_counter()
        predictions, records = run_stream(model, events)
        elapsed = time.perf_counter() - started
        assert len(predictions) == len(events)
        assert records
        rate = len(events) / elapsed
        print(f"  measured {rate:,.0f} events/s over {len(events)} events")
        assert rate >= 1e5, f"throughput {rate:,.0f} events/s"
