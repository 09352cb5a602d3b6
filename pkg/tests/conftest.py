"""Shared fixtures and independent oracles for the test suite."""

from __future__ import annotations

import datetime as dt
import itertools
import math

import numpy as np
import pytest

from actseg.ingest import ActivityClassSet, SensorVocabulary, split_chronological
from actseg.model import ActivityModel, DurationDistribution, Hmm, ModelConfig
from actseg.synth import generate_stream, well_separated_profile
from actseg.train import train_full


def random_hmm(rng: np.random.Generator, k: int, v: int) -> Hmm:
    """Random fully dense HMM (strictly positive rows)."""
    return Hmm(
        initial=rng.dirichlet(np.ones(k)),
        transition=rng.dirichlet(np.ones(k), size=k),
        emission=rng.dirichlet(np.ones(v), size=k),
    )


def enumerate_forward(hmm: Hmm, ys: list[int]) -> tuple[list[float], float]:
    """Brute-force oracle: posterior over the final hidden state and the
    sequence log-likelihood, by summing over every hidden path explicitly."""
    k = hmm.n_states
    total = 0.0
    ending = [0.0] * k
    for path in itertools.product(range(k), repeat=len(ys)):
        p = float(hmm.initial[path[0]] * hmm.emission[path[0], ys[0]])
        for t in range(1, len(ys)):
            p *= float(hmm.transition[path[t - 1], path[t]] * hmm.emission[path[t], ys[t]])
        total += p
        ending[path[-1]] += p
    return [e / total for e in ending], math.log(total)


def tiny_model(
    bin_mass: tuple[float, ...] = (0.5, 0.5),
    bin_edges: tuple[float, ...] = (0.0, 60.0, 120.0),
    alpha: float = 0.08,
    begin_threshold: float = -100.0,
    end_threshold: float = 100.0,
    n_preceding: int = 1,
    class_names: tuple[str, ...] = ("Task",),
    emissions: dict[str, np.ndarray] | None = None,
    vocab_tokens: tuple[str, ...] = ("A=ON", "B=ON"),
) -> ActivityModel:
    """Minimal hand-built one-or-few-class model for targeted unit tests."""
    vocabulary = SensorVocabulary(
        index_of={tok: i for i, tok in enumerate(vocab_tokens)}, unk_enabled=False
    )
    v = vocabulary.size
    uniform = Hmm(
        initial=np.array([1.0]),
        transition=np.array([[1.0]]),
        emission=np.full((1, v), 1.0 / v),
    )
    config = ModelConfig(
        n_preceding=n_preceding,
        alpha=alpha,
        begin_threshold=begin_threshold,
        end_threshold=end_threshold,
        unk_enabled=False,
    )
    dist = DurationDistribution(
        bin_edges=np.array(bin_edges), bin_mass=np.array(bin_mass), n_samples=10
    )
    activity = {}
    for name in class_names:
        if emissions and name in emissions:
            activity[name] = Hmm(
                initial=np.array([1.0]),
                transition=np.array([[1.0]]),
                emission=np.asarray(emissions[name])[None, :],
            )
        else:
            activity[name] = uniform
    n = len(class_names)
    return ActivityModel(
        classes=ActivityClassSet(names=class_names),
        vocabulary=vocabulary,
        begin_hmms={name: uniform for name in class_names},
        activity_hmms=activity,
        end_hmms={name: uniform for name in class_names},
        durations={name: dist for name in class_names},
        class_prior=np.full(n, 1.0 / n),
        config=config,
    )


def make_events_text(lines: list[str]) -> str:
    return "\n".join(lines) + "\n"


@pytest.fixture(scope="session")
def separated_corpus():
    """Well-separated 5-class planted corpus, 500 activities, fixed seed."""
    profile = well_separated_profile(5)
    events, truth = generate_stream(profile, 500, seed=42)
    return profile, events, truth


@pytest.fixture(scope="session")
def separated_split(separated_corpus):
    _, events, _ = separated_corpus
    return split_chronological(events)


@pytest.fixture(scope="session")
def separated_model(separated_split):
    model, report = train_full(
        separated_split.train, separated_split.validation, ModelConfig()
    )
    return model, report


EPOCH = dt.datetime(2024, 6, 1, 8, 0, 0)


def make_event_line(
    offset_s: float,
    sensor: str,
    value: str = "ON",
    label: str | None = None,
    mark: str | None = None,
) -> str:
    stamp = (EPOCH + dt.timedelta(seconds=offset_s)).strftime("%Y-%m-%d %H:%M:%S.%f")
    parts = [stamp, sensor, value]
    if label:
        parts.append(label)
        if mark:
            parts.append(mark)
    return " ".join(parts)
