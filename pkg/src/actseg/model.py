"""Probabilistic core: discrete HMMs, forward filtering, duration histograms,
and the trained model artifact with its JSON (de)serialization.

Filtering follows the standard forward recursion

    belief_t  proportional to  emission[:, y_t] * (transition^T @ belief_{t-1})

computed in log space with log-sum-exp; the per-step normalizer is
accumulated separately as the running sequence log-likelihood.
"""

from __future__ import annotations

import json
from dataclasses import InitVar, dataclass
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InvariantViolation, IoFailure, SchemaVersionError, ZeroLikelihoodError
from .ingest import ActivityClassSet, SensorVocabulary

MODEL_FORMAT_VERSION = 1
_ROW_SUM_TOL = 1e-12


def logsumexp(values: np.ndarray, axis: int | None = None) -> np.ndarray | float:
    """Numerically stable log(sum(exp(values)))."""
    values = np.asarray(values, dtype=float)
    peak = np.max(values, axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(values - peak), axis=axis, keepdims=True)) + peak
    if axis is None:
        return float(out.reshape(()))
    return np.squeeze(out, axis=axis)


def _check_stochastic(name: str, table: np.ndarray) -> None:
    if np.any(table < 0):
        raise InvariantViolation(f"{name} has negative entries")
    sums = table.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise InvariantViolation(f"{name} rows must sum to 1 (worst deviation {worst:.3e})")


@dataclass(eq=False)
class Hmm:
    """Discrete-observation hidden Markov model.

    ``initial`` has shape (K,), ``transition`` (K, K) with row i giving
    P(next state | state i), ``emission`` (K, V) with row k giving
    P(observation | state k). Instances are treated as immutable after
    construction and are safe to share across threads.

    ``validate=False`` skips the stochasticity checks; filtering normalizes
    per step, so unnormalized tables still yield a proper posterior.
    """

    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate: bool) -> None:
        self.initial = np.asarray(self.initial, dtype=float)
        self.transition = np.asarray(self.transition, dtype=float)
        self.emission = np.asarray(self.emission, dtype=float)
        k = self.initial.shape[0]
        if k < 1:
            raise InvariantViolation("need at least one hidden state")
        if self.transition.shape != (k, k):
            raise InvariantViolation(f"transition shape {self.transition.shape} != ({k}, {k})")
        if self.emission.ndim != 2 or self.emission.shape[0] != k or self.emission.shape[1] < 1:
            raise InvariantViolation(f"emission shape {self.emission.shape} incompatible with K={k}")
        if not validate:
            return
        _check_stochastic("initial", self.initial[None, :])
        _check_stochastic("transition", self.transition)
        _check_stochastic("emission", self.emission)

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.emission.shape[1]

    @cached_property
    def log_initial(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.initial)

    @cached_property
    def log_transition(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.transition)

    @cached_property
    def log_emission(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.emission)

    def to_dict(self) -> dict:
        return {
            "initial": self.initial.tolist(),
            "transition": self.transition.tolist(),
            "emission": self.emission.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hmm":
        return cls(
            initial=np.array(data["initial"], dtype=float),
            transition=np.array(data["transition"], dtype=float),
            emission=np.array(data["emission"], dtype=float),
        )


@dataclass
class FilterState:
    """Mutable state of one forward filter run (confined to one stream)."""

    log_belief: np.ndarray
    steps: int
    log_evidence: float


def forward_init(hmm: Hmm, y: int) -> FilterState:
    """Start a filter on the first observation.

    The belief is initial * emission[:, y], normalized; the normalizer is
    the first-step evidence.
    """
    if not 0 <= y < hmm.vocab_size:
        raise ValueError(f"observation index {y} outside [0, {hmm.vocab_size})")
    scores = hmm.log_initial + hmm.log_emission[:, y]
    norm = logsumexp(scores)
    if not np.isfinite(norm):
        raise ZeroLikelihoodError(f"all states assign zero probability to observation {y}")
    return FilterState(log_belief=scores - norm, steps=1, log_evidence=norm)


def forward_step(hmm: Hmm, state: FilterState, y: int) -> FilterState:
    """Absorb one observation into the filter, returning the updated state."""
    if not 0 <= y < hmm.vocab_size:
        raise ValueError(f"observation index {y} outside [0, {hmm.vocab_size})")
    predicted = logsumexp(state.log_belief[:, None] + hmm.log_transition, axis=0)
    scores = hmm.log_emission[:, y] + predicted
    norm = logsumexp(scores)
    if not np.isfinite(norm):
        raise ZeroLikelihoodError(
            f"all states assign zero probability to observation {y} at step {state.steps + 1}"
        )
    return FilterState(
        log_belief=scores - norm,
        steps=state.steps + 1,
        log_evidence=state.log_evidence + norm,
    )


def sequence_loglik(hmm: Hmm, ys: Sequence[int]) -> float:
    """log P(y_1..y_T) under the model, via forward filtering."""
    if len(ys) == 0:
        raise ValueError("observation sequence must be non-empty")
    state = forward_init(hmm, ys[0])
    for y in ys[1:]:
        state = forward_step(hmm, state, y)
    return state.log_evidence


@dataclass(eq=False)
class DurationDistribution:
    """Empirical histogram over segment durations (seconds) for one class.

    Bins are right-open except the last, which is right-closed, so every
    duration in [first_edge, last_edge] has a bin. Durations outside the
    support have probability 0.
    """

    bin_edges: np.ndarray
    bin_mass: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.bin_mass = np.asarray(self.bin_mass, dtype=float)
        if len(self.bin_mass) != len(self.bin_edges) - 1:
            raise InvariantViolation("need len(bin_mass) == len(bin_edges) - 1")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise InvariantViolation("bin edges must be strictly increasing")
        if np.any(self.bin_mass < 0):
            raise InvariantViolation("bin masses must be non-negative")
        if abs(self.bin_mass.sum() - 1.0) > _ROW_SUM_TOL:
            raise InvariantViolation("bin masses must sum to 1")

    def likelihood(self, duration_s: float) -> float:
        """Probability mass of the bin containing ``duration_s``."""
        if duration_s < 0:
            raise ValueError("duration must be non-negative")
        edges = self.bin_edges
        if duration_s < edges[0] or duration_s > edges[-1]:
            return 0.0
        if duration_s == edges[-1]:
            return float(self.bin_mass[-1])
        idx = int(np.searchsorted(edges, duration_s, side="right")) - 1
        return float(self.bin_mass[idx])

    def to_dict(self) -> dict:
        return {
            "bin_edges": self.bin_edges.tolist(),
            "bin_mass": self.bin_mass.tolist(),
            "n_samples": self.n_samples,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DurationDistribution":
        return cls(
            bin_edges=np.array(data["bin_edges"], dtype=float),
            bin_mass=np.array(data["bin_mass"], dtype=float),
            n_samples=int(data["n_samples"]),
        )


#: Default grid for calibrating the duration-likelihood threshold.
DEFAULT_ALPHA_GRID = (0.02, 0.04, 0.06, 0.08, 0.10)


@dataclass
class ModelConfig:
    """Knobs of the recognizer and its training procedure."""

    n_preceding: int = 3
    alpha: float = 0.08
    smoothing: float = 1.0
    k_states: int = 4
    begin_threshold: float | None = None
    end_threshold: float | None = None
    n_duration_bins: int = 10
    unk_enabled: bool = True
    max_segment_s: float = 86400.0
    alpha_grid: tuple[float, ...] = DEFAULT_ALPHA_GRID

    def __post_init__(self) -> None:
        if self.n_preceding < 1:
            raise ValueError("n_preceding must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be > 0")
        if self.k_states < 1:
            raise ValueError("k_states must be >= 1")
        if self.n_duration_bins < 1:
            raise ValueError("n_duration_bins must be >= 1")
        if self.max_segment_s <= 0:
            raise ValueError("max_segment_s must be > 0")

    def to_dict(self) -> dict:
        return {
            "n_preceding": self.n_preceding,
            "alpha": self.alpha,
            "smoothing": self.smoothing,
            "k_states": self.k_states,
            "begin_threshold": self.begin_threshold,
            "end_threshold": self.end_threshold,
            "n_duration_bins": self.n_duration_bins,
            "unk_enabled": self.unk_enabled,
            "max_segment_s": self.max_segment_s,
            "alpha_grid": list(self.alpha_grid),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = dict(data)
        if "alpha_grid" in known:
            known["alpha_grid"] = tuple(known["alpha_grid"])
        return cls(**known)


@dataclass(eq=False)
class ActivityModel:
    """The trained artifact: class set, per-class begin/activity/end HMMs,
    duration histograms, class prior, and configuration.

    Immutable after construction; one instance may serve many concurrent
    streams.
    """

    classes: ActivityClassSet
    vocabulary: SensorVocabulary
    begin_hmms: dict[str, Hmm]
    activity_hmms: dict[str, Hmm]
    end_hmms: dict[str, Hmm]
    durations: dict[str, DurationDistribution]
    class_prior: np.ndarray
    config: ModelConfig

    def __post_init__(self) -> None:
        self.class_prior = np.asarray(self.class_prior, dtype=float)
        names = set(self.classes.names)
        for part, table in (
            ("begin_hmms", self.begin_hmms),
            ("activity_hmms", self.activity_hmms),
            ("end_hmms", self.end_hmms),
            ("durations", self.durations),
        ):
            if set(table) != names:
                raise InvariantViolation(f"{part} keys {sorted(table)} != classes {sorted(names)}")
        v = self.vocabulary.size
        for table in (self.begin_hmms, self.activity_hmms, self.end_hmms):
            for name, hmm in table.items():
                if hmm.vocab_size != v:
                    raise InvariantViolation(f"HMM for {name!r} has V={hmm.vocab_size}, vocabulary has {v}")
        if self.class_prior.shape != (len(self.classes),):
            raise InvariantViolation("class_prior length must match the class set")
        _check_stochastic("class_prior", self.class_prior[None, :])

    @cached_property
    def log_class_prior(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.class_prior)

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "classes": self.classes.to_dict(),
            "vocabulary": self.vocabulary.to_dict(),
            "class_prior": self.class_prior.tolist(),
            "begin_hmms": {name: h.to_dict() for name, h in self.begin_hmms.items()},
            "activity_hmms": {name: h.to_dict() for name, h in self.activity_hmms.items()},
            "end_hmms": {name: h.to_dict() for name, h in self.end_hmms.items()},
            "durations": {name: d.to_dict() for name, d in self.durations.items()},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ActivityModel":
        version = data.get("format_version")
        if version != MODEL_FORMAT_VERSION:
            raise SchemaVersionError(
                f"unsupported model format version {version!r} (expected {MODEL_FORMAT_VERSION})"
            )
        try:
            return cls(
                classes=ActivityClassSet.from_dict(data["classes"]),
                vocabulary=SensorVocabulary.from_dict(data["vocabulary"]),
                begin_hmms={k: Hmm.from_dict(v) for k, v in data["begin_hmms"].items()},
                activity_hmms={k: Hmm.from_dict(v) for k, v in data["activity_hmms"].items()},
                end_hmms={k: Hmm.from_dict(v) for k, v in data["end_hmms"].items()},
                durations={k: DurationDistribution.from_dict(v) for k, v in data["durations"].items()},
                class_prior=np.array(data["class_prior"], dtype=float),
                config=ModelConfig.from_dict(data["config"]),
            )
        except KeyError as exc:
            raise SchemaVersionError(f"model file missing field {exc}") from exc


def save_model(model: ActivityModel, path: str | Path) -> None:
    """Write the model as a versioned JSON document.

    Probability tables are stored linear; Python's JSON float formatting
    round-trips IEEE-754 doubles exactly, so load(save(m)) reproduces every
    table bit for bit.
    """
    path = Path(path)
    try:
        with path.open("w", encoding="utf-8") as handle:
            json.dump(model.to_dict(), handle, sort_keys=True)
            handle.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def load_model(path: str | Path) -> ActivityModel:
    """Read and validate a model file; never yields a partial model."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaVersionError(f"{path} is not a valid model file: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaVersionError(f"{path} is not a model document")
    return ActivityModel.from_dict(data)
