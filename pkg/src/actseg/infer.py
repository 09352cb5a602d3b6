"""Online recognizer: a per-event state machine over an unbounded stream.

The machine idles until the begin detectors recognize an activity onset in
the last ``n_preceding`` events, then filters every class's activity HMM per
event (posterior = class prior x sequence evidence, normalized), and closes
the segment when the active class's end detector fires. Closed segments are
labeled by the duration-likelihood rule: the filter-bank winner keeps its
label iff its duration histogram assigns the segment's duration at least
``alpha`` mass, otherwise the segment is labeled "Other".

Two implementations of the same machine live here:

- :func:`process_event`, the incremental reference (used by the CLI's
  per-line streaming mode), built on the log-space filter contract ops;
- a numba-compiled whole-stream kernel behind :func:`run_stream`, using
  scaled linear-space filtering (identical up to rounding; the test suite
  asserts agreement between the two).

Memory is constant in stream length: per-stream state is the detector ring
buffer plus the current segment accumulator. A safety valve force-closes
segments longer than ``config.max_segment_s`` (flagged ``"timeout"``).
"""

from __future__ import annotations

import datetime as dt
import weakref
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import ZeroLikelihoodError
from .ingest import OTHER_CLASS, SensorEvent
from .model import ActivityModel, FilterState, forward_init, forward_step, sequence_loglik

_EPOCH = dt.datetime(1970, 1, 1)

IDLE = "idle"
ACTIVE = "active"

END_REASON_PATTERN = "pattern"
END_REASON_TIMEOUT = "timeout"
END_REASON_EOF = "eof"
_REASON_NAMES = {1: END_REASON_PATTERN, 2: END_REASON_TIMEOUT, 3: END_REASON_EOF}


@dataclass
class Prediction:
    """Per-event output: the recognizer's current best guess."""

    event_index: int
    timestamp: dt.datetime
    mode: str
    top_class: str
    posterior: np.ndarray | None  # aligned with model.classes.names; None when idle

    def to_dict(self, class_names: Sequence[str]) -> dict:
        posterior = None
        if self.posterior is not None:
            posterior = {name: float(p) for name, p in zip(class_names, self.posterior)}
        return {
            "type": "prediction",
            "schema": 1,
            "event_index": self.event_index,
            "timestamp": self.timestamp.isoformat(),
            "mode": self.mode,
            "top_class": self.top_class,
            "posterior": posterior,
        }


@dataclass
class SegmentRecord:
    """A finalized activity segment."""

    start_index: int
    end_index: int
    start_time: dt.datetime
    end_time: dt.datetime
    duration_s: float
    events: list[SensorEvent]
    winner_class: str
    duration_likelihood: float
    final_label: str
    posterior: np.ndarray
    end_reason: str

    def to_dict(self, class_names: Sequence[str]) -> dict:
        return {
            "type": "segment",
            "schema": 1,
            "start_index": self.start_index,
            "end_index": self.end_index,
            "start_time": self.start_time.isoformat(),
            "end_time": self.end_time.isoformat(),
            "duration_s": self.duration_s,
            "n_events": len(self.events),
            "winner_class": self.winner_class,
            "duration_likelihood": self.duration_likelihood,
            "final_label": self.final_label,
            "posterior": {name: float(p) for name, p in zip(class_names, self.posterior)},
            "end_reason": self.end_reason,
        }


@dataclass
class StreamState:
    """Mutable per-stream recognizer state (confine to one stream/thread)."""

    mode: str = IDLE
    ring_buffer: list[tuple[int, SensorEvent]] = field(default_factory=list)
    class_filters: dict[str, FilterState] = field(default_factory=dict)
    log_posterior: np.ndarray | None = None
    segment_events: list[SensorEvent] = field(default_factory=list)
    segment_start_index: int = -1
    events_seen: int = 0


def new_stream_state(model: ActivityModel) -> StreamState:
    _require_thresholds(model.config)
    return StreamState()


def _require_thresholds(config) -> None:
    if config.begin_threshold is None or config.end_threshold is None:
        raise ValueError(
            "begin/end detection thresholds are not set; calibrate the model "
            "or set them explicitly in its config"
        )


def detect_begin(model: ActivityModel, context_obs: Sequence[int]) -> tuple[np.ndarray, bool]:
    """Score an onset for every class over a full detector context.

    Score = per-event normalized log-likelihood under the class's begin HMM
    plus the log class prior; fires iff the best score reaches the begin
    threshold.
    """
    n = model.config.n_preceding
    if len(context_obs) != n:
        raise ValueError(f"detector context must hold exactly {n} observations")
    scores = np.array(
        [
            sequence_loglik(model.begin_hmms[name], context_obs) / n + model.log_class_prior[i]
            for i, name in enumerate(model.classes.names)
        ]
    )
    return scores, bool(scores.max() >= model.config.begin_threshold)


def detect_end(model: ActivityModel, context_obs: Sequence[int], top_class: str) -> tuple[float, bool]:
    """Score termination of the currently active class over the detector context."""
    n = model.config.n_preceding
    if len(context_obs) != n:
        raise ValueError(f"detector context must hold exactly {n} observations")
    score = sequence_loglik(model.end_hmms[top_class], context_obs) / n
    return score, bool(score >= model.config.end_threshold)


def label_segment(model: ActivityModel, winner_class: str, duration_s: float) -> tuple[str, float]:
    """Duration-likelihood labeling rule (boundary inclusive).

    Returns (final label, duration likelihood): the winner keeps its label
    iff its duration histogram assigns at least ``alpha`` mass to the
    segment's duration, else the segment is labeled "Other".
    """
    if duration_s < 0:
        raise ValueError("duration must be non-negative")
    likelihood = model.durations[winner_class].likelihood(duration_s)
    final = winner_class if likelihood >= model.config.alpha else OTHER_CLASS
    return final, likelihood


def _posterior_from_filters(model: ActivityModel, state: StreamState) -> np.ndarray:
    log_scores = np.array(
        [
            model.log_class_prior[i] + state.class_filters[name].log_evidence
            for i, name in enumerate(model.classes.names)
        ]
    )
    peak = log_scores.max()
    weights = np.exp(log_scores - peak)
    return weights / weights.sum()


def _finalize(model: ActivityModel, state: StreamState, end_reason: str) -> SegmentRecord:
    posterior = _posterior_from_filters(model, state)
    winner = model.classes.names[int(posterior.argmax())]
    events = state.segment_events
    duration = (events[-1].timestamp - events[0].timestamp).total_seconds()
    final, likelihood = label_segment(model, winner, duration)
    record = SegmentRecord(
        start_index=state.segment_start_index,
        end_index=state.events_seen - 1,
        start_time=events[0].timestamp,
        end_time=events[-1].timestamp,
        duration_s=duration,
        events=list(events),
        winner_class=winner,
        duration_likelihood=likelihood,
        final_label=final,
        posterior=posterior,
        end_reason=end_reason,
    )
    state.mode = IDLE
    state.ring_buffer.clear()
    state.class_filters = {}
    state.log_posterior = None
    state.segment_events = []
    state.segment_start_index = -1
    return record


def process_event(
    model: ActivityModel,
    state: StreamState,
    event: SensorEvent,
) -> tuple[StreamState, Prediction, SegmentRecord | None]:
    """Advance the recognizer by one event.

    Mutates and returns ``state``; emits one :class:`Prediction`, plus a
    :class:`SegmentRecord` when this event closed a segment.
    """
    _require_thresholds(model.config)
    config = model.config
    n = config.n_preceding
    names = model.classes.names
    obs = model.vocabulary.encode_event(event)
    index = state.events_seen
    state.events_seen += 1

    state.ring_buffer.append((obs, event))
    if len(state.ring_buffer) > n:
        state.ring_buffer.pop(0)
    context = [o for o, _ in state.ring_buffer]

    record: SegmentRecord | None = None
    if state.mode == IDLE:
        fired = False
        if len(context) == n:
            _, fired = detect_begin(model, context)
        if not fired:
            prediction = Prediction(index, event.timestamp, IDLE, "none", None)
            return state, prediction, None
        # Onset: replay the buffered context into every class filter so the
        # boundary events belong to the segment.
        state.mode = ACTIVE
        state.segment_events = [e for _, e in state.ring_buffer]
        state.segment_start_index = index - n + 1
        filters: dict[str, FilterState] = {}
        for name in names:
            f = forward_init(model.activity_hmms[name], context[0])
            for y in context[1:]:
                f = forward_step(model.activity_hmms[name], f, y)
            filters[name] = f
        state.class_filters = filters
    else:
        state.segment_events.append(event)
        for name in names:
            state.class_filters[name] = forward_step(
                model.activity_hmms[name], state.class_filters[name], obs
            )

    posterior = _posterior_from_filters(model, state)
    with np.errstate(divide="ignore"):
        state.log_posterior = np.log(posterior)
    top = names[int(posterior.argmax())]
    prediction = Prediction(index, event.timestamp, ACTIVE, top, posterior)

    # End detection is skipped on the event that opened the segment.
    if len(state.segment_events) > n:
        _, fired = detect_end(model, context, top)
        duration = (event.timestamp - state.segment_events[0].timestamp).total_seconds()
        if fired:
            record = _finalize(model, state, END_REASON_PATTERN)
        elif duration > config.max_segment_s:
            record = _finalize(model, state, END_REASON_TIMEOUT)
    return state, prediction, record


def finalize_open_segment(model: ActivityModel, state: StreamState) -> SegmentRecord | None:
    """Close the in-progress segment at stream end, if any (flagged "eof")."""
    if state.mode != ACTIVE:
        return None
    return _finalize(model, state, END_REASON_EOF)


# ---------------------------------------------------------------------------
# Whole-stream fast path
# ---------------------------------------------------------------------------


@njit(cache=True)
def _context_loglik(pi, a, b, ring, n):  # pragma: no cover - compiled
    """Scaled-forward log-likelihood of the n buffered observations."""
    k_states = pi.shape[0]
    bel = np.empty(k_states)
    tmp = np.empty(k_states)
    s = 0.0
    y = ring[0]
    for k in range(k_states):
        bel[k] = pi[k] * b[k, y]
        s += bel[k]
    if s <= 0.0:
        return -np.inf
    ll = np.log(s)
    for k in range(k_states):
        bel[k] /= s
    for t in range(1, n):
        y = ring[t]
        s = 0.0
        for k in range(k_states):
            acc = 0.0
            for i in range(k_states):
                acc += bel[i] * a[i, k]
            tmp[k] = acc * b[k, y]
            s += tmp[k]
        if s <= 0.0:
            return -np.inf
        ll += np.log(s)
        for k in range(k_states):
            bel[k] = tmp[k] / s
    return ll


@njit(cache=True)
def _stream_kernel(  # pragma: no cover - compiled
    obs,
    tsec,
    n_pre,
    begin_thr,
    end_thr,
    max_seg_s,
    log_prior,
    begin_pi,
    begin_a,
    begin_b,
    act_pi,
    act_a,
    act_b,
    end_pi,
    end_a,
    end_b,
    store_posts,
    modes,
    tops,
    posts,
    seg_start,
    seg_end,
    seg_winner,
    seg_reason,
    seg_post,
):
    n_events = obs.shape[0]
    n_classes = log_prior.shape[0]
    k_states = act_pi.shape[1]

    ring = np.empty(n_pre, dtype=np.int64)
    fill = 0
    bel = np.empty((n_classes, k_states))
    tmp = np.empty(k_states)
    evid = np.empty(n_classes)
    post = np.empty(n_classes)

    active = False
    seg_begin_idx = -1
    seg_t0 = 0.0
    n_segs = 0
    top = -1

    for idx in range(n_events):
        y = obs[idx]
        if fill < n_pre:
            ring[fill] = y
            fill += 1
        else:
            for j in range(n_pre - 1):
                ring[j] = ring[j + 1]
            ring[n_pre - 1] = y

        if not active:
            modes[idx] = 0
            tops[idx] = -1
            if fill < n_pre:
                continue
            best = -np.inf
            for c in range(n_classes):
                sc = _context_loglik(begin_pi[c], begin_a[c], begin_b[c], ring, n_pre) / n_pre
                sc += log_prior[c]
                if sc > best:
                    best = sc
            if best < begin_thr:
                continue
            # Seed every class filter with the buffered context.
            for c in range(n_classes):
                s = 0.0
                y0 = ring[0]
                for k in range(k_states):
                    bel[c, k] = act_pi[c, k] * act_b[c, k, y0]
                    s += bel[c, k]
                if s <= 0.0:
                    return n_segs, -1
                evid[c] = np.log(s)
                for k in range(k_states):
                    bel[c, k] /= s
                for t in range(1, n_pre):
                    yt = ring[t]
                    s = 0.0
                    for k in range(k_states):
                        acc = 0.0
                        for i in range(k_states):
                            acc += bel[c, i] * act_a[c, i, k]
                        tmp[k] = acc * act_b[c, k, yt]
                        s += tmp[k]
                    if s <= 0.0:
                        return n_segs, -1
                    evid[c] += np.log(s)
                    for k in range(k_states):
                        bel[c, k] = tmp[k] / s
            active = True
            seg_begin_idx = idx - n_pre + 1
            seg_t0 = tsec[seg_begin_idx]
        else:
            # One filter step per class.
            for c in range(n_classes):
                s = 0.0
                for k in range(k_states):
                    acc = 0.0
                    for i in range(k_states):
                        acc += bel[c, i] * act_a[c, i, k]
                    tmp[k] = acc * act_b[c, k, y]
                    s += tmp[k]
                if s <= 0.0:
                    return n_segs, -1
                evid[c] += np.log(s)
                for k in range(k_states):
                    bel[c, k] = tmp[k] / s

        # Posterior over classes: prior x evidence, normalized.
        peak = -np.inf
        for c in range(n_classes):
            v = log_prior[c] + evid[c]
            if v > peak:
                peak = v
        z = 0.0
        for c in range(n_classes):
            post[c] = np.exp(log_prior[c] + evid[c] - peak)
            z += post[c]
        top = 0
        for c in range(n_classes):
            post[c] /= z
            if post[c] > post[top]:
                top = c
        modes[idx] = 1
        tops[idx] = top
        if store_posts:
            for c in range(n_classes):
                posts[idx, c] = post[c]

        # End detection is skipped on the event that opened the segment.
        if idx > seg_begin_idx + n_pre - 1:
            sc = _context_loglik(end_pi[top], end_a[top], end_b[top], ring, n_pre) / n_pre
            reason = 0
            if sc >= end_thr:
                reason = 1
            elif tsec[idx] - seg_t0 > max_seg_s:
                reason = 2
            if reason > 0:
                seg_start[n_segs] = seg_begin_idx
                seg_end[n_segs] = idx
                seg_winner[n_segs] = top
                seg_reason[n_segs] = reason
                for c in range(n_classes):
                    seg_post[n_segs, c] = post[c]
                n_segs += 1
                active = False
                fill = 0
                seg_begin_idx = -1

    if active:
        seg_start[n_segs] = seg_begin_idx
        seg_end[n_segs] = n_events - 1
        seg_winner[n_segs] = top
        seg_reason[n_segs] = 3
        for c in range(n_classes):
            seg_post[n_segs, c] = post[c]
        n_segs += 1
    return n_segs, 0


_TABLE_CACHE: "weakref.WeakKeyDictionary[ActivityModel, dict]" = weakref.WeakKeyDictionary()


def _stacked_tables(model: ActivityModel) -> dict:
    tables = _TABLE_CACHE.get(model)
    if tables is not None:
        return tables
    names = model.classes.names

    def stack(hmms, attr):
        return np.ascontiguousarray(np.stack([getattr(hmms[n], attr) for n in names]))

    tables = {
        "begin_pi": stack(model.begin_hmms, "initial"),
        "begin_a": stack(model.begin_hmms, "transition"),
        "begin_b": stack(model.begin_hmms, "emission"),
        "act_pi": stack(model.activity_hmms, "initial"),
        "act_a": stack(model.activity_hmms, "transition"),
        "act_b": stack(model.activity_hmms, "emission"),
        "end_pi": stack(model.end_hmms, "initial"),
        "end_a": stack(model.end_hmms, "transition"),
        "end_b": stack(model.end_hmms, "emission"),
        "log_prior": np.ascontiguousarray(model.log_class_prior),
    }
    _TABLE_CACHE[model] = tables
    return tables


def _to_seconds(timestamp: dt.datetime) -> float:
    return (timestamp - _EPOCH).total_seconds()


def run_stream(
    model: ActivityModel,
    events: Sequence[SensorEvent],
    collect_predictions: bool = True,
    finalize_at_end: bool = True,
    use_kernel: bool = True,
    begin_threshold: float | None = None,
    end_threshold: float | None = None,
    alpha: float | None = None,
) -> tuple[list[Prediction], list[SegmentRecord]]:
    """Run the recognizer over a whole stream.

    Emits one prediction per event (unless ``collect_predictions`` is off)
    and one record per finalized segment; an open segment at stream end is
    closed with reason "eof" when ``finalize_at_end``. The keyword overrides
    substitute for the model config's thresholds/alpha without retraining
    (used by calibration and sweeps). Identical model and stream produce
    identical outputs.
    """
    config = model.config
    overridden = (
        begin_threshold is not None or end_threshold is not None or alpha is not None
    )
    if overridden:
        config = replace(
            config,
            begin_threshold=begin_threshold if begin_threshold is not None else config.begin_threshold,
            end_threshold=end_threshold if end_threshold is not None else config.end_threshold,
            alpha=alpha if alpha is not None else config.alpha,
        )
    _require_thresholds(config)
    if not events:
        return [], []
    if not use_kernel:
        run_model = replace(model, config=config) if overridden else model
        return _run_stream_fold(run_model, events, collect_predictions, finalize_at_end)

    names = model.classes.names
    n = config.n_preceding
    n_events = len(events)
    obs = np.empty(n_events, dtype=np.int64)
    tsec = np.empty(n_events, dtype=np.float64)
    encode = model.vocabulary.encode_event
    for i, event in enumerate(events):
        obs[i] = encode(event)
        tsec[i] = _to_seconds(event.timestamp)

    tables = _stacked_tables(model)
    modes = np.zeros(n_events, dtype=np.uint8)
    tops = np.full(n_events, -1, dtype=np.int32)
    posts = np.zeros((n_events if collect_predictions else 1, len(names)), dtype=np.float64)
    max_segs = n_events // (n + 1) + 2
    seg_start = np.zeros(max_segs, dtype=np.int64)
    seg_end = np.zeros(max_segs, dtype=np.int64)
    seg_winner = np.zeros(max_segs, dtype=np.int32)
    seg_reason = np.zeros(max_segs, dtype=np.int8)
    seg_post = np.zeros((max_segs, len(names)), dtype=np.float64)

    n_segs, status = _stream_kernel(
        obs,
        tsec,
        n,
        config.begin_threshold,
        config.end_threshold,
        config.max_segment_s,
        tables["log_prior"],
        tables["begin_pi"],
        tables["begin_a"],
        tables["begin_b"],
        tables["act_pi"],
        tables["act_a"],
        tables["act_b"],
        tables["end_pi"],
        tables["end_a"],
        tables["end_b"],
        collect_predictions,
        modes,
        tops,
        posts,
        seg_start,
        seg_end,
        seg_winner,
        seg_reason,
        seg_post,
    )
    if status != 0:
        raise ZeroLikelihoodError("a class filter assigned zero likelihood to an observation")

    predictions: list[Prediction] = []
    if collect_predictions:
        for i, event in enumerate(events):
            if modes[i]:
                predictions.append(
                    Prediction(i, event.timestamp, ACTIVE, names[tops[i]], posts[i])
                )
            else:
                predictions.append(Prediction(i, event.timestamp, IDLE, "none", None))

    records: list[SegmentRecord] = []
    for s in range(n_segs):
        reason = _REASON_NAMES[int(seg_reason[s])]
        if reason == END_REASON_EOF and not finalize_at_end:
            continue
        i0, i1 = int(seg_start[s]), int(seg_end[s])
        winner = names[int(seg_winner[s])]
        seg_events = list(events[i0 : i1 + 1])
        duration = (seg_events[-1].timestamp - seg_events[0].timestamp).total_seconds()
        likelihood = model.durations[winner].likelihood(duration)
        final = winner if likelihood >= config.alpha else OTHER_CLASS
        records.append(
            SegmentRecord(
                start_index=i0,
                end_index=i1,
                start_time=seg_events[0].timestamp,
                end_time=seg_events[-1].timestamp,
                duration_s=duration,
                events=seg_events,
                winner_class=winner,
                duration_likelihood=likelihood,
                final_label=final,
                posterior=seg_post[s].copy(),
                end_reason=reason,
            )
        )
    return predictions, records


def _run_stream_fold(
    model: ActivityModel,
    events: Iterable[SensorEvent],
    collect_predictions: bool,
    finalize_at_end: bool,
) -> tuple[list[Prediction], list[SegmentRecord]]:
    state = new_stream_state(model)
    predictions: list[Prediction] = []
    records: list[SegmentRecord] = []
    for event in events:
        state, prediction, record = process_event(model, state, event)
        if collect_predictions:
            predictions.append(prediction)
        if record is not None:
            records.append(record)
    if finalize_at_end:
        record = finalize_open_segment(model, state)
        if record is not None:
            records.append(record)
    return predictions, records
