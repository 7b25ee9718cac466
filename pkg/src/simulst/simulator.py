"""Streaming session driver: deliver source in chunks, decode, let the policy commit.

Each timestep reads one chunk of source frames, re-encodes the delivered
prefix, greedily extends the committed hypothesis, and hands the candidate
tokens (with their aggregated cross-attention) to the decision policy.
Committed output is append-only. When the source is exhausted the final
hypothesis is committed unconditionally.

Every event carries two timestamps: ``ideal_s``, the seconds of source audio
delivered when the tokens were committed, and ``wall_s``, the session clock
reading. The simulated clock advances to each chunk's arrival time and adds a
declared compute cost per adapter call, so wall_s >= ideal_s always holds and
runs are deterministic. The real clock reads elapsed monotonic time instead.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .attention import aggregate_attention, compute_alignment
from .features import FeatureMatrix
from .model import DEFAULT_MAX_NEW, ModelAdapter
from .policies import Policy, PolicyDecision, StepContext, StopReason

__all__ = [
    "Clock",
    "SimulatedClock",
    "RealClock",
    "Emission",
    "EmissionLog",
    "SessionError",
    "StreamCursor",
    "run_session",
    "write_emission_log",
    "read_emission_log",
]


@runtime_checkable
class Clock(Protocol):
    """Session time source. ``now`` is monotone non-decreasing."""

    def now(self) -> float:
        """Current session time in seconds."""

    def charge(self, seconds: float) -> None:
        """Account for compute work taking ``seconds``."""

    def advance_to(self, floor_s: float) -> None:
        """Audio up to ``floor_s`` has arrived; time cannot be earlier."""


class SimulatedClock:
    """Deterministic clock: arrival floors plus declared compute costs."""

    def __init__(self) -> None:
        self._t = 0.0

    def now(self) -> float:
        return self._t

    def charge(self, seconds: float) -> None:
        if seconds < 0:
            raise ValueError(f"compute cost must be >= 0, got {seconds}")
        self._t += seconds

    def advance_to(self, floor_s: float) -> None:
        self._t = max(self._t, floor_s)


class RealClock:
    """Wall-time clock; compute cost is whatever actually elapses."""

    def __init__(self) -> None:
        self._t0 = time.monotonic()
        self._floor = 0.0

    def now(self) -> float:
        return max(time.monotonic() - self._t0, self._floor)

    def charge(self, seconds: float) -> None:
        pass

    def advance_to(self, floor_s: float) -> None:
        self._floor = max(self._floor, floor_s)


@dataclass(frozen=True)
class Emission:
    """One committed token with its surface piece and both delays."""

    token: int
    text: str
    ideal_s: float
    wall_s: float


@dataclass(frozen=True)
class EmissionLog:
    """Ordered committed tokens of one session plus source duration."""

    events: tuple[Emission, ...]
    source_duration_s: float
    final_text: str

    @property
    def tokens(self) -> tuple[int, ...]:
        return tuple(event.token for event in self.events)


class SessionError(RuntimeError):
    """Adapter failure mid-session; carries the log of commits made so far."""

    def __init__(self, message: str, partial_log: EmissionLog):
        super().__init__(message)
        self.partial_log = partial_log


class StreamCursor:
    """Delivers a FeatureMatrix as a growing prefix, one chunk per read."""

    def __init__(self, source: FeatureMatrix, chunk_ms: float):
        if source.num_frames < 1:
            raise ValueError("source has no frames")
        if chunk_ms < source.frame_shift_ms:
            raise ValueError(
                f"chunk_ms={chunk_ms} is below the frame shift ({source.frame_shift_ms} ms)"
            )
        self._source = source
        self.chunk_frames = max(1, round(chunk_ms / source.frame_shift_ms))
        self.position = 0

    @property
    def exhausted(self) -> bool:
        return self.position >= self._source.num_frames

    @property
    def delivered_s(self) -> float:
        """Seconds of audio delivered so far."""
        return self.position * self._source.frame_shift_ms / 1000.0

    def read(self) -> np.ndarray:
        """Advance by one chunk (clamped at the end) and return the full prefix."""
        if self.exhausted:
            raise ValueError("stream already exhausted")
        self.position = min(self.position + self.chunk_frames, self._source.num_frames)
        return self._source.frames[: self.position]


def _resolve_layer(adapter: ModelAdapter, attention_layer: int | None) -> int:
    num_layers = adapter.num_decoder_layers
    if attention_layer is None:
        # Match the convention of reading a mid-stack layer (index 3 when deep
        # enough); shallow toy decoders fall back to their last layer.
        return min(3, num_layers - 1)
    if not 0 <= attention_layer < num_layers:
        raise ValueError(
            f"attention_layer={attention_layer} out of range for {num_layers} decoder layers"
        )
    return attention_layer


def run_session(
    source: FeatureMatrix,
    adapter: ModelAdapter,
    policy: Policy,
    *,
    chunk_ms: float = 1000.0,
    clock: Clock | None = None,
    attention_layer: int | None = None,
    step_cost_s: float = 0.0,
    max_new: int = DEFAULT_MAX_NEW,
) -> EmissionLog:
    """Run one streaming session and return its emission log.

    Args:
        source: full utterance features; delivered incrementally.
        adapter: incremental encoder-decoder bridge.
        policy: decision policy; its state is reset at session start.
        chunk_ms: source milliseconds delivered per read step.
        clock: session time source; default is a fresh SimulatedClock.
        attention_layer: decoder layer whose head-mean feeds the policy;
            None selects layer 3 or the last layer if the stack is shallower.
        step_cost_s: simulated compute seconds charged per adapter call
            (encode and decode each); ignored by the real clock.
        max_new: candidate-length cap per decode step.

    Raises:
        SessionError: the adapter failed mid-run; the exception carries the
            partial log of everything committed before the failure.
    """
    if clock is None:
        clock = SimulatedClock()
    layer = _resolve_layer(adapter, attention_layer)
    vocab = adapter.vocab
    cursor = StreamCursor(source, chunk_ms)
    policy.reset()

    committed: list[int] = []
    events: list[Emission] = []
    detected_words = 0

    def partial() -> EmissionLog:
        return EmissionLog(
            events=tuple(events),
            source_duration_s=source.duration_s,
            final_text=vocab.detokenize(committed),
        )

    def commit(tokens: list[int], ideal_s: float) -> None:
        wall_s = clock.now()
        for token in tokens:
            events.append(
                Emission(token=token, text=vocab.piece(token), ideal_s=ideal_s, wall_s=wall_s)
            )
            committed.append(token)

    while not cursor.exhausted:
        prefix = cursor.read()
        ideal_s = cursor.delivered_s
        clock.advance_to(ideal_s)
        try:
            states = adapter.encode(prefix)
            clock.charge(step_cost_s)
            result = adapter.decode_greedy(states, forced_prefix=committed, max_new=max_new)
            clock.charge(step_cost_s)
        except Exception as exc:
            raise SessionError(f"adapter failed at {ideal_s:.3f}s: {exc}", partial()) from exc

        candidates = list(result.tokens[len(committed):])
        if cursor.exhausted:
            # Final flush: the full source has been seen, so the remaining
            # greedy hypothesis is committed without consulting the policy.
            commit(candidates, ideal_s)
            break

        if policy.uses_word_counts:
            # Word detections only ratchet upward so the schedule never
            # retracts budget already granted.
            detected_words = max(detected_words, adapter.count_source_words(prefix))

        if candidates:
            weights = aggregate_attention(result.attention, layer)[len(committed):, :]
            alignment = compute_alignment(weights)
        else:
            weights = np.zeros((0, states.n))
            alignment = np.zeros(0, dtype=int)
        context = StepContext(
            candidates=tuple(candidates),
            attention=weights,
            alignment=alignment,
            n_frames=states.n,
            source_words=detected_words,
            committed=tuple(committed),
            hypothesis=tuple(result.tokens),
            eos_reached=result.eos_reached,
            vocab=vocab,
        )
        decision: PolicyDecision = policy.decide(context)
        if decision.commit_count > len(candidates):
            raise SessionError(
                f"policy committed {decision.commit_count} of {len(candidates)} candidates",
                partial(),
            )
        commit(candidates[: decision.commit_count], ideal_s)

    return partial()


# ------------------------------------------------------------------ JSONL I/O

def write_emission_log(path, log: EmissionLog) -> None:
    """One JSON event per line, then a summary record."""
    lines = [
        json.dumps(
            {"token": e.token, "text": e.text, "ideal_s": e.ideal_s, "wall_s": e.wall_s},
            ensure_ascii=False,
        )
        for e in log.events
    ]
    lines.append(
        json.dumps(
            {"source_duration_s": log.source_duration_s, "final_text": log.final_text},
            ensure_ascii=False,
        )
    )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_emission_log(path) -> EmissionLog:
    lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty emission log")
    summary = json.loads(lines[-1])
    if "source_duration_s" not in summary or "final_text" not in summary:
        raise ValueError(f"{path}: missing trailing summary record")
    events = []
    for line in lines[:-1]:
        record = json.loads(line)
        events.append(
            Emission(
                token=int(record["token"]),
                text=record["text"],
                ideal_s=float(record["ideal_s"]),
                wall_s=float(record["wall_s"]),
            )
        )
    return EmissionLog(
        events=tuple(events),
        source_duration_s=float(summary["source_duration_s"]),
        final_text=summary["final_text"],
    )
