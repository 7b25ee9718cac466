"""Streaming emission policies behind one decision contract.

Four policies decide, at every timestep, how many of the freshly decoded
candidate tokens to commit:

* attention-alignment stop: commit candidates until one aligns with an
  inaccessible frame, i.e. one of the last ``f`` source frames;
* attention-mass threshold: commit candidates while the attention mass on
  the last ``lam`` frames stays below ``alpha``;
* wait-k: lag the detected source words by ``k``, then alternate
  reading and writing one word at a time;
* local agreement: commit the longest common prefix of consecutive
  hypotheses.

The decision functions are pure; the ``Policy`` classes wrap them with the
per-session state (hyperparameters, agreement history) the simulator needs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .vocab import Vocabulary


class StopReason(str, Enum):
    """Why a decision committed fewer tokens than were offered."""

    INACCESSIBLE_FRAME = "inaccessible_frame"
    THRESHOLD = "threshold"
    SCHEDULE = "schedule"
    DISAGREEMENT = "disagreement"
    EXHAUSTED = "exhausted"  # every candidate committed; no rule fired


@dataclass(frozen=True)
class PolicyDecision:
    commit_count: int
    stopped_by: StopReason


@dataclass(frozen=True)
class StepContext:
    """Everything a policy may inspect at one timestep.

    ``attention`` and ``alignment`` cover the candidate rows only (the
    committed prefix is not re-gated); ``hypothesis`` is the full current
    decode (committed + candidates) for agreement-style policies.
    """

    candidates: tuple[int, ...]
    attention: np.ndarray
    alignment: np.ndarray
    n_frames: int
    source_words: int
    committed: tuple[int, ...]
    hypothesis: tuple[int, ...]
    eos_reached: bool
    vocab: Vocabulary


def alignatt_decide(
    alignment: Sequence[int] | np.ndarray,
    n_frames: int,
    f: int,
    num_candidates: int,
) -> PolicyDecision:
    """Commit the longest candidate prefix that avoids the last ``f`` frames.

    A candidate whose most-attended frame falls in the inaccessible band
    {n-f, ..., n-1} stops the emission there. With ``f >= n_frames`` every
    frame is inaccessible and nothing commits (not an error).
    """
    if f < 1:
        raise ValueError("f must be at least 1")
    align = np.asarray(alignment, dtype=np.int64)
    if align.ndim != 1 or align.shape[0] < num_candidates:
        raise ValueError("alignment must cover every candidate")
    if num_candidates == 0:
        return PolicyDecision(0, StopReason.EXHAUSTED)
    head = align[:num_candidates]
    if head.min() < 0 or head.max() >= n_frames:
        raise ValueError("alignment indices must lie in [0, n_frames)")
    band_start = n_frames - f  # may be <= 0: the whole input is inaccessible
    hits = np.nonzero(head >= band_start)[0]
    if hits.size:
        return PolicyDecision(int(hits[0]), StopReason.INACCESSIBLE_FRAME)
    return PolicyDecision(num_candidates, StopReason.EXHAUSTED)


def edatt_decide(
    attention: np.ndarray,
    alpha: float,
    lam: int,
    num_candidates: int,
) -> PolicyDecision:
    """Commit candidates while the attention mass on the last ``lam`` frames is below ``alpha``.

    ``attention`` holds one row per candidate (at least ``num_candidates``
    rows). With ``lam >= n`` the sum covers the whole row, which is
    degenerate but well defined.
    """
    if lam < 1:
        raise ValueError("lam must be at least 1")
    if alpha <= 0.0:
        raise ValueError("alpha must be positive")
    a = np.asarray(attention, dtype=float)
    if a.ndim != 2 or a.shape[0] < num_candidates:
        raise ValueError("attention must have one row per candidate")
    if num_candidates == 0:
        return PolicyDecision(0, StopReason.EXHAUSTED)
    n = a.shape[1]
    recent = a[:num_candidates, max(0, n - lam):].sum(axis=1)
    hits = np.nonzero(recent >= alpha)[0]
    if hits.size:
        return PolicyDecision(int(hits[0]), StopReason.THRESHOLD)
    return PolicyDecision(num_candidates, StopReason.EXHAUSTED)


def waitk_allowed(k: int, source_words_detected: int, target_words_emitted: int) -> int:
    """Words the wait-k schedule currently allows: max(0, detected - k + 1 - emitted)."""
    if k < 1:
        raise ValueError("k must be at least 1")
    return max(0, source_words_detected - k + 1 - target_words_emitted)


def longest_common_prefix(a: Sequence[int], b: Sequence[int]) -> int:
    length = 0
    for x, y in zip(a, b):
        if x != y:
            break
        length += 1
    return length


def local_agreement_prefix(
    previous: Optional[Sequence[int]],
    current: Sequence[int],
    committed: int,
) -> PolicyDecision:
    """Commit the part of the hypotheses' longest common prefix not yet emitted.

    With no previous hypothesis nothing can agree and nothing commits.
    """
    if previous is None:
        return PolicyDecision(0, StopReason.DISAGREEMENT)
    lcp = longest_common_prefix(previous, current)
    commit = max(0, lcp - committed)
    if lcp < len(current):
        return PolicyDecision(commit, StopReason.DISAGREEMENT)
    return PolicyDecision(commit, StopReason.EXHAUSTED)


class Policy:
    """Per-session decision policy; hyperparameters are fixed for the session."""

    name: str = "base"
    uses_word_counts: bool = False

    def reset(self) -> None:
        """Clear any per-session state before a new run."""

    def decide(self, ctx: StepContext) -> PolicyDecision:
        raise NotImplementedError


class AlignAttPolicy(Policy):
    name = "alignatt"

    def __init__(self, f: int):
        if f < 1:
            raise ValueError("f must be at least 1")
        self.f = f

    def decide(self, ctx: StepContext) -> PolicyDecision:
        return alignatt_decide(ctx.alignment, ctx.n_frames, self.f, len(ctx.candidates))


class EDAttPolicy(Policy):
    name = "edatt"

    def __init__(self, alpha: float, lam: int = 2):
        if not 0.0 < alpha <= 1.0:
            raise ValueError("alpha must lie in (0, 1]")
        if lam < 1:
            raise ValueError("lam must be at least 1")
        self.alpha = alpha
        self.lam = lam

    def decide(self, ctx: StepContext) -> PolicyDecision:
        return edatt_decide(ctx.attention, self.alpha, self.lam, len(ctx.candidates))


class WaitKPolicy(Policy):
    """Word-level wait-k over subword candidates.

    The word budget comes from the detected source word count; a candidate
    word is committed only when complete, i.e. followed in the candidate
    stream by the next word's start or by end-of-sequence. Leading
    continuation pieces extend the last committed word and cost no budget.
    """

    name = "waitk"
    uses_word_counts = True

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = k

    def decide(self, ctx: StepContext) -> PolicyDecision:
        emitted = ctx.vocab.count_words(ctx.committed)
        allowed = waitk_allowed(self.k, ctx.source_words, emitted)
        if not ctx.candidates:
            return PolicyDecision(0, StopReason.EXHAUSTED)

        # segment candidates into words; segment 0 may be a continuation of
        # the previously committed word and consumes no word budget
        starts = [i for i, t in enumerate(ctx.candidates) if ctx.vocab.is_word_start(t)]
        boundaries = ([0] if not starts or starts[0] != 0 else []) + starts
        segments = [
            ctx.candidates[b:e]
            for b, e in zip(boundaries, boundaries[1:] + [len(ctx.candidates)])
        ]
        glue = 0 if (starts and starts[0] == 0) else 1  # segments costing no budget

        commit = 0
        words_taken = 0
        for idx, seg in enumerate(segments):
            complete = idx < len(segments) - 1 or ctx.eos_reached
            if not complete:
                break
            if idx >= glue:
                if words_taken >= allowed:
                    break
                words_taken += 1
            commit += len(seg)
        if commit < len(ctx.candidates):
            return PolicyDecision(commit, StopReason.SCHEDULE)
        return PolicyDecision(commit, StopReason.EXHAUSTED)


class LocalAgreementPolicy(Policy):
    """Commit what the last ``window`` consecutive hypotheses agree on."""

    name = "local_agreement"

    def __init__(self, window: int = 2):
        if window < 2:
            raise ValueError("agreement window must be at least 2")
        self.window = window
        self._history: list[tuple[int, ...]] = []

    def reset(self) -> None:
        self._history = []

    def decide(self, ctx: StepContext) -> PolicyDecision:
        current = ctx.hypothesis
        if len(self._history) < self.window - 1:
            decision = PolicyDecision(0, StopReason.DISAGREEMENT)
        elif self.window == 2:
            decision = local_agreement_prefix(self._history[-1], current, len(ctx.committed))
        else:
            lcp = min(longest_common_prefix(h, current) for h in self._history)
            commit = max(0, lcp - len(ctx.committed))
            reason = StopReason.DISAGREEMENT if lcp < len(current) else StopReason.EXHAUSTED
            decision = PolicyDecision(commit, reason)
        self._history.append(tuple(current))
        self._history = self._history[-(self.window - 1):]
        return decision
