"""Incremental encoder-decoder contract plus a small deterministic toy model.

The contract (``ModelAdapter``) is what the simulator drives: encode the
source features delivered so far, greedily decode a continuation of the
committed prefix while capturing every layer/head of cross-attention, and
count source words from a CTC-style frame posterior. Implementations must be
deterministic: identical inputs give identical outputs.

``ToyModel`` is a fixed-seed stand-in for a trained system: a mean-pool +
linear front-end that shrinks the input by 4x, a pre-norm transformer decoder
with configurable layers/heads, and a per-frame label head for word counting.
It exists to exercise every interface at negligible cost, not to translate.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

from .vocab import Vocabulary, build_default_vocabulary

DEFAULT_MAX_NEW = 128
_RMS_EPS = 1e-6

# Toy-decoder output shaping. Untrained random weights fixed-point into
# repetition under greedy decoding, so the logits carry a penalty on the two
# preceding tokens and an end-of-sequence drive that grows with the
# output/source length ratio. Both are part of the model definition and
# apply identically in full and incremental passes.
_REPEAT_PENALTY = 12.0
_REPEAT_WINDOW = 2
_EOS_SLOPE = 0.75
_EOS_LENGTH_RATIO = 0.2
_CROSS_GAIN = 1.5


@dataclass(frozen=True)
class EncoderStates:
    """Encoder output over the source delivered so far.

    ``version`` stamps the raw-frame count the states were computed from, so
    successive re-encodes of a growing stream are ordered.
    """

    states: np.ndarray  # (n, d_model)
    version: int

    @property
    def n(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class DecodeResult:
    """One greedy decode pass from a forced prefix.

    ``tokens`` is the full output (prefix + continuation, never containing
    end-of-sequence); ``attention`` is the (layers, heads, len(tokens), n)
    cross-attention captured at each generated position.
    """

    tokens: tuple[int, ...]
    attention: np.ndarray
    eos_reached: bool


@runtime_checkable
class ModelAdapter(Protocol):
    """What the simulator requires of a model.

    Adapters are immutable after construction and safe to share across
    concurrent sessions; any scratch state lives inside a single call.
    External bridges (e.g. a subprocess wrapping a trained model) satisfy
    this protocol by mapping their outputs onto ``EncoderStates`` /
    ``DecodeResult``.
    """

    num_decoder_layers: int
    num_heads: int
    vocab: Vocabulary

    def encode(self, raw_features: np.ndarray) -> EncoderStates: ...

    def decode_greedy(
        self, enc: EncoderStates, forced_prefix: Sequence[int], max_new: int = DEFAULT_MAX_NEW
    ) -> DecodeResult: ...

    def count_source_words(self, raw_features: np.ndarray) -> int: ...


def _rms_norm(x: np.ndarray) -> np.ndarray:
    return x / np.sqrt((x * x).mean(axis=-1, keepdims=True) + _RMS_EPS)


def _softmax(x: np.ndarray) -> np.ndarray:
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class ToyModelConfig:
    d_model: int = 32
    num_decoder_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 64
    feature_dim: int = 80
    reduction: int = 4
    num_ctc_labels: int = 8  # label 0 = blank, label 1 = word boundary
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d_model % self.num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        if self.num_ctc_labels < 3:
            raise ValueError("need blank, boundary and at least one content label")


class ToyModel:
    """Fixed-seed encoder-decoder exercising the full adapter contract."""

    def __init__(self, config: ToyModelConfig = ToyModelConfig(), vocab: Optional[Vocabulary] = None):
        self.config = config
        self.vocab = vocab if vocab is not None else build_default_vocabulary()
        self.num_decoder_layers = config.num_decoder_layers
        self.num_heads = config.num_heads
        self._head_dim = config.d_model // config.num_heads

        rng = np.random.default_rng(config.seed)
        d, v = config.d_model, self.vocab.size

        def mat(rows: int, cols: int) -> np.ndarray:
            return rng.normal(0.0, 1.0 / np.sqrt(cols), size=(rows, cols))

        self._w_in = mat(config.feature_dim, d)
        self._b_in = rng.normal(0.0, 0.1, size=d)
        self._w_mix = mat(d, d)
        self._b_mix = rng.normal(0.0, 0.1, size=d)
        self._embed = rng.normal(0.0, 1.0, size=(v, d))
        self._layers = [
            {
                name: mat(d, d)
                for name in ("sq", "sk", "sv", "so", "cq", "ck", "cv", "co")
            }
            | {
                "f1": mat(d, config.ffn_dim),
                "f2": mat(config.ffn_dim, d),
                "bf1": rng.normal(0.0, 0.1, size=config.ffn_dim),
                "bf2": rng.normal(0.0, 0.1, size=d),
            }
            for _ in range(config.num_decoder_layers)
        ]
        self._w_ctc = mat(d, config.num_ctc_labels)
        self._b_ctc = rng.normal(0.0, 0.5, size=config.num_ctc_labels)
        self._pos_cache = self._positions(512)
        # the toy decoder never generates <s> or <unk>
        self._logit_mask = np.zeros(v)
        self._logit_mask[[self.vocab.bos_id, self.vocab.unk_id]] = -np.inf

    def _positions(self, length: int) -> np.ndarray:
        d = self.config.d_model
        pos = np.arange(length)[:, None]
        dim = np.arange(d)[None, :]
        angle = pos / np.power(10000.0, (2 * (dim // 2)) / d)
        enc = np.where(dim % 2 == 0, np.sin(angle), np.cos(angle))
        return enc

    def _pos(self, length: int) -> np.ndarray:
        if length > self._pos_cache.shape[0]:
            self._pos_cache = self._positions(2 * length)
        return self._pos_cache[:length]

    # ------------------------------------------------------------------ encoder

    def encode(self, raw_features: np.ndarray) -> EncoderStates:
        """Mean-pool the features by the reduction factor, then map and mix.

        n = ceil(T / reduction); each state depends only on its own pool
        group and position, so earlier states are stable as the stream grows.
        """
        feats = np.asarray(raw_features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError("raw features must be a non-empty (T, F) matrix")
        if feats.shape[1] != self.config.feature_dim:
            raise ValueError(
                f"expected {self.config.feature_dim} feature dims, got {feats.shape[1]}"
            )
        r = self.config.reduction
        t = feats.shape[0]
        n = -(-t // r)
        pooled = np.stack([feats[i * r: (i + 1) * r].mean(axis=0) for i in range(n)])
        x = pooled @ self._w_in + self._b_in + self._pos(n)
        states = np.tanh(x) @ self._w_mix + self._b_mix
        return EncoderStates(states=states, version=t)

    # ------------------------------------------------------------------ decoder

    def _attend(self, q: np.ndarray, k: np.ndarray, v: np.ndarray, causal: bool):
        """Multi-head attention; q is (m, d), k/v are (s, d). Returns (out, weights(H, m, s))."""
        h, hd = self.num_heads, self._head_dim
        m, s = q.shape[0], k.shape[0]
        qh = q.reshape(m, h, hd).transpose(1, 0, 2)
        kh = k.reshape(s, h, hd).transpose(1, 0, 2)
        vh = v.reshape(s, h, hd).transpose(1, 0, 2)
        scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(hd)
        if causal:
            mask = np.triu(np.full((m, s), -np.inf), k=s - m + 1)
            scores = scores + mask
        weights = _softmax(scores)
        out = (weights @ vh).transpose(1, 0, 2).reshape(m, h * hd)
        return out, weights

    def _logits(self, x: np.ndarray, prev_ids, positions, n_frames: int) -> np.ndarray:
        """Next-token logits per query row.

        ``prev_ids[i]`` holds the (up to) _REPEAT_WINDOW token ids preceding
        row i's prediction; ``positions[i]`` is its 0-based output position.
        """
        logits = _rms_norm(x) @ self._embed.T + self._logit_mask
        for row, recent in enumerate(prev_ids):
            logits[row, list(recent)] -= _REPEAT_PENALTY
        drive = _EOS_SLOPE * (np.asarray(positions, dtype=float) - _EOS_LENGTH_RATIO * n_frames)
        logits[:, self.vocab.eos_id] += drive
        return logits

    @staticmethod
    def _recent_window(ids: Sequence[int], end: int) -> tuple[int, ...]:
        """The last _REPEAT_WINDOW ids of ids[:end], bos included."""
        return tuple(ids[max(0, end - _REPEAT_WINDOW): end])

    def _forward(self, ids: Sequence[int], enc: np.ndarray):
        """Full teacher-forced pass. Returns (logits (m, V), cross (L, H, m, n))."""
        x = self._embed[np.asarray(ids, dtype=np.int64)] + self._pos(len(ids))
        cross_layers = []
        for layer in self._layers:
            y = _rms_norm(x)
            attn, _ = self._attend(y @ layer["sq"], y @ layer["sk"], y @ layer["sv"], causal=True)
            x = x + attn @ layer["so"]
            y = _rms_norm(x)
            attn, weights = self._attend(y @ layer["cq"], enc @ layer["ck"], enc @ layer["cv"], causal=False)
            cross_layers.append(weights)
            x = x + _CROSS_GAIN * (attn @ layer["co"])
            y = _rms_norm(x)
            x = x + (np.tanh(y @ layer["f1"] + layer["bf1"]) @ layer["f2"] + layer["bf2"])
        recent = [self._recent_window(ids, i + 1) for i in range(len(ids))]
        logits = self._logits(x, recent, np.arange(len(ids)), enc.shape[0])
        return logits, np.stack(cross_layers)

    def decode_greedy(
        self,
        enc: EncoderStates,
        forced_prefix: Sequence[int],
        max_new: int = DEFAULT_MAX_NEW,
    ) -> DecodeResult:
        """Greedily extend the forced prefix by up to ``max_new`` tokens.

        Generation stops at end-of-sequence (never included in the output).
        The returned attention covers every output position: row i is the
        cross-attention of the pass that generated token i, which
        teacher-forcing reproduces exactly for forced positions.
        """
        if max_new < 1:
            raise ValueError("max_new must be at least 1")
        prefix = list(forced_prefix)
        if self.vocab.eos_id in prefix:
            raise ValueError("forced prefix must not contain end-of-sequence")
        for t in prefix:
            if not 0 <= t < self.vocab.size:
                raise ValueError(f"forced prefix contains unknown token id {t}")

        ids = [self.vocab.bos_id] + prefix
        eos_reached = False
        new_count = 0
        state = self._start_incremental(ids, enc.states)
        while new_count < max_new:
            next_id = int(np.argmax(state["logits"]))
            if next_id == self.vocab.eos_id:
                eos_reached = True
                break
            ids.append(next_id)
            new_count += 1
            self._step_incremental(state, next_id, enc.states)
        tokens = tuple(ids[1:])
        _, cross = self._forward(ids, enc.states)
        return DecodeResult(tokens=tokens, attention=cross[:, :, : len(tokens), :], eos_reached=eos_reached)

    # Incremental stepping keeps per-layer self-attention K/V and the
    # encoder-side projections cached inside one decode call; the math is
    # identical to _forward (verified in tests).

    def _start_incremental(self, ids: list[int], enc: np.ndarray) -> dict:
        state: dict = {
            "self_kv": [],
            "cross_kv": [(enc @ l["ck"], enc @ l["cv"]) for l in self._layers],
            "length": 0,
        }
        x = self._embed[np.asarray(ids, dtype=np.int64)] + self._pos(len(ids))
        for li, layer in enumerate(self._layers):
            y = _rms_norm(x)
            k, v = y @ layer["sk"], y @ layer["sv"]
            state["self_kv"].append([k, v])
            attn, _ = self._attend(y @ layer["sq"], k, v, causal=True)
            x = x + attn @ layer["so"]
            y = _rms_norm(x)
            ck, cv = state["cross_kv"][li]
            attn, _ = self._attend(y @ layer["cq"], ck, cv, causal=False)
            x = x + _CROSS_GAIN * (attn @ layer["co"])
            y = _rms_norm(x)
            x = x + (np.tanh(y @ layer["f1"] + layer["bf1"]) @ layer["f2"] + layer["bf2"])
        state["length"] = len(ids)
        state["recent"] = self._recent_window(ids, len(ids))
        state["logits"] = self._logits(x[-1:], [state["recent"]], [len(ids) - 1], enc.shape[0])
        return state

    def _step_incremental(self, state: dict, token_id: int, enc: np.ndarray) -> None:
        pos = state["length"]
        x = self._embed[token_id][None, :] + self._pos(pos + 1)[pos:]
        for li, layer in enumerate(self._layers):
            y = _rms_norm(x)
            k_new, v_new = y @ layer["sk"], y @ layer["sv"]
            kv = state["self_kv"][li]
            kv[0] = np.vstack([kv[0], k_new])
            kv[1] = np.vstack([kv[1], v_new])
            attn, _ = self._attend(y @ layer["sq"], kv[0], kv[1], causal=False)
            x = x + attn @ layer["so"]
            y = _rms_norm(x)
            ck, cv = state["cross_kv"][li]
            attn, _ = self._attend(y @ layer["cq"], ck, cv, causal=False)
            x = x + _CROSS_GAIN * (attn @ layer["co"])
            y = _rms_norm(x)
            x = x + (np.tanh(y @ layer["f1"] + layer["bf1"]) @ layer["f2"] + layer["bf2"])
        state["length"] = pos + 1
        state["recent"] = (state["recent"] + (token_id,))[-_REPEAT_WINDOW:]
        state["logits"] = self._logits(x, [state["recent"]], [pos], enc.shape[0])

    # ------------------------------------------------------------------ CTC head

    def frame_labels(self, raw_features: np.ndarray) -> np.ndarray:
        """Greedy per-frame label decisions of the toy CTC head."""
        states = self.encode(raw_features).states
        return np.argmax(states @ self._w_ctc + self._b_ctc, axis=1)

    def count_source_words(self, raw_features: np.ndarray) -> int:
        """Collapse repeats, drop blanks, count word-boundary labels."""
        return count_words_in_labels(self.frame_labels(raw_features))


def count_words_in_labels(labels: Sequence[int], blank: int = 0, boundary: int = 1) -> int:
    """CTC-style word count: collapse repeats, remove blanks, count boundaries."""
    count = 0
    previous: Optional[int] = None
    for label in labels:
        if label != previous and label == boundary:
            count += 1
        previous = label
    return count


class ScriptedAdapter:
    """Adapter whose hypotheses and alignments are scripted per frame count.

    The script maps the encoder length n to a step: the full hypothesis at
    that point, one aligned source frame per token (rows become one-hot at
    that frame across every layer and head), whether the hypothesis ended
    with end-of-sequence, and optionally the detected source word count.
    Useful for driving the simulator down exact decision paths; also the
    reference example of a non-toy ``ModelAdapter``.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        script: Callable[[int], "ScriptStep"] | dict[int, "ScriptStep"],
        num_layers: int = 1,
        num_heads: int = 1,
        d_model: int = 8,
        reduction: int = 4,
    ):
        self.vocab = vocab
        self.num_decoder_layers = num_layers
        self.num_heads = num_heads
        self._d_model = d_model
        self._reduction = reduction
        if callable(script):
            self._script = script
        else:
            table = dict(script)

            def lookup(n: int) -> ScriptStep:
                if n not in table:
                    raise KeyError(f"no scripted step for n={n}")
                return table[n]

            self._script = lookup

    def encode(self, raw_features: np.ndarray) -> EncoderStates:
        feats = np.asarray(raw_features, dtype=float)
        if feats.ndim != 2 or feats.shape[0] < 1:
            raise ValueError("raw features must be a non-empty (T, F) matrix")
        n = -(-feats.shape[0] // self._reduction)
        return EncoderStates(states=np.zeros((n, self._d_model)), version=feats.shape[0])

    def decode_greedy(
        self,
        enc: EncoderStates,
        forced_prefix: Sequence[int],
        max_new: int = DEFAULT_MAX_NEW,
    ) -> DecodeResult:
        prefix = tuple(forced_prefix)
        if self.vocab.eos_id in prefix:
            raise ValueError("forced prefix must not contain end-of-sequence")
        step = self._script(enc.n)
        tokens = tuple(step.tokens)
        if tokens[: len(prefix)] != prefix:
            raise ValueError(
                f"scripted hypothesis {tokens} does not extend committed prefix {prefix}"
            )
        tokens = tokens[: len(prefix) + max_new]
        alignment = list(step.alignment)[: len(tokens)]
        if len(alignment) != len(tokens):
            raise ValueError("script must align every token")
        attn = np.zeros((self.num_decoder_layers, self.num_heads, len(tokens), enc.n))
        for i, frame in enumerate(alignment):
            if not 0 <= frame < enc.n:
                raise ValueError(f"scripted alignment {frame} outside [0, {enc.n})")
            attn[:, :, i, frame] = 1.0
        truncated = len(step.tokens) > len(tokens)
        return DecodeResult(
            tokens=tokens,
            attention=attn,
            eos_reached=step.eos and not truncated,
        )

    def count_source_words(self, raw_features: np.ndarray) -> int:
        feats = np.asarray(raw_features, dtype=float)
        n = -(-feats.shape[0] // self._reduction)
        step = self._script(n)
        return step.source_words


@dataclass(frozen=True)
class ScriptStep:
    """One scripted decode outcome: hypothesis tokens, aligned frame per token."""

    tokens: tuple[int, ...]
    alignment: tuple[int, ...]
    eos: bool = False
    source_words: int = 0
