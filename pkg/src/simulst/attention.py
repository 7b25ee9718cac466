"""Cross-attention math and argmax alignment extraction.

All functions here are pure and operate on plain numpy arrays:

* an attention *matrix* is ``(m, n)``: one row per target token, one column
  per source frame, each row a probability distribution;
* an attention *tensor* is ``(layers, heads, m, n)``: the full per-layer,
  per-head grid captured from one decode pass;
* an *alignment vector* is ``(m,)`` of ints: for each target token, the
  index of its most-attended source frame (0-based, ties to the lowest
  index).
"""

from __future__ import annotations

import numpy as np

ROW_SUM_TOL = 1e-5


def softmax(scores: np.ndarray) -> np.ndarray:
    """Numerically stable softmax over the last axis."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def validate_attention_matrix(weights: np.ndarray) -> np.ndarray:
    """Check that ``weights`` is a valid row-stochastic attention matrix.

    Entries must lie in [0, 1] and every row must sum to 1 within
    ``ROW_SUM_TOL``. Returns the input as a float array.
    """
    a = np.asarray(weights, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"attention matrix must be 2-D, got shape {a.shape}")
    m, n = a.shape
    if m >= 1 and n == 0:
        raise ValueError("attention matrix with target rows needs at least one source column")
    if a.size:
        if a.min() < -ROW_SUM_TOL or a.max() > 1.0 + ROW_SUM_TOL:
            raise ValueError("attention weights must lie in [0, 1]")
        worst = np.abs(a.sum(axis=1) - 1.0).max()
        if worst > ROW_SUM_TOL:
            raise ValueError(f"attention rows must sum to 1 (worst deviation {worst:.2e})")
    return a


def cross_attention(
    queries: np.ndarray,
    keys: np.ndarray,
    values: np.ndarray,
    d_k: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Dot-product cross attention ``softmax(Q Kᵀ / √d_k) V``.

    Args:
        queries: (m, d_k) query matrix.
        keys: (n, d_k) key matrix.
        values: (n, d_v) value matrix.
        d_k: scaling dimension; defaults to the query width and must match it.

    Returns:
        (context, weights): context is (m, d_v) = weights @ values, weights is
        the row-stochastic (m, n) attention matrix.
    """
    q = np.asarray(queries, dtype=float)
    k = np.asarray(keys, dtype=float)
    v = np.asarray(values, dtype=float)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValueError("queries, keys and values must all be 2-D matrices")
    if q.shape[1] != k.shape[1]:
        raise ValueError(f"query width {q.shape[1]} does not match key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise ValueError(f"key count {k.shape[0]} does not match value count {v.shape[0]}")
    if d_k is None:
        d_k = q.shape[1]
    if d_k <= 0:
        raise ValueError("d_k must be a positive integer")
    if d_k != q.shape[1]:
        raise ValueError(f"d_k={d_k} does not match query/key width {q.shape[1]}")
    weights = softmax(q @ k.T / np.sqrt(float(d_k)))
    return weights @ v, weights


def aggregate_attention(tensor: np.ndarray, layer: int) -> np.ndarray:
    """Mean over all heads of one layer of an attention tensor.

    ``tensor`` has shape (layers, heads, m, n). The mean of row-stochastic
    matrices is row-stochastic, so the result is a valid attention matrix.
    """
    t = np.asarray(tensor, dtype=float)
    if t.ndim != 4:
        raise ValueError(f"attention tensor must be 4-D (layers, heads, m, n), got shape {t.shape}")
    num_layers, num_heads = t.shape[0], t.shape[1]
    if num_heads < 1:
        raise ValueError("attention tensor must have at least one head")
    if not 0 <= layer < num_layers:
        raise ValueError(f"layer {layer} out of range for tensor with {num_layers} layers")
    return t[layer].mean(axis=0)


def compute_alignment(weights: np.ndarray) -> np.ndarray:
    """Index of the most-attended source frame for each target row.

    Ties break to the lowest frame index. An empty (0-row) matrix yields an
    empty vector; rows without columns are rejected.
    """
    a = np.asarray(weights, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"attention matrix must be 2-D, got shape {a.shape}")
    m, n = a.shape
    if m == 0:
        return np.zeros(0, dtype=np.int64)
    if n == 0:
        raise ValueError("cannot align against zero source frames")
    return a.argmax(axis=1)
