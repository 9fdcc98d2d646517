"""Multi-head attention over full, restricted, frame-local and pooled key sets.

Tensors are laid out ``(n_heads, n_tokens, head_dim)`` with tokens grouped by
frame (``N * L`` rows). Restricted attention gathers the selected key/value
rows and runs dense attention on them; nothing is masked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import SplitMix64
from .exceptions import ArgumentError
from .tokens import TokenIndexSet

QUERY_BLOCK = 1024
DEFAULT_HEAD_SAMPLES = 4
DEFAULT_QUERY_SAMPLES = 50


@dataclass
class AttentionInputs:
    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    tokens_per_frame: int

    def __post_init__(self):
        q, k, v = (np.asarray(a, dtype=np.float64) for a in (self.queries, self.keys, self.values))
        if q.ndim == 2:
            q, k, v = q[None], k[None], v[None]
        if q.ndim != 3 or q.shape != k.shape or k.shape[:2] != v.shape[:2]:
            raise ArgumentError(f"inconsistent attention shapes q={q.shape} k={k.shape} v={v.shape}")
        if self.tokens_per_frame < 1 or q.shape[1] % self.tokens_per_frame:
            raise ArgumentError(f"{q.shape[1]} tokens do not split into frames of {self.tokens_per_frame}")
        self.queries, self.keys, self.values = q, k, v

    @property
    def n_heads(self) -> int:
        return self.queries.shape[0]

    @property
    def n_tokens(self) -> int:
        return self.queries.shape[1]

    @property
    def head_dim(self) -> int:
        return self.queries.shape[2]

    @property
    def n_frames(self) -> int:
        return self.n_tokens // self.tokens_per_frame

    @property
    def frame_of_token(self) -> np.ndarray:
        return np.arange(self.n_tokens) // self.tokens_per_frame


@dataclass(frozen=True)
class AttentionStats:
    normalized_entropy: float
    top1_weight: float
    n_sampled_heads: int
    n_sampled_queries: int
    n_keys: int


def softmax(scores: np.ndarray, axis: int = -1) -> np.ndarray:
    z = scores - scores.max(axis=axis, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=axis, keepdims=True)
    return z


def attention_weights(q: np.ndarray, k: np.ndarray) -> np.ndarray:
    """Row-stochastic ``softmax(q k^T / sqrt(d))`` for ``(..., n, d)`` inputs."""
    return softmax(q @ np.swapaxes(k, -1, -2) / np.sqrt(q.shape[-1]))


def _dense(q: np.ndarray, k: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = np.empty(q.shape[:2] + (v.shape[2],))
    for h in range(q.shape[0]):
        for start in range(0, q.shape[1], QUERY_BLOCK):
            stop = start + QUERY_BLOCK
            out[h, start:stop] = attention_weights(q[h, start:stop], k[h]) @ v[h]
    return out


def _flat_keys(inp: AttentionInputs, token_set) -> np.ndarray:
    if isinstance(token_set, TokenIndexSet):
        if len(token_set) and token_set.entries[:, 1].max() >= inp.tokens_per_frame:
            raise ArgumentError("token index beyond tokens_per_frame")
        idx = token_set.flat(inp.tokens_per_frame)
    else:
        idx = np.asarray(token_set, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ArgumentError("restricted attention needs a nonempty key/value set")
    if idx.min() < 0 or idx.max() >= inp.n_tokens:
        raise ArgumentError("key/value index out of range")
    return idx


def full_attention(inp: AttentionInputs) -> np.ndarray:
    return _dense(inp.queries, inp.keys, inp.values)


def restricted_attention(inp: AttentionInputs, token_set) -> np.ndarray:
    """Every query attends to the gathered subset of keys/values only.

    ``token_set`` is a :class:`TokenIndexSet` or an array of flat token rows.
    """
    idx = _flat_keys(inp, token_set)
    return _dense(inp.queries, inp.keys[:, idx], inp.values[:, idx])


def local_attention(inp: AttentionInputs) -> np.ndarray:
    """Each query attends to the keys of its own frame."""
    H, T, d = inp.queries.shape
    N, L = inp.n_frames, inp.tokens_per_frame
    q = inp.queries.reshape(H, N, L, d)
    k = inp.keys.reshape(H, N, L, d)
    v = inp.values.reshape(H, N, L, inp.values.shape[2])
    return (attention_weights(q, k) @ v).reshape(H, T, -1)


def mean_pool_attention(inp: AttentionInputs, token_set) -> np.ndarray:
    """Every query receives the plain mean of the selected value rows."""
    idx = _flat_keys(inp, token_set)
    mean = inp.values[:, idx].mean(axis=1, keepdims=True)
    return np.broadcast_to(mean, (inp.n_heads, inp.n_tokens, inp.values.shape[2])).copy()


def row_entropy(weights: np.ndarray) -> np.ndarray:
    """Shannon entropy (nats) of each row, with ``0 * log 0 = 0``."""
    w = np.asarray(weights, dtype=np.float64)
    logs = np.log(w, out=np.zeros_like(w), where=w > 0)
    return -(w * logs).sum(axis=-1)


def summarize_weights(weights) -> AttentionStats:
    """Normalized entropy and mean top-1 weight of ``(..., n_keys)`` attention rows."""
    w = np.asarray(weights, dtype=np.float64)
    n_keys = w.shape[-1]
    if n_keys < 2:
        raise ValueError("normalized entropy is undefined for fewer than two keys")
    rows = w.reshape(-1, n_keys)
    h_norm = float(row_entropy(rows).mean() / np.log(n_keys))
    top1 = float(rows.max(axis=1).mean())
    n_heads = w.shape[0] if w.ndim == 3 else 1
    return AttentionStats(min(max(h_norm, 0.0), 1.0), top1, n_heads, rows.shape[0] // n_heads, n_keys)


def sample_heads_queries(n_heads, n_queries, h_sample, q_sample, seed):
    if not 1 <= h_sample <= n_heads:
        raise ArgumentError(f"cannot sample {h_sample} of {n_heads} heads")
    if not 1 <= q_sample <= n_queries:
        raise ArgumentError(f"cannot sample {q_sample} of {n_queries} queries")
    rng = SplitMix64(seed)
    heads = np.sort(rng.choice(n_heads, h_sample))
    queries = np.sort(rng.choice(n_queries, q_sample))
    return heads, queries


def attention_entropy_stats(
    inp: AttentionInputs,
    token_set=None,
    h_sample: int = DEFAULT_HEAD_SAMPLES,
    q_sample: int = DEFAULT_QUERY_SAMPLES,
    seed: int = 0,
) -> AttentionStats:
    """Normalized attention entropy over seeded samples of heads and queries.

    Entropy is divided by ``ln(n_keys)`` where ``n_keys`` counts the keys the
    queries can actually attend to (all tokens when ``token_set`` is None).
    """
    heads, queries = sample_heads_queries(inp.n_heads, inp.n_tokens, h_sample, q_sample, seed)
    idx = np.arange(inp.n_tokens) if token_set is None else _flat_keys(inp, token_set)
    if idx.size < 2:
        raise ValueError("normalized entropy is undefined for fewer than two keys")
    q = inp.queries[heads][:, queries]
    k = inp.keys[heads][:, idx]
    return summarize_weights(attention_weights(q, k))


def entropy_stats_from_weights(
    weights,
    h_sample: int = DEFAULT_HEAD_SAMPLES,
    q_sample: int = DEFAULT_QUERY_SAMPLES,
    seed: int = 0,
) -> AttentionStats:
    """Same statistics from stored ``(n_heads, n_queries, n_keys)`` attention weights."""
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 3:
        raise ArgumentError(f"expected (heads, queries, keys) weights, got shape {w.shape}")
    heads, queries = sample_heads_queries(w.shape[0], w.shape[1], h_sample, q_sample, seed)
    return summarize_weights(w[heads][:, queries])
