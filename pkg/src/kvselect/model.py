"""A small alternating-attention stack standing in for a visual geometry transformer.

Block recipe (pre-norm, residual), repeated ``n_layers`` times::

    x = x + FrameAttention(LN(x))      # within each frame
    x = x + FFN(LN(x))
    x = x + GlobalAttention(LN(x))     # across frames, governed by the layer plan
    x = x + FFN(LN(x))

``FFN(x) = W2 gelu(W1 x + b1) + b2`` with the tanh GELU. All weights are drawn
uniformly from ``[-1/sqrt(model_dim), 1/sqrt(model_dim)]`` by SplitMix64 in a
fixed order; norm gains are 1 and biases 0. There are no positional encodings
unless ``frame_embedding=True``, so the stack is symmetric under permuting
whole frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._rng import SplitMix64
from .attention import (
    AttentionInputs,
    attention_weights,
    full_attention,
    local_attention,
    mean_pool_attention,
    restricted_attention,
    _dense,
)
from .exceptions import ArgumentError
from .features import frame_distances
from .frames import FrameSelection, select_diverse_frames
from .plans import LayerPlan
from .tokens import TokenGrid, TokenIndexSet, frame_token_indices, resolve_token_set

LN_EPS = 1e-6


@dataclass
class BlockWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln1_gain: np.ndarray
    ln1_bias: np.ndarray
    ln2_gain: np.ndarray
    ln2_bias: np.ndarray


@dataclass
class ToyModel:
    n_layers: int
    model_dim: int
    n_heads: int
    ffn_dim: int
    seed: int
    frame_blocks: list[BlockWeights] = field(repr=False)
    global_blocks: list[BlockWeights] = field(repr=False)
    frame_embedding: np.ndarray | None = field(default=None, repr=False)

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.n_heads


def _block(rng: SplitMix64, dim: int, ffn_dim: int) -> BlockWeights:
    a = 1.0 / np.sqrt(dim)
    u = lambda *shape: rng.uniform(-a, a, shape)  # noqa: E731
    return BlockWeights(
        wq=u(dim, dim), wk=u(dim, dim), wv=u(dim, dim), wo=u(dim, dim),
        w1=u(dim, ffn_dim), b1=u(ffn_dim), w2=u(ffn_dim, dim), b2=u(dim),
        ln1_gain=np.ones(dim), ln1_bias=np.zeros(dim), ln2_gain=np.ones(dim), ln2_bias=np.zeros(dim),
    )


def build_toy_model(
    n_layers: int = 24,
    model_dim: int = 64,
    n_heads: int = 4,
    seed: int = 0,
    ffn_dim: int | None = None,
    frame_embedding: bool = False,
    max_frames: int = 1024,
) -> ToyModel:
    """Deterministic weights for ``n_layers`` (frame-wise, global) block pairs.

    ``ffn_dim`` defaults to ``2 * model_dim``. With ``frame_embedding=True`` a
    learned-looking per-frame index embedding for up to ``max_frames`` frames
    is added to the input.
    """
    if n_layers < 1 or model_dim < 1 or n_heads < 1:
        raise ArgumentError("n_layers, model_dim and n_heads must be positive")
    if model_dim % n_heads:
        raise ArgumentError(f"model_dim={model_dim} is not divisible by n_heads={n_heads}")
    ffn_dim = 2 * model_dim if ffn_dim is None else ffn_dim
    rng = SplitMix64(seed)
    frame_blocks, global_blocks = [], []
    for _ in range(n_layers):
        frame_blocks.append(_block(rng, model_dim, ffn_dim))
        global_blocks.append(_block(rng, model_dim, ffn_dim))
    emb = None
    if frame_embedding:
        a = 1.0 / np.sqrt(model_dim)
        emb = rng.uniform(-a, a, (max_frames, model_dim))
    return ToyModel(n_layers, model_dim, n_heads, ffn_dim, int(seed), frame_blocks, global_blocks, emb)


@dataclass
class TokenBatch:
    n_frames: int
    grid: TokenGrid
    embeddings: np.ndarray

    def __post_init__(self):
        self.embeddings = np.asarray(self.embeddings, dtype=np.float64)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != self.n_frames * self.grid.tokens_per_frame:
            raise ArgumentError(
                f"embeddings of shape {self.embeddings.shape} do not hold {self.n_frames} frames "
                f"of {self.grid.tokens_per_frame} tokens"
            )
        if not np.all(np.isfinite(self.embeddings)):
            raise ValueError("embeddings must be finite")

    @property
    def tokens_per_frame(self) -> int:
        return self.grid.tokens_per_frame

    def frame_means(self) -> np.ndarray:
        L = self.tokens_per_frame
        return self.embeddings.reshape(self.n_frames, L, -1).mean(axis=1)


def random_batch(n_frames: int, grid: TokenGrid, model_dim: int, seed: int = 0, scale: float = 1.0) -> TokenBatch:
    x = SplitMix64(seed).uniform(-scale, scale, (n_frames * grid.tokens_per_frame, model_dim))
    return TokenBatch(n_frames, grid, x)


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * gain + bias


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.sqrt(2.0 / np.pi) * (x + 0.044715 * x**3)))


def split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    T, D = x.shape
    return x.reshape(T, n_heads, D // n_heads).transpose(1, 0, 2)


def merge_heads(x: np.ndarray) -> np.ndarray:
    H, T, d = x.shape
    return x.transpose(1, 0, 2).reshape(T, H * d)


def attention_inputs(x: np.ndarray, w: BlockWeights, n_heads: int, tokens_per_frame: int) -> AttentionInputs:
    h = layer_norm(x, w.ln1_gain, w.ln1_bias)
    return AttentionInputs(split_heads(h @ w.wq, n_heads), split_heads(h @ w.wk, n_heads), split_heads(h @ w.wv, n_heads), tokens_per_frame)


def feed_forward(x: np.ndarray, w: BlockWeights) -> np.ndarray:
    h = layer_norm(x, w.ln2_gain, w.ln2_bias)
    return gelu(h @ w.w1 + w.b1) @ w.w2 + w.b2


def activation_scores(inp: AttentionInputs, frames: np.ndarray) -> np.ndarray:
    """Attention mass each token of the given frames receives, summed over heads and queries.

    Returns an ``(n_frames, L)`` array; rows of unlisted frames are zero.
    """
    L = inp.tokens_per_frame
    idx = (frames[:, None] * L + np.arange(L)[None, :]).ravel()
    mass = np.zeros(idx.size)
    for h in range(inp.n_heads):
        mass += attention_weights(inp.queries[h], inp.keys[h, idx]).sum(axis=0)
    scores = np.zeros((inp.n_frames, L))
    scores[frames] = mass.reshape(frames.size, L)
    return scores


def global_attention(
    inp: AttentionInputs,
    selection: FrameSelection | None,
    plan: LayerPlan | None,
    layer: int,
    grid: TokenGrid,
    include_query_frame: bool = False,
) -> tuple[np.ndarray, TokenIndexSet | None]:
    """Run one global layer under its strategy; returns output heads and the K/V set used."""
    if plan is None and selection is None:
        return full_attention(inp), None
    if selection is None:
        selection = FrameSelection.all_frames(inp.n_frames)
    if plan is None:
        plan = LayerPlan.uniform(layer + 1)
    strategy = plan[layer]
    if strategy.kind == "local":
        return local_attention(inp), None
    scores = None
    if strategy.kind == "activation":
        scored = np.arange(inp.n_frames) if include_query_frame else selection.sorted_indices
        scores = activation_scores(inp, scored)
    token_set = resolve_token_set(selection, plan, layer, grid, scores)
    if strategy.kind == "pool":
        return mean_pool_attention(inp, token_set), token_set
    if not include_query_frame:
        return restricted_attention(inp, token_set), token_set

    L = inp.tokens_per_frame
    base = token_set.flat(L)
    selected = set(int(f) for f in selection.indices)
    out = restricted_attention(inp, token_set)
    for f in range(inp.n_frames):
        if f in selected:
            continue
        own = f * L + frame_token_indices(grid, strategy, None if scores is None else scores[f])
        idx = np.concatenate([base, own])
        rows = slice(f * L, (f + 1) * L)
        out[:, rows] = _dense(inp.queries[:, rows], inp.keys[:, idx], inp.values[:, idx])
    return out, token_set


def forward(
    model: ToyModel,
    batch: TokenBatch,
    selection: FrameSelection | None = None,
    plan: LayerPlan | None = None,
    include_query_frame: bool = False,
    hook=None,
) -> np.ndarray:
    """Run the stack; without ``selection`` and ``plan`` every global layer is full.

    A plan without a selection restricts to all frames; a selection without a
    plan runs every global layer as ``full_restricted``. ``hook(layer, inp,
    token_set)`` is called before each global attention.
    """
    L = batch.tokens_per_frame
    if batch.embeddings.shape[1] != model.model_dim:
        raise ArgumentError(f"batch width {batch.embeddings.shape[1]} != model_dim {model.model_dim}")
    if plan is not None and len(plan) != model.n_layers:
        raise ArgumentError(f"plan has {len(plan)} layers, model has {model.n_layers} global layers")
    if selection is not None:
        idx = np.asarray(selection.indices)
        if idx.size == 0 or idx.min() < 0 or idx.max() >= batch.n_frames:
            raise ArgumentError("selection refers to frames outside the batch")
    if selection is not None and plan is None:
        plan = LayerPlan.uniform(model.n_layers)

    x = batch.embeddings.copy()
    if model.frame_embedding is not None:
        if batch.n_frames > model.frame_embedding.shape[0]:
            raise ArgumentError("more frames than the frame embedding table holds")
        x += np.repeat(model.frame_embedding[: batch.n_frames], L, axis=0)

    for layer in range(model.n_layers):
        fw = model.frame_blocks[layer]
        inp = attention_inputs(x, fw, model.n_heads, L)
        x = x + merge_heads(local_attention(inp)) @ fw.wo
        x = x + feed_forward(x, fw)

        gw = model.global_blocks[layer]
        inp = attention_inputs(x, gw, model.n_heads, L)
        heads, token_set = global_attention(inp, selection, plan, layer, batch.grid, include_query_frame)
        if hook is not None:
            hook(layer, inp, token_set)
        x = x + merge_heads(heads) @ gw.wo
        x = x + feed_forward(x, gw)
    return x


def frame_selection_for_batch(batch: TokenBatch, k: int, seed: int = 0) -> FrameSelection:
    """Diverse frames chosen from per-frame mean token embeddings."""
    return select_diverse_frames(frame_distances(batch.frame_means()), k, seed)


class ToyGeometryTransformer(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`forward`.

    ``X`` is the ``(n_frames * L, model_dim)`` token matrix of one scene with
    ``L = grid_height * grid_width + n_special``. With ``k=None`` every global
    layer is full; otherwise ``fit`` selects ``k`` diverse frames (from
    ``frame_features`` when given, else from per-frame mean tokens) and builds
    the threshold layer plan.
    """

    def __init__(
        self,
        n_layers=24,
        model_dim=64,
        n_heads=4,
        grid_height=4,
        grid_width=4,
        n_special=0,
        k=None,
        sigma=3,
        l_local=2,
        l_sample=9,
        l_late=None,
        seed=0,
        selection_seed=0,
    ):
        self.n_layers = n_layers
        self.model_dim = model_dim
        self.n_heads = n_heads
        self.grid_height = grid_height
        self.grid_width = grid_width
        self.n_special = n_special
        self.k = k
        self.sigma = sigma
        self.l_local = l_local
        self.l_sample = l_sample
        self.l_late = l_late
        self.seed = seed
        self.selection_seed = selection_seed

    def _batch(self, X) -> TokenBatch:
        X = check_array(X, dtype=np.float64)
        grid = TokenGrid(self.grid_height, self.grid_width, self.n_special)
        if X.shape[0] % grid.tokens_per_frame:
            raise ArgumentError(f"{X.shape[0]} rows do not split into frames of {grid.tokens_per_frame} tokens")
        return TokenBatch(X.shape[0] // grid.tokens_per_frame, grid, X)

    def fit(self, X, y=None, frame_features=None):
        from .plans import build_layer_plan

        batch = self._batch(X)
        self.n_features_in_ = batch.embeddings.shape[1]
        self.model_ = build_toy_model(self.n_layers, self.model_dim, self.n_heads, self.seed)
        self.plan_ = None
        self.selection_ = None
        if self.k is not None:
            if frame_features is not None:
                D = frame_distances(frame_features)
                self.selection_ = select_diverse_frames(D, self.k, self.selection_seed)
            else:
                self.selection_ = frame_selection_for_batch(batch, self.k, self.selection_seed)
            self.plan_ = build_layer_plan(self.n_layers, self.l_local, self.l_sample, self.sigma, self.l_late)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return forward(self.model_, self._batch(X), self.selection_, self.plan_)
