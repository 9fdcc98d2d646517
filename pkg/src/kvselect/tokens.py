"""Intra-frame token selection and the per-layer key/value token sets.

Within a frame, the ``n_special`` special tokens (camera, registers) come
first, followed by the ``h x w`` spatial tokens in row-major order. Special
tokens of a selected frame are never pruned.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ArgumentError
from .features import frame_distances, normalize_rows
from .frames import FrameSelection, farthest_point_order
from ._rng import SplitMix64
from .plans import LayerPlan, LayerStrategy


@dataclass(frozen=True)
class TokenGrid:
    height: int
    width: int
    n_special: int = 0

    def __post_init__(self):
        if self.height < 1 or self.width < 1 or self.n_special < 0:
            raise ArgumentError(f"invalid token grid {self.height}x{self.width} + {self.n_special}")

    @property
    def tokens_per_frame(self) -> int:
        return self.height * self.width + self.n_special

    @property
    def n_spatial(self) -> int:
        return self.height * self.width

    def spatial_index(self, row, col):
        return self.n_special + np.asarray(row) * self.width + np.asarray(col)

    def downsampled_count(self, sigma: int) -> int:
        """Spatial tokens kept by offset-0 striding: ``ceil(h/sigma) * ceil(w/sigma)``."""
        return -(-self.height // sigma) * -(-self.width // sigma)


def standard_downsample(grid: TokenGrid, sigma: int) -> np.ndarray:
    """Per-frame token indices kept by a stride-``sigma`` grid anchored at (0, 0).

    Keeps rows ``0, sigma, 2*sigma, ...`` crossed with the same columns, so
    ``ceil(h/sigma) * ceil(w/sigma)`` spatial tokens survive (``floor`` and
    ``ceil`` agree when sigma divides the grid). Special tokens are kept.
    """
    if int(sigma) != sigma or sigma < 1:
        raise ArgumentError(f"sigma must be a positive integer, got {sigma}")
    if sigma > min(grid.height, grid.width):
        raise ArgumentError(f"sigma={sigma} exceeds the {grid.height}x{grid.width} grid")
    rows = np.arange(0, grid.height, sigma)
    cols = np.arange(0, grid.width, sigma)
    spatial = grid.spatial_index(rows[:, None], cols[None, :]).ravel()
    return np.concatenate([np.arange(grid.n_special), spatial]).astype(np.int64)


def activation_select(scores, keep_fraction: float) -> np.ndarray:
    """Indices of the ``ceil(keep_fraction * L)`` highest scores, ties to the lower index.

    Returned in ascending index order.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise ArgumentError("no scores to select from")
    if not np.all(np.isfinite(scores)):
        raise ArgumentError("scores must be finite")
    if not 0.0 < keep_fraction <= 1.0:
        raise ArgumentError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    n_keep = int(np.ceil(keep_fraction * scores.size - 1e-12))
    n_keep = min(max(n_keep, 1), scores.size)
    order = np.lexsort((np.arange(scores.size), -scores))
    return np.sort(order[:n_keep]).astype(np.int64)


def tld_select(frame_tokens, budget: int, other_frame_means=(), seed: int = 0, first: int | None = None) -> np.ndarray:
    """Token-level diversity selection within one frame.

    Farthest point sampling over token cosine distances picks ``2 * budget``
    candidates; each candidate's redundancy is its largest cosine similarity
    to the mean feature of any other frame, and the ``budget`` least redundant
    candidates are kept. Equal scores keep FPS pick order.

    Returns
    -------
    ndarray of shape (budget,)
        Token indices, least redundant first.
    """
    X = check_array(frame_tokens, dtype=np.float64)
    L = X.shape[0]
    if budget < 1 or 2 * budget > L:
        raise ArgumentError(f"budget must satisfy 1 <= budget and 2*budget <= {L}, got {budget}")
    D = frame_distances(X)
    if first is None:
        first = SplitMix64(seed).below(L)
    candidates = np.asarray(farthest_point_order(D, 2 * budget, int(first)), dtype=np.int64)
    redundancy = tld_redundancy(X[candidates], other_frame_means)
    order = np.lexsort((np.arange(candidates.size), redundancy))
    return candidates[order[:budget]]


def tld_redundancy(tokens, other_frame_means) -> np.ndarray:
    """Largest cosine similarity of each token to any of the given frame means (0 if none)."""
    tokens = np.asarray(tokens, dtype=np.float64)
    means = np.asarray(other_frame_means, dtype=np.float64).reshape(-1, tokens.shape[1])
    if means.shape[0] == 0:
        return np.zeros(tokens.shape[0])
    return (normalize_rows(tokens) @ normalize_rows(means).T).max(axis=1)


@dataclass(frozen=True)
class TokenIndexSet:
    """Key/value tokens one global layer may attend to, as (frame, token) pairs.

    ``entries`` is sorted by frame then token and holds no duplicates.
    """

    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((e[:, 1], e[:, 0]))
        e = e[order]
        if e.shape[0] > 1 and np.any(np.all(e[1:] == e[:-1], axis=1)):
            raise ArgumentError("token set entries must be distinct")
        e.setflags(write=False)
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return self.entries.shape[0]

    @property
    def frames(self) -> np.ndarray:
        return np.unique(self.entries[:, 0])

    def flat(self, tokens_per_frame: int) -> np.ndarray:
        """Row indices into an ``N*L`` token layout."""
        return self.entries[:, 0] * tokens_per_frame + self.entries[:, 1]

    @classmethod
    def from_frames(cls, frames, per_frame_tokens) -> "TokenIndexSet":
        """Same per-frame token list for each frame; ``per_frame_tokens`` may also be a
        mapping ``frame -> tokens``."""
        parts = []
        for f in frames:
            tok = per_frame_tokens[f] if isinstance(per_frame_tokens, dict) else per_frame_tokens
            tok = np.asarray(tok, dtype=np.int64)
            parts.append(np.stack([np.full(tok.size, f, dtype=np.int64), tok], axis=1))
        if not parts:
            return cls(np.empty((0, 2), dtype=np.int64))
        return cls(np.concatenate(parts))

    @classmethod
    def all_tokens(cls, n_frames: int, tokens_per_frame: int) -> "TokenIndexSet":
        return cls.from_frames(range(n_frames), np.arange(tokens_per_frame))


def frame_token_indices(grid: TokenGrid, strategy: LayerStrategy, scores=None) -> np.ndarray:
    """Tokens of one selected frame that survive ``strategy``.

    ``scores`` (length ``L``) is required for the activation strategy, which
    ranks spatial tokens only.
    """
    L = grid.tokens_per_frame
    if strategy.kind in ("full_restricted", "pool"):
        return np.arange(L, dtype=np.int64)
    if strategy.kind == "downsample":
        return standard_downsample(grid, strategy.sigma)
    if strategy.kind == "activation":
        if scores is None:
            raise ArgumentError("activation strategy needs per-token scores")
        scores = np.asarray(scores, dtype=np.float64)
        if scores.shape != (L,):
            raise ArgumentError(f"expected {L} scores per frame, got shape {scores.shape}")
        spatial = activation_select(scores[grid.n_special :], strategy.keep_fraction) + grid.n_special
        return np.concatenate([np.arange(grid.n_special), spatial]).astype(np.int64)
    return np.empty(0, dtype=np.int64)


def resolve_token_set(
    selection: FrameSelection, plan: LayerPlan, layer: int, grid: TokenGrid, scores=None
) -> TokenIndexSet:
    """Compose frame selection with the layer's intra-frame strategy.

    Local layers resolve to an empty set: attention there stays inside each
    query's own frame. ``scores`` is ``(n_frames, L)`` and only read for
    activation layers.
    """
    if not 0 <= layer < len(plan):
        raise ArgumentError(f"layer {layer} outside a {len(plan)}-layer plan")
    strategy = plan[layer]
    frames = selection.sorted_indices
    if strategy.kind == "local":
        return TokenIndexSet(np.empty((0, 2), dtype=np.int64))
    if strategy.kind == "activation":
        if scores is None:
            raise ArgumentError("activation strategy needs per-token scores")
        per_frame = {int(f): frame_token_indices(grid, strategy, scores[f]) for f in frames}
        return TokenIndexSet.from_frames(frames, per_frame)
    return TokenIndexSet.from_frames(frames, frame_token_indices(grid, strategy))


class TokenDiversitySelector(TransformerMixin, BaseEstimator):
    """Token-level diversity pruning of one frame's tokens.

    ``fit`` takes the frame's ``(L, d)`` token features; pass the mean
    features of the other frames as ``other_frame_means``.
    """

    def __init__(self, budget=16, seed=0, first=None):
        self.budget = budget
        self.seed = seed
        self.first = first

    def fit(self, X, y=None, other_frame_means=()):
        X = check_array(X, dtype=np.float64)
        self.n_features_in_ = X.shape[1]
        self.indices_ = tld_select(X, self.budget, other_frame_means, self.seed, self.first)
        return self

    def transform(self, X):
        check_is_fitted(self, "indices_")
        return check_array(X, dtype=np.float64)[self.indices_]
