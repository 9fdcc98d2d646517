"""Inter-frame selection: which K frames populate the shared key/value set."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._rng import SplitMix64
from .exceptions import ArgumentError
from .features import check_features, covisibility_matrix, distance_from_covisibility

STRATEGIES = ("temporal_nearest", "covis_high", "covis_low", "attn_max", "attn_mean", "diversity")
BRUTE_FORCE_BUDGET = 10**6


@dataclass(frozen=True)
class FrameSelection:
    """Selected frame indices in pick order."""

    indices: tuple[int, ...]
    k: int
    seed: int = 0
    strategy: str = "diversity"

    def __post_init__(self):
        if len(self.indices) != self.k:
            raise ArgumentError(f"selection holds {len(self.indices)} indices, expected k={self.k}")
        if len(set(self.indices)) != len(self.indices):
            raise ArgumentError("selection indices must be distinct")

    @classmethod
    def all_frames(cls, n_frames: int) -> "FrameSelection":
        return cls(tuple(range(n_frames)), n_frames, 0, "all")

    @property
    def sorted_indices(self) -> np.ndarray:
        return np.sort(np.asarray(self.indices, dtype=np.int64))

    def to_dict(self) -> dict:
        return {"k": self.k, "seed": self.seed, "strategy": self.strategy, "indices": list(self.indices)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, obj: dict) -> "FrameSelection":
        return cls(tuple(int(i) for i in obj["indices"]), int(obj["k"]), int(obj["seed"]), str(obj["strategy"]))


def _check_distance(D) -> np.ndarray:
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[0] != D.shape[1] or D.shape[0] == 0:
        raise ArgumentError(f"distance matrix must be square and nonempty, got shape {D.shape}")
    return D


def _check_k(k, n) -> int:
    if isinstance(k, bool) or int(k) != k or not 1 <= int(k) <= n:
        raise ArgumentError(f"k must be an integer in [1, {n}], got {k}")
    return int(k)


def farthest_point_order(D, k: int, first: int) -> list[int]:
    """Greedy farthest-point picks starting from ``first``.

    Selected entries of the running min-distance vector are pinned to -inf so
    they are never re-picked; ``np.argmax`` resolves ties to the lowest index.
    """
    d_min = D[first].copy()
    d_min[first] = -np.inf
    picks = [first]
    for _ in range(k - 1):
        b = int(np.argmax(d_min))
        picks.append(b)
        d_min[b] = -np.inf
        np.minimum(d_min, D[b], out=d_min)
    return picks


def select_diverse_frames(D, k: int, seed: int = 0, first: int | None = None) -> FrameSelection:
    """Farthest point sampling over a frame distance matrix.

    Parameters
    ----------
    D : array of shape (n_frames, n_frames)
        Pairwise frame distances.
    k : int
        Number of anchor frames, ``1 <= k <= n_frames``.
    seed : int
        Seeds the uniform draw of the first frame.
    first : int, optional
        Forces the first pick instead of drawing it.

    Returns
    -------
    FrameSelection
    """
    D = _check_distance(D)
    n = D.shape[0]
    k = _check_k(k, n)
    if first is None:
        first = SplitMix64(seed).below(n)
    elif not 0 <= first < n:
        raise ArgumentError(f"forced first pick {first} outside [0, {n})")
    return FrameSelection(tuple(farthest_point_order(D, k, int(first))), k, int(seed), "diversity")


def kcenter_cost(D, S) -> float:
    """Largest distance from any frame to its nearest selected frame."""
    D = _check_distance(D)
    idx = np.asarray(S.indices if isinstance(S, FrameSelection) else S, dtype=np.int64)
    if idx.size == 0:
        raise ArgumentError("selection is empty")
    if idx.min() < 0 or idx.max() >= D.shape[0]:
        raise ArgumentError("selection index out of range")
    return float(D[:, idx].min(axis=1).max())


def brute_force_kcenter(D, k: int) -> FrameSelection:
    """Exact K-center by exhaustive search over all ``C(N, k)`` subsets.

    Ties go to the lexicographically smallest index tuple (the first one
    enumerated); the search refuses instances above ``BRUTE_FORCE_BUDGET`` subsets.
    """
    D = _check_distance(D)
    n = D.shape[0]
    k = _check_k(k, n)
    if math.comb(n, k) > BRUTE_FORCE_BUDGET:
        raise ArgumentError(f"C({n},{k}) = {math.comb(n, k)} subsets exceeds the budget of {BRUTE_FORCE_BUDGET}")
    best, best_cost = None, np.inf
    for subset in itertools.combinations(range(n), k):
        cost = D[:, subset].min(axis=1).max()
        if cost < best_cost:
            best, best_cost = subset, cost
    return FrameSelection(tuple(best), k, 0, "brute_force")


def _top_k(values, k: int, largest: bool) -> list[int]:
    """Indices of the k largest (or smallest) values; ties to the lower index."""
    values = np.asarray(values, dtype=np.float64)
    key = -values if largest else values
    order = np.lexsort((np.arange(values.size), key))
    return [int(i) for i in order[:k]]


def pool_frame_scores(attn_scores, query_frame: int, how: str) -> np.ndarray:
    """Per-frame pooled attention score.

    ``attn_scores`` is ``(n_frames, tokens_per_frame)`` for the query frame, or
    ``(n_query_frames, n_frames, tokens_per_frame)`` indexed by ``query_frame``.
    """
    A = np.asarray(attn_scores, dtype=np.float64)
    if A.ndim == 3:
        A = A[query_frame]
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ArgumentError(f"attention scores must be 2-D or 3-D, got shape {np.shape(attn_scores)}")
    return A.max(axis=1) if how == "max" else A.mean(axis=1)


def select_baseline(
    strategy: str,
    query_frame: int,
    k: int,
    *,
    n_frames: int | None = None,
    C=None,
    D=None,
    attn_scores=None,
) -> FrameSelection:
    """Per-query baseline selections.

    ``temporal_nearest`` needs only the sequence length; ``covis_*`` need the
    covisibility matrix ``C`` (a distance matrix ``D`` is accepted and mapped
    back by ``C = 1 - D``); ``attn_*`` need ``attn_scores``.
    """
    if strategy not in STRATEGIES:
        raise ArgumentError(f"unknown strategy {strategy!r}")
    if strategy == "diversity":
        raise ArgumentError("diversity selection is global; use select_diverse_frames")

    if strategy == "temporal_nearest":
        if n_frames is None and (C is not None or D is not None):
            n_frames = np.shape(C if C is not None else D)[0]
        if n_frames is None:
            raise ArgumentError("temporal_nearest requires the length of an ordered sequence")
        score = np.abs(np.arange(n_frames) - query_frame).astype(np.float64)
        largest = False
    elif strategy in ("covis_high", "covis_low"):
        if C is None and D is None:
            raise ArgumentError(f"{strategy} requires a covisibility or distance matrix")
        M = np.asarray(C, dtype=np.float64) if C is not None else 1.0 - np.asarray(D, dtype=np.float64)
        n_frames = M.shape[0]
        _check_query(query_frame, n_frames)
        score = M[query_frame]
        largest = strategy == "covis_high"
    else:
        if attn_scores is None:
            raise ArgumentError(f"{strategy} requires attention scores")
        score = pool_frame_scores(attn_scores, query_frame, "max" if strategy == "attn_max" else "mean")
        n_frames = score.size
        largest = True

    _check_query(query_frame, n_frames)
    k = _check_k(k, n_frames)
    return FrameSelection(tuple(_top_k(score, k, largest)), k, 0, strategy)


def _check_query(query_frame, n_frames) -> None:
    if not 0 <= query_frame < n_frames:
        raise ArgumentError(f"query frame {query_frame} outside [0, {n_frames})")


class DiverseFrameSelector(TransformerMixin, BaseEstimator):
    """Pick ``k`` mutually distant frames from per-frame descriptors.

    ``fit`` builds the cosine distance matrix and runs farthest point
    sampling; ``transform`` returns the rows of the selected frames.

    Parameters
    ----------
    k : int, default=25
    seed : int, default=0
    first : int or None, default=None
        Forced first pick, replacing the seeded draw.

    Attributes
    ----------
    selection_ : FrameSelection
    indices_ : ndarray of shape (k,)
        Selected frame indices in pick order.
    distances_ : ndarray of shape (n_frames, n_frames)
    cost_ : float
        K-center cost of the selection.
    """

    def __init__(self, k=25, seed=0, first=None):
        self.k = k
        self.seed = seed
        self.first = first

    def fit(self, X, y=None):
        X = check_features(X)
        self.n_features_in_ = X.shape[1]
        self.distances_ = distance_from_covisibility(covisibility_matrix(X))
        self.selection_ = select_diverse_frames(self.distances_, self.k, self.seed, self.first)
        self.indices_ = np.asarray(self.selection_.indices, dtype=np.int64)
        self.cost_ = kcenter_cost(self.distances_, self.selection_)
        return self

    def transform(self, X):
        check_is_fitted(self, "selection_")
        X = check_features(X)
        return X[self.indices_]

    def get_support(self, indices: bool = False):
        check_is_fitted(self, "selection_")
        if indices:
            return self.indices_.copy()
        mask = np.zeros(self.distances_.shape[0], dtype=bool)
        mask[self.indices_] = True
        return mask


class BaselineFrameSelector(TransformerMixin, BaseEstimator):
    """Per-query baseline frame selection behind the same fit/transform surface."""

    def __init__(self, strategy="covis_high", query_frame=0, k=25, attn_scores=None):
        self.strategy = strategy
        self.query_frame = query_frame
        self.k = k
        self.attn_scores = attn_scores

    def fit(self, X, y=None):
        X = check_features(X)
        self.n_features_in_ = X.shape[1]
        C = covisibility_matrix(X) if self.strategy.startswith("covis") else None
        self.selection_ = select_baseline(
            self.strategy, self.query_frame, self.k, n_frames=X.shape[0], C=C, attn_scores=self.attn_scores
        )
        self.indices_ = np.asarray(self.selection_.indices, dtype=np.int64)
        return self

    def transform(self, X):
        check_is_fitted(self, "selection_")
        return check_features(X)[self.indices_]
