"""Analytic multiply counts for the global attention layers.

The unit is multiply-adds of the two attention products (scores ``Q K^T`` and
the weighted sum with ``V``), i.e. ``2 * dim`` per query-key pair, where
``dim`` is the model width summed over heads. Softmax and normalization are
left out as sub-dominant.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

from .exceptions import ArgumentError
from .plans import LayerPlan, LayerStrategy
from .tokens import TokenGrid

REPORT_COLUMNS = ["layer", "strategy", "n_keys", "h_norm", "top1", "multiplies", "reduction_pct"]


@dataclass(frozen=True)
class LayerCost:
    layer: int
    strategy: str
    n_keys: int
    multiplies: int
    baseline: int

    @property
    def reduction_pct(self) -> float:
        return 100.0 * (1.0 - self.multiplies / self.baseline)


@dataclass(frozen=True)
class CostReport:
    layers: list[LayerCost] = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(c.multiplies for c in self.layers)

    @property
    def baseline_total(self) -> int:
        return sum(c.baseline for c in self.layers)

    @property
    def reduction(self) -> float:
        """Fractional saving versus running every layer as full global attention."""
        return 1.0 - self.total / self.baseline_total


def keys_per_query(strategy: LayerStrategy | None, n_frames: int, k: int, grid: TokenGrid) -> int:
    L = grid.tokens_per_frame
    if strategy is None:
        return n_frames * L
    kind = strategy.kind
    if kind in ("full_restricted", "pool"):
        return k * L
    if kind == "downsample":
        return k * (grid.downsampled_count(strategy.sigma) + grid.n_special)
    if kind == "activation":
        return k * (_activation_kept(grid, strategy.keep_fraction) + grid.n_special)
    return L


def _activation_kept(grid: TokenGrid, keep_fraction: float) -> int:
    return min(grid.n_spatial, max(1, math.ceil(keep_fraction * grid.n_spatial - 1e-12)))


def layer_multiplies(strategy: LayerStrategy | None, n_frames: int, k: int, grid: TokenGrid, dim: int) -> int:
    """Multiply-adds of one layer. ``strategy=None`` means full global attention."""
    NL = n_frames * grid.tokens_per_frame
    if strategy is not None and strategy.kind == "pool":
        return NL * dim
    pairs = NL * keys_per_query(strategy, n_frames, k, grid)
    total = pairs * 2 * dim
    if strategy is not None and strategy.kind == "activation":
        # ranking needs the scores against every token of the selected frames
        total += NL * k * grid.tokens_per_frame * dim
    return total


def attention_flop_model(
    n_frames: int, tokens_per_frame: int, k: int, plan: LayerPlan | None, grid: TokenGrid, dim: int = 64
) -> CostReport:
    """Per-layer multiply counts of ``plan`` next to the all-full baseline.

    ``plan=None`` costs the unmodified model (every layer full).
    """
    if tokens_per_frame != grid.tokens_per_frame:
        raise ArgumentError(f"tokens_per_frame={tokens_per_frame} disagrees with grid ({grid.tokens_per_frame})")
    if not 1 <= k <= n_frames:
        raise ArgumentError(f"k must be in [1, {n_frames}], got {k}")
    if plan is None:
        raise ArgumentError("a plan is required; use LayerPlan.uniform for baselines")
    baseline = layer_multiplies(None, n_frames, k, grid, dim)
    rows = []
    for layer, s in enumerate(plan.strategies):
        rows.append(LayerCost(layer, str(s), keys_per_query(s, n_frames, k, grid), layer_multiplies(s, n_frames, k, grid, dim), baseline))
    return CostReport(rows)


def full_model_cost(n_frames: int, n_layers: int, grid: TokenGrid, dim: int = 64) -> int:
    return n_layers * layer_multiplies(None, n_frames, n_frames, grid, dim)


def format_number(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def report_csv(rows) -> str:
    """Render report rows (dicts keyed by ``REPORT_COLUMNS``) as CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for row in rows:
        w.writerow([format_number(row.get(c)) for c in REPORT_COLUMNS])
    return buf.getvalue()


def cost_rows(report: CostReport) -> list[dict]:
    return [
        {"layer": c.layer, "strategy": c.strategy, "n_keys": c.n_keys, "multiplies": c.multiplies, "reduction_pct": c.reduction_pct}
        for c in report.layers
    ]
