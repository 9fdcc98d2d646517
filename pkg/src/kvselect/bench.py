"""Wall-clock scaling of full versus selected forward passes."""

from __future__ import annotations

import csv
import io
import statistics
import time
from dataclasses import dataclass

from .cost import attention_flop_model, format_number, layer_multiplies
from .exceptions import ArgumentError
from .model import ToyModel, forward, frame_selection_for_batch, random_batch
from .plans import LayerPlan
from .tokens import TokenGrid

SCALING_COLUMNS = ["n_frames", "mode", "median_seconds", "multiplies", "model_predicted_ratio", "measured_ratio"]
MIN_REPEATS = 3


@dataclass(frozen=True)
class ScalingRow:
    n_frames: int
    mode: str
    median_seconds: float
    multiplies: int
    model_predicted_ratio: float | None
    measured_ratio: float | None

    def as_dict(self) -> dict:
        return {c: getattr(self, c) for c in SCALING_COLUMNS}


def _time(fn, repeats: int, clock) -> float:
    samples = []
    for _ in range(repeats):
        t0 = clock()
        fn()
        samples.append(clock() - t0)
    return statistics.median(samples)


def benchmark_scaling(
    model: ToyModel,
    frame_counts,
    k: int,
    grid: TokenGrid,
    plan: LayerPlan,
    repeats: int = MIN_REPEATS,
    seed: int = 0,
    modes=("full", "selected"),
    clock=time.perf_counter,
) -> list[ScalingRow]:
    """Median forward time per (frame count, mode) with cost-model ratios alongside.

    Only the forward pass is timed; frame selection runs beforehand. ``k`` is
    capped at each frame count. Ratios compare each row with the previous
    frame count of the same mode.
    """
    if repeats < MIN_REPEATS:
        raise ArgumentError(f"repeats must be at least {MIN_REPEATS}, got {repeats}")
    if len(plan) != model.n_layers:
        raise ArgumentError("plan length must equal the model's global layer count")
    frame_counts = [int(n) for n in frame_counts]
    if not frame_counts or min(frame_counts) < 1:
        raise ArgumentError("frame counts must be positive")
    rows: list[ScalingRow] = []
    last: dict[str, ScalingRow] = {}
    for n in frame_counts:
        batch = random_batch(n, grid, model.model_dim, seed)
        k_eff = min(k, n)
        for mode in modes:
            if mode == "full":
                multiplies = model.n_layers * layer_multiplies(None, n, n, grid, model.model_dim)
                run = lambda: forward(model, batch)  # noqa: E731
            elif mode == "selected":
                selection = frame_selection_for_batch(batch, k_eff, seed)
                multiplies = attention_flop_model(n, grid.tokens_per_frame, k_eff, plan, grid, model.model_dim).total
                run = lambda: forward(model, batch, selection, plan)  # noqa: E731
            else:
                raise ArgumentError(f"unknown benchmark mode {mode!r}")
            seconds = _time(run, repeats, clock)
            prev = last.get(mode)
            row = ScalingRow(
                n,
                mode,
                seconds,
                multiplies,
                multiplies / prev.multiplies if prev else None,
                seconds / prev.median_seconds if prev else None,
            )
            rows.append(row)
            last[mode] = row
    return rows


def scaling_csv(rows, include_timing: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = SCALING_COLUMNS if include_timing else [c for c in SCALING_COLUMNS if c not in ("median_seconds", "measured_ratio")]
    w.writerow(cols)
    for r in rows:
        d = r.as_dict()
        w.writerow([format_number(d[c]) for c in cols])
    return buf.getvalue()
