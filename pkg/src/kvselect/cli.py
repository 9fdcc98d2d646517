"""``kvselect`` command line: select, plan, analyze, bench, metrics.

Machine-readable reports go to stdout (or ``--out``); logs go to stderr.
Exit status is 0 on success, 1 on data/internal errors, 2 on usage errors.
``GTH_THREADS`` caps BLAS threads.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io as kio
from .attention import entropy_stats_from_weights, attention_entropy_stats
from .bench import MIN_REPEATS, benchmark_scaling, scaling_csv
from .cost import attention_flop_model, cost_rows, layer_multiplies, report_csv
from .exceptions import ArgumentError, FormatError
from .features import covisibility_matrix, distance_from_covisibility, load_features
from .frames import STRATEGIES, kcenter_cost, select_baseline, select_diverse_frames
from .metrics import PointCloud, Trajectory, DepthPair, align_trajectories, ate, cloud_metrics, depth_metrics, rpe
from .model import build_toy_model, forward, random_batch
from .plans import build_layer_plan, entropy_adaptive_plan
from .tokens import TokenGrid

log = logging.getLogger("kvselect")


class UsageError(Exception):
    """Bad flags or unreadable inputs; exit status 2."""


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _repeats(text: str) -> int:
    value = _positive_int(text)
    if value < MIN_REPEATS:
        raise argparse.ArgumentTypeError(f"at least {MIN_REPEATS} repeats are required, got {value}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        values = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("frame counts must be positive")
    return values


def _grid(text: str) -> tuple[int, int]:
    try:
        h, w = (int(t) for t in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}") from None
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError("grid sides must be positive")
    return h, w


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
        log.info("wrote %s", out)
    else:
        sys.stdout.write(text)


def _add_output(p: argparse.ArgumentParser, default_format: str) -> None:
    p.add_argument("--format", choices=["json", "csv"], default=default_format)
    p.add_argument("--out", help="write the report here instead of stdout")


def _add_plan_flags(p: argparse.ArgumentParser, n_layers: int, l_local: int, l_sample: int, sigma: int) -> None:
    p.add_argument("--n-layers", type=_positive_int, default=n_layers)
    p.add_argument("--l-local", type=_nonneg_int, default=l_local)
    p.add_argument("--l-sample", type=_nonneg_int, default=l_sample)
    p.add_argument("--l-late", type=_nonneg_int, default=None)
    p.add_argument("--sigma", type=_positive_int, default=sigma)


def _add_model_flags(p) -> None:
    p.add_argument("--dim", type=_positive_int, default=64)
    p.add_argument("--heads", type=_positive_int, default=4)
    p.add_argument("--grid", type=_grid, default=(4, 4), help="spatial token grid HxW")
    p.add_argument("--n-special", type=_nonneg_int, default=0)
    p.add_argument("--seed", type=_nonneg_int, default=0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kvselect", description="Frame selection, layer plans, attention analysis, scaling benchmarks and metrics.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("select", help="choose anchor frames from per-frame features")
    p.add_argument("features", help="feature file (CSV or GTHF binary)")
    p.add_argument("--input-format", choices=["csv", "binary"], default=None)
    p.add_argument("--k", type=_positive_int, default=25)
    p.add_argument("--seed", type=_nonneg_int, default=0)
    p.add_argument("--first", type=_nonneg_int, default=None, help="force the first pick")
    p.add_argument("--strategy", choices=STRATEGIES, default="diversity")
    p.add_argument("--query", type=_nonneg_int, default=None, help="query frame for baseline strategies")
    p.add_argument("--scores", help="CSV of per-frame token attention scores (attn_* strategies)")
    _add_output(p, "json")

    p = sub.add_parser("plan", help="build a per-layer sparsification plan")
    _add_plan_flags(p, 24, 2, 9, 3)
    p.add_argument("--early", choices=["local", "pool"], default="local")
    p.add_argument("--tau1", type=float, default=None)
    p.add_argument("--tau2", type=float, default=None)
    p.add_argument("--entropies", help="CSV with an h_norm column (e.g. from 'analyze')")
    p.add_argument("--frames", type=_positive_int, default=500, help="frame count for the CSV cost report")
    p.add_argument("--k", type=_positive_int, default=25)
    p.add_argument("--grid", type=_grid, default=(37, 37))
    p.add_argument("--n-special", type=_nonneg_int, default=5)
    p.add_argument("--dim", type=_positive_int, default=1024)
    _add_output(p, "json")

    p = sub.add_parser("analyze", help="per-layer attention entropy profile")
    p.add_argument("--attention", help=".npy dump of weights shaped (layers, heads, queries, keys)")
    p.add_argument("--n-layers", type=_positive_int, default=24)
    p.add_argument("--frames", type=_positive_int, default=8)
    _add_model_flags(p)
    p.add_argument("--h-sample", type=_positive_int, default=4)
    p.add_argument("--q-sample", type=_positive_int, default=50)
    p.add_argument("--tau1", type=float, default=None)
    p.add_argument("--tau2", type=float, default=None)
    p.add_argument("--sigma", type=_positive_int, default=3)
    p.add_argument("--plan-out", help="write the entropy-derived plan JSON here")
    _add_output(p, "csv")

    p = sub.add_parser("bench", help="wall-clock scaling of full vs selected forward")
    p.add_argument("--frames", type=_int_list, default=[128, 256])
    p.add_argument("--k", type=_positive_int, default=8)
    p.add_argument("--repeats", type=_repeats, default=MIN_REPEATS)
    _add_plan_flags(p, 8, 1, 3, 2)
    _add_model_flags(p)
    _add_output(p, "csv")

    p = sub.add_parser("metrics", help="pose / point cloud / depth metrics")
    p.add_argument("--gt-traj")
    p.add_argument("--est-traj")
    p.add_argument("--align", choices=["sim3", "rigid", "none"], default="sim3")
    p.add_argument("--delta", type=_positive_int, default=1)
    p.add_argument("--gt-cloud")
    p.add_argument("--pred-cloud")
    p.add_argument("--gt-depth")
    p.add_argument("--pred-depth")
    p.add_argument("--median-scale", action="store_true")
    _add_output(p, "json")
    return parser


def cmd_select(args) -> None:
    F = load_features(args.features, args.input_format)
    D = distance_from_covisibility(covisibility_matrix(F))
    if args.k > F.shape[0]:
        raise UsageError(f"--k {args.k} exceeds the {F.shape[0]} frames in {args.features}")
    if args.strategy == "diversity":
        sel = select_diverse_frames(D, args.k, args.seed, args.first)
    else:
        if args.query is None:
            raise UsageError(f"--strategy {args.strategy} needs --query")
        scores = None
        if args.strategy.startswith("attn"):
            if not args.scores:
                raise UsageError(f"--strategy {args.strategy} needs --scores")
            scores = kio.read_matrix_csv(args.scores)
        C = covisibility_matrix(F)
        sel = select_baseline(args.strategy, args.query, args.k, n_frames=F.shape[0], C=C, attn_scores=scores)
    log.info("k-center cost: %.12g", kcenter_cost(D, sel))
    if args.format == "json":
        _emit(sel.to_json(), args.out)
    else:
        lines = ["rank,frame"] + [f"{r},{i}" for r, i in enumerate(sel.indices)]
        _emit("\n".join(lines) + "\n", args.out)


def _read_entropies(path) -> list[float]:
    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "h_norm" not in rows[0]:
        raise FormatError("expected a CSV with an h_norm column", path, 1)
    out = []
    for lineno, row in enumerate(rows, start=2):
        try:
            out.append(float(row["h_norm"]))
        except (TypeError, ValueError):
            raise FormatError(f"bad h_norm value {row['h_norm']!r}", path, lineno) from None
    return out


def cmd_plan(args) -> None:
    if (args.tau1 is None) != (args.tau2 is None):
        raise UsageError("--tau1 and --tau2 go together")
    if args.tau1 is not None:
        if not args.entropies:
            raise UsageError("entropy thresholds need --entropies")
        plan = entropy_adaptive_plan(_read_entropies(args.entropies), args.tau1, args.tau2, args.sigma)
    else:
        plan = build_layer_plan(args.n_layers, args.l_local, args.l_sample, args.sigma, args.l_late, args.early)
    if args.format == "json":
        _emit(plan.to_json(), args.out)
        return
    grid = TokenGrid(args.grid[0], args.grid[1], args.n_special)
    if args.k > args.frames:
        raise UsageError("--k exceeds --frames")
    report = attention_flop_model(args.frames, grid.tokens_per_frame, args.k, plan, grid, args.dim)
    log.info("attention multiply reduction: %.4f%%", 100 * report.reduction)
    _emit(report_csv(cost_rows(report)), args.out)


def cmd_analyze(args) -> None:
    rows = []
    if args.attention:
        try:
            dump = np.load(args.attention, allow_pickle=False)
        except (OSError, ValueError) as exc:
            raise FormatError(f"cannot read attention dump: {exc}", args.attention) from None
        if dump.ndim != 4:
            raise FormatError(f"dump must be (layers, heads, queries, keys), got shape {dump.shape}", args.attention)
        for layer, w in enumerate(dump):
            st = entropy_stats_from_weights(w, min(args.h_sample, w.shape[0]), min(args.q_sample, w.shape[1]), args.seed)
            rows.append({"layer": layer, "strategy": "full", "n_keys": st.n_keys, "h_norm": st.normalized_entropy, "top1": st.top1_weight})
    else:
        grid = TokenGrid(args.grid[0], args.grid[1], args.n_special)
        model = build_toy_model(args.n_layers, args.dim, args.heads, args.seed)
        batch = random_batch(args.frames, grid, args.dim, args.seed)
        h = min(args.h_sample, args.heads)
        q = min(args.q_sample, args.frames * grid.tokens_per_frame)
        full = layer_multiplies(None, args.frames, args.frames, grid, args.dim)

        def hook(layer, inp, token_set):
            st = attention_entropy_stats(inp, None, h, q, args.seed)
            rows.append({
                "layer": layer, "strategy": "full", "n_keys": st.n_keys, "h_norm": st.normalized_entropy,
                "top1": st.top1_weight, "multiplies": full, "reduction_pct": 0.0,
            })

        forward(model, batch, hook=hook)
    if args.tau1 is not None or args.tau2 is not None:
        if args.tau1 is None or args.tau2 is None:
            raise UsageError("--tau1 and --tau2 go together")
        plan = entropy_adaptive_plan([r["h_norm"] for r in rows], args.tau1, args.tau2, args.sigma)
        if args.plan_out:
            Path(args.plan_out).write_text(plan.to_json(), encoding="utf-8")
        else:
            log.info("entropy plan: %s", json.dumps(plan.to_dict()["strategies"]))
    if args.format == "csv":
        _emit(report_csv(rows), args.out)
    else:
        _emit(kio.dumps_json(rows), args.out)


def cmd_bench(args) -> None:
    grid = TokenGrid(args.grid[0], args.grid[1], args.n_special)
    model = build_toy_model(args.n_layers, args.dim, args.heads, args.seed)
    plan = build_layer_plan(args.n_layers, args.l_local, args.l_sample, args.sigma, args.l_late)
    threads = os.environ.get("GTH_THREADS", "unset")
    log.info("bench: %d global layers, grid %dx%d+%d, k=%d, GTH_THREADS=%s", args.n_layers, *args.grid, args.n_special, args.k, threads)
    rows = benchmark_scaling(model, args.frames, args.k, grid, plan, args.repeats, args.seed)
    if args.format == "csv":
        _emit(scaling_csv(rows), args.out)
    else:
        _emit(kio.dumps_json([r.as_dict() for r in rows]), args.out)


def _pair(a, b, name):
    if (a is None) != (b is None):
        raise UsageError(f"{name} metrics need both ground-truth and prediction files")
    return a is not None


def cmd_metrics(args) -> None:
    report: dict = {}
    if _pair(args.gt_traj, args.est_traj, "trajectory"):
        gt = Trajectory(*kio.read_trajectory_csv(args.gt_traj))
        est = Trajectory(*kio.read_trajectory_csv(args.est_traj))
        aligned = est if args.align == "none" else align_trajectories(gt, est, with_scale=args.align == "sim3")
        rot, trans = rpe(gt, aligned, args.delta)
        report["trajectory"] = {"alignment": args.align, "delta": args.delta, "ate": ate(gt, aligned), "rpe_rot_deg": rot, "rpe_trans": trans}
    if _pair(args.gt_cloud, args.pred_cloud, "point cloud"):
        gp, gn = kio.read_cloud_csv(args.gt_cloud)
        pp, pn = kio.read_cloud_csv(args.pred_cloud)
        report["cloud"] = cloud_metrics(PointCloud(pp, pn), PointCloud(gp, gn)).as_dict()
    if _pair(args.gt_depth, args.pred_depth, "depth"):
        pair = DepthPair(kio.read_depth(args.gt_depth), kio.read_depth(args.pred_depth))
        d = depth_metrics(pair, args.median_scale).as_dict()
        d["scaling"] = "median" if args.median_scale else "none"
        report["depth"] = d
    if not report:
        raise UsageError("give at least one pair of --gt-*/--est-*/--pred-* files")
    _emit(kio.dumps_json(report), args.out)


COMMANDS = {"select": cmd_select, "plan": cmd_plan, "analyze": cmd_analyze, "bench": cmd_bench, "metrics": cmd_metrics}


def _thread_limit():
    value = os.environ.get("GTH_THREADS")
    if not value:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(value))


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        with _thread_limit():
            COMMANDS[args.command](args)
    except (UsageError, ArgumentError, FormatError, FileNotFoundError) as exc:
        print(f"kvselect {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"kvselect {args.command}: error: {exc}", file=sys.stderr)
        return 1
    finally:
        log.removeHandler(handler)
    return 0


if __name__ == "__main__":
    sys.exit(main())
