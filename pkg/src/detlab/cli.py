"""Command-line entry point.

Subcommands: gen | assign | gap | nms-bench | cost | fuse | rank |
allocate. All outputs are deterministic given the input files and seed.
Exit codes: 0 success, 2 parse/config/data error, 3 internal invariant
violation; errors print a single line ``detlab: error: <category>: ...``
to stderr.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .archive import read_archive, write_archive
from .dataio import load_config, parse_dataset
from .errors import ConfigError, DetlabError, InternalError
from .rank_design import CommandEvaluator, TableEvaluator
from .reports import (
    allocation_report,
    assignment_report,
    bench_report,
    cost_table,
    fuse_archive,
    gap_report,
    rank_csv,
    rank_report_from_archive,
    rank_report_from_dict,
)
from .serialize import dump_canonical, load_json
from .synth import PROFILES, generate_synthetic


def _write_text(path: str, text: str) -> None:
    Path(path).write_text(text, encoding="utf-8")


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--o2m-alpha", type=float, dest="o2m_alpha")
    p.add_argument("--o2m-beta", type=float, dest="o2m_beta")
    p.add_argument("--topk", type=int)
    p.add_argument("--o2o-alpha", type=float, dest="o2o_alpha")
    p.add_argument("--o2o-beta", type=float, dest="o2o_beta")
    p.add_argument("--iou-thresh", type=float, dest="nms_iou_thresh")
    p.add_argument("--score-thresh", type=float, dest="nms_score_thresh")
    p.add_argument("--max-det", type=int, dest="max_det")
    p.add_argument("--workers", type=int)


_CONFIG_KEYS = (
    "o2m_alpha",
    "o2m_beta",
    "topk",
    "o2o_alpha",
    "o2o_beta",
    "nms_iou_thresh",
    "nms_score_thresh",
    "max_det",
    "workers",
)


def _config_from_args(args) -> "RunConfig":
    overrides = {key: getattr(args, key, None) for key in _CONFIG_KEYS}
    return load_config(args.config, overrides)


def cmd_gen(args) -> int:
    data = generate_synthetic(
        seed=args.seed,
        num_images=args.images,
        gts_per_image=args.gts_per_image,
        preds_per_gt=args.preds_per_gt,
        noise_profile=args.profile,
        num_classes=args.num_classes,
    )
    dump_canonical(data, args.out)
    return 0


def cmd_assign(args) -> int:
    cfg = _config_from_args(args)
    ds = parse_dataset(args.dataset)
    dump_canonical(assignment_report(ds, cfg), args.out)
    return 0


def cmd_gap(args) -> int:
    cfg = _config_from_args(args)
    ds = parse_dataset(args.dataset)
    dump_canonical(gap_report(ds, cfg), args.out)
    return 0


def cmd_nms_bench(args) -> int:
    cfg = _config_from_args(args)
    ds = parse_dataset(args.dataset)
    report = bench_report(ds, cfg, repeats=args.repeats, class_agnostic=args.class_agnostic)
    _write_text(args.out, report.to_csv())
    return 0


def cmd_cost(args) -> int:
    rows = load_json(args.specs)
    if not isinstance(rows, list):
        raise ConfigError(f"{args.specs}: specs file must be a JSON list")
    _write_text(args.out, cost_table(rows))
    return 0


def cmd_fuse(args) -> int:
    tensors = read_archive(args.archive)
    fused = fuse_archive(
        tensors,
        dw7_name=args.dw7,
        dw3_name=args.dw3,
        fused_name=args.fused_name,
        fold_bn=args.fold_bn,
    )
    write_archive(args.out, fused, inline=args.inline)
    return 0


def cmd_rank(args) -> int:
    tensors = read_archive(args.archive)
    stage_rows = load_json(args.stages)
    if not isinstance(stage_rows, list):
        raise ConfigError(f"{args.stages}: stages file must be a JSON list")
    report = rank_report_from_archive(tensors, stage_rows, threshold_ratio=args.threshold_ratio)
    dump_canonical(report.to_dict(), args.out)
    if args.csv:
        _write_text(args.csv, rank_csv(report))
    return 0


def cmd_allocate(args) -> int:
    ranks = rank_report_from_dict(load_json(args.ranks))
    if bool(args.eval_table) == bool(args.eval_cmd):
        raise ConfigError("provide exactly one of --eval-table or --eval-cmd")
    baseline = args.baseline
    if args.eval_table:
        table = load_json(args.eval_table)
        if not isinstance(table, dict):
            raise ConfigError(f"{args.eval_table}: evaluator table must be a JSON object")
        if baseline is None and "" in table:
            baseline = float(table[""])
        evaluator = TableEvaluator({k: float(v) for k, v in table.items()})
    else:
        evaluator = CommandEvaluator(args.eval_cmd)
    if baseline is None:
        raise ConfigError("--baseline is required (or an empty-key entry in the table)")
    dump_canonical(allocation_report(ranks, evaluator, baseline), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="detlab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--images", type=int, default=20)
    p.add_argument("--gts-per-image", type=int, default=3)
    p.add_argument("--preds-per-gt", type=int, default=8)
    p.add_argument("--profile", choices=PROFILES, default="standard")
    p.add_argument("--num-classes", type=int, default=8)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("assign", help="dual-assignment report with alignment frequencies")
    p.add_argument("--dataset", required=True)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assign)

    p = sub.add_parser("gap", help="per-ground-truth supervision gaps")
    p.add_argument("--dataset", required=True)
    _add_config_flags(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("nms-bench", help="time NMS vs NMS-free selection")
    p.add_argument("--dataset", required=True)
    _add_config_flags(p)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--class-agnostic", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_nms_bench)

    p = sub.add_parser("cost", help="block MAC/parameter cost table")
    p.add_argument("--specs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("fuse", help="fuse a 7x7+3x3 depthwise branch pair")
    p.add_argument("--archive", required=True)
    p.add_argument("--dw7", default="dw7")
    p.add_argument("--dw3", default="dw3")
    p.add_argument("--fused-name", default="fused")
    p.add_argument("--fold-bn", action="store_true")
    p.add_argument("--inline", action="store_true", help="inline tensor data in the manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("rank", help="numerical ranks of stage weights")
    p.add_argument("--archive", required=True)
    p.add_argument("--stages", required=True)
    p.add_argument("--threshold-ratio", type=float, default=0.5)
    p.add_argument("--csv", help="also write a stage_id,rank,normalized_rank CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rank)

    p = sub.add_parser("allocate", help="replay rank-guided block allocation")
    p.add_argument("--ranks", required=True, help="rank report JSON from the rank command")
    p.add_argument("--baseline", type=float)
    p.add_argument("--eval-table", help="JSON object: comma-joined stage ids -> score")
    p.add_argument("--eval-cmd", help="command template with a {stages} placeholder")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_allocate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InternalError as exc:
        print(f"detlab: error: internal: {exc}", file=sys.stderr)
        return 3
    except DetlabError as exc:
        print(f"detlab: error: {exc.category}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"detlab: error: data: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        print(f"detlab: error: internal: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
