"""Command-line front end.

Machine-readable results go to stdout (or --output); progress, summaries and
diagnostics go to stderr. Exit codes: 0 success, 1 input error, 2 constraint
error, 3 internal error. Output files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .data import Dataset, attach_preds, load_catalog, load_gt, load_preds
from .errors import ConstraintError, InputError, VrsEvalError
from .ingest import attach_masks, load_candidates, retention_rate
from .mask import RleMask, mask_iou
from .matching import PRESETS, cost_matrix, hungarian_match, load_weight_presets
from .metrics import TpRule, eval_hoi_map, eval_psg_recall, eval_siou, eval_vcoco_role_ap
from .report import per_category_csv, render_figures, summary_table
from .retrieval import parse_prompt, postprocess_baseline, retrieve
from .splits import (
    eval_split_report,
    load_split,
    make_uc_split,
    make_uo_split,
    make_uv_split,
    report_per_relation_ap,
)

TASKS = ("hico", "vcoco", "psg", "vrd")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are input errors, not exit 2
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _log(msg: str):
    print(msg, file=sys.stderr)


def _atomic_write(path: str | Path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, output: str | None):
    if output and output != "-":
        _atomic_write(output, text)
    else:
        sys.stdout.write(text)


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _default_threads() -> int:
    env = os.environ.get("VRSEVAL_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _add_common(p: _Parser):
    p.add_argument("--task", choices=TASKS, default="hico", help="dataset preset")
    p.add_argument("--catalog", help="path to a custom catalog JSON (overrides --task)")
    p.add_argument("--keep-flagged-predicates", action="store_true",
                   help="keep predicates the catalog flags for dropping (no_interaction)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: $VRSEVAL_THREADS or cpu count)")
    p.add_argument("--output", "-o", help="output path ('-' or omitted: stdout)")


def _get_catalog(args):
    source = args.catalog if args.catalog else args.task
    return load_catalog(source, drop_flagged_predicates=not args.keep_flagged_predicates)


def _load_dataset(args, gt_path: str, preds_path: str | None) -> Dataset:
    catalog = _get_catalog(args)
    dataset = load_gt(gt_path, catalog=catalog)
    if preds_path:
        preds = load_preds(preds_path, catalog, known_ids=[im.image_id for im in dataset.images])
        dataset = attach_preds(dataset, preds)
    return dataset


# ---------------------------------------------------------------------------
# subcommands


def cmd_convert(args) -> int:
    dataset = _load_dataset(args, args.gt, None)
    candidates = load_candidates(args.candidates)
    converted, report = attach_masks(
        dataset, candidates,
        filter_threshold=args.filter_thresh,
        dedup_threshold=args.dedup_thresh,
        agreement=args.agreement,
    )
    out = Path(args.output) if args.output and args.output != "-" else None
    if out is None:
        for im in converted.images:
            from .data import dumps_record

            sys.stdout.write(dumps_record(im) + "\n")
    else:
        buf = []
        from .data import dumps_record

        for im in converted.images:
            buf.append(dumps_record(im))
        _atomic_write(out, "\n".join(buf) + ("\n" if buf else ""))
    report_json = report.to_json()
    if report.total_candidates:
        report_json["retention_rate"] = retention_rate(report)
    if args.report:
        _atomic_write(args.report, _dump_json(report_json))
    _log(f"retained {report.retained}/{report.total_candidates} candidate masks; "
         f"dropped {len(report.dropped_triplets)} triplets")
    return 0


def _figure_dir(args) -> Path | None:
    mode = getattr(args, "figures", "auto")
    if mode == "none":
        return None
    if mode and mode != "auto":
        return Path(mode)
    if args.output and args.output != "-":
        return Path(args.output).parent
    return None


def _emit_report(args, report) -> None:
    text = _dump_json(report.to_json())
    _emit(text, args.output)
    _log(summary_table(report).rstrip("\n"))
    if args.output and args.output != "-":
        stem = Path(args.output).stem
        _atomic_write(Path(args.output).parent / f"{stem}.summary.txt", summary_table(report))
        _atomic_write(Path(args.output).parent / f"{stem}.per_category.csv",
                      per_category_csv(report))
    fig_dir = _figure_dir(args)
    if fig_dir is not None:
        stem = Path(args.output).stem if args.output and args.output != "-" else report.protocol
        for p in render_figures(report, fig_dir, stem):
            _log(f"figure: {p}")


def cmd_eval(args) -> int:
    dataset = _load_dataset(args, args.gt, args.preds)
    rule = TpRule(localization=args.loc, iou_threshold=args.iou_thresh)
    threads = args.threads if args.threads is not None else _default_threads()
    if args.task in ("hico",) or (args.task == "vrd" and dataset.catalog.relation_classes):
        report = eval_hoi_map(dataset, rule, top_k=args.topk, threads=threads)
    elif args.task == "vcoco":
        s1 = eval_vcoco_role_ap(dataset, "s1", rule, threads=threads)
        s2 = eval_vcoco_role_ap(dataset, "s2", rule, threads=threads)
        s1.aggregates.update(s2.aggregates)
        s1.protocol = "vcoco_role_ap"
        report = s1
    elif args.task == "psg":
        report = eval_psg_recall(dataset, rule, ks=args.ks, threads=threads)
    else:  # vrd without a relation table: prompted localisation quality
        report = eval_siou(dataset)
    if args.split:
        split = load_split(args.split)
        extra, flags = eval_split_report(report_per_relation_ap(report), split)
        report.aggregates.update(extra)
        report.flags.extend(flags)
    _emit_report(args, report)
    return 0


def cmd_make_splits(args) -> int:
    catalog = _get_catalog(args)
    if args.kind in ("rf-uc", "nf-uc"):
        split = make_uc_split(
            catalog,
            "rare_first" if args.kind == "rf-uc" else "nonrare_first",
            n_unseen=args.n if args.n is not None else 115,
        )
    elif args.kind == "uo":
        objects = None
        if args.use_fixture_objects:
            objects = list(catalog.uo_unseen_objects)
            if not objects:
                raise InputError("catalog carries no fixture object list")
        split = make_uo_split(catalog, n_unseen_objects=args.n if args.n is not None else 12,
                              seed=args.seed, objects=objects)
    else:
        split = make_uv_split(catalog, n_unseen_verbs=args.n if args.n is not None else 20,
                              seed=args.seed)
    text = _dump_json(split.to_json())
    _emit(text, args.output)
    _log(f"{split.kind}: {len(split.unseen)} unseen / {len(split.seen)} seen "
         f"/ {len(split.unseen) + len(split.seen)} total relation classes")
    return 0


def _iter_prompt_lines(path: str):
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                try:
                    yield lineno, json.loads(line)
                except json.JSONDecodeError as exc:
                    raise InputError(f"bad prompt line {lineno}: {exc}") from exc
            else:
                yield lineno, {"prompt": line}


def cmd_eval_prompt(args) -> int:
    dataset = _load_dataset(args, args.gt, args.preds)
    by_id = dataset.by_id()
    results = []
    siou_images = []
    for lineno, rec in _iter_prompt_lines(args.prompts):
        query = parse_prompt(rec["prompt"])
        image_id = rec.get("image_id")
        if image_id is None:
            if len(dataset.images) != 1:
                raise InputError(
                    f"prompt line {lineno} names no image_id and the dataset has "
                    f"{len(dataset.images)} images")
            image = dataset.images[0]
        else:
            image = by_id.get(str(image_id))
            if image is None:
                raise InputError(f"prompt line {lineno} references unknown image {image_id!r}")
        if args.baseline:
            selected = postprocess_baseline(image.preds, query, dataset.catalog, k=args.k)
            method = "baseline"
        else:
            feature = rec.get("feature")
            if feature is None:
                raise InputError(
                    f"prompt line {lineno} carries no feature vector; use --baseline "
                    "for confidence-ranked retrieval")
            selected = retrieve(image.preds, np.asarray(feature, dtype=np.float64),
                                query, dataset.catalog, k=args.k, cosine=args.cosine)
            method = "similarity"
        results.append({
            "image_id": image.image_id,
            "prompt": query.render(),
            "method": method,
            "selected": selected,
        })
        gt_index = int(rec.get("gt_index", 0))
        if image.gt and 0 <= gt_index < len(image.gt):
            from .data import ImageRecord

            siou_images.append(ImageRecord(
                image_id=f"{image.image_id}#{lineno}",
                height=image.height, width=image.width,
                gt=[image.gt[gt_index]],
                preds=[image.preds[selected[0]]] if selected else [],
            ))
    payload: dict = {"prompts": results}
    if siou_images:
        siou = eval_siou(Dataset(images=siou_images, catalog=dataset.catalog))
        payload["siou"] = siou.to_json()
        _log(summary_table(siou).rstrip("\n"))
    _emit(_dump_json(payload), args.output)
    return 0


def cmd_match_debug(args) -> int:
    presets = load_weight_presets(args.weights_config) if args.weights_config else dict(PRESETS)
    if args.weights_preset not in presets:
        raise InputError(f"unknown weight preset {args.weights_preset!r}; "
                         f"have {sorted(presets)}")
    weights = presets[args.weights_preset]
    if args.cost_matrix:
        try:
            raw = json.loads(Path(args.cost_matrix).read_text())
            costs = np.asarray(raw["costs"], dtype=np.float64)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            raise InputError(f"cannot read cost matrix: {exc}") from exc
        assignment = hungarian_match(costs)
        payload = {
            "assignment": {"pairs": [list(p) for p in assignment.pairs],
                           "total_cost": assignment.total_cost},
        }
        _emit(_dump_json(payload), args.output)
        return 0
    if not args.gt:
        raise InputError("match-debug needs --gt/--preds or --cost-matrix")
    dataset = _load_dataset(args, args.gt, args.preds)
    images = []
    for im in dataset.images:
        costs = cost_matrix(im.preds, im.gt, weights, class_cost=args.class_cost)
        assignment = hungarian_match(costs)
        images.append({
            "image_id": im.image_id,
            "cost_matrix": [[float(v) for v in row] for row in costs],
            "assignment": {"pairs": [list(p) for p in assignment.pairs],
                           "total_cost": assignment.total_cost},
        })
    _emit(_dump_json({"images": images, "weights": args.weights_preset}), args.output)
    return 0


def cmd_mask_iou(args) -> int:
    source = sys.stdin if args.pairs == "-" else open(args.pairs, "r", encoding="utf-8")
    try:
        raw = json.load(source)
    except json.JSONDecodeError as exc:
        raise InputError(f"bad pairs file: {exc}") from exc
    finally:
        if source is not sys.stdin:
            source.close()
    try:
        pairs = [(RleMask.from_json(a), RleMask.from_json(b)) for a, b in raw["pairs"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad pairs file: {exc}") from exc
    values = [mask_iou(a, b) for a, b in pairs]
    _emit(_dump_json({"iou": values}), args.output)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> _Parser:
    parser = _Parser(prog="vrseval",
                     description="Visual relationship segmentation evaluation toolkit")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[], help="attach candidate masks to box annotations")
    _add_common(p)
    p.add_argument("--gt", required=True, help="ground-truth annotations (JSONL or native JSON)")
    p.add_argument("--candidates", required=True, help="candidate mask JSONL")
    p.add_argument("--filter-thresh", type=float, default=0.2,
                   help="minimum box/mask agreement (default 0.2)")
    p.add_argument("--dedup-thresh", type=float, default=0.1,
                   help="duplicate-suppression IoU (default 0.1)")
    p.add_argument("--agreement", choices=("boxes", "pixels"), default="boxes",
                   help="how box/mask agreement is measured")
    p.add_argument("--report", help="write the rejection report JSON here")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("eval", help="run the task preset's evaluation protocol")
    _add_common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--preds", help="predictions JSONL (omit when embedded in --gt)")
    p.add_argument("--loc", choices=("box", "mask"), default="mask",
                   help="localisation geometry for the TP rule")
    p.add_argument("--iou-thresh", type=float, default=0.5)
    p.add_argument("--topk", type=int, default=100, help="per-image detection budget")
    p.add_argument("--ks", type=lambda s: [int(k) for k in s.split(",")],
                   default=[20, 50, 100], help="recall cutoffs for the psg preset")
    p.add_argument("--split", help="zero-shot split JSON; adds unseen/seen/full means")
    p.add_argument("--figures", default="auto",
                   help="'auto' (next to --output), 'none', or a directory")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("make-splits", help="construct a zero-shot split")
    _add_common(p)
    p.add_argument("--kind", choices=("rf-uc", "nf-uc", "uo", "uv"), required=True)
    p.add_argument("--n", type=int, default=None, help="unseen relation/category budget")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--use-fixture-objects", action="store_true",
                   help="uo: use the catalog's bundled unseen-object list")
    p.set_defaults(func=cmd_make_splits)

    p = sub.add_parser("eval-prompt", help="score prompt-conditioned retrieval")
    _add_common(p)
    p.add_argument("--prompts", required=True,
                   help="one tagged prompt per line, or JSONL with prompt/feature/image_id")
    p.add_argument("--gt", required=True)
    p.add_argument("--preds")
    p.add_argument("--k", type=int, default=10, help="retrieval budget")
    p.add_argument("--baseline", action="store_true",
                   help="rank by standard confidence instead of prompt similarity")
    p.add_argument("--cosine", action="store_true", help="cosine instead of dot similarity")
    p.set_defaults(func=cmd_eval_prompt)

    p = sub.add_parser("match-debug", help="dump matching cost matrices and assignments")
    _add_common(p)
    p.add_argument("--gt")
    p.add_argument("--preds")
    p.add_argument("--cost-matrix", help="solve a raw cost matrix JSON instead")
    p.add_argument("--weights-preset", default="default")
    p.add_argument("--weights-config", help="JSON file with extra weight presets")
    p.add_argument("--class-cost", choices=("neg_prob", "ce"), default="neg_prob")
    p.set_defaults(func=cmd_match_debug)

    p = sub.add_parser("mask-iou", help="batch IoU over RLE mask pairs")
    p.add_argument("--pairs", required=True, help="JSON {'pairs': [[rle, rle], ...]} or '-'")
    p.add_argument("--output", "-o")
    p.set_defaults(func=cmd_mask_iou)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConstraintError as exc:
        print(f"constraint error: {exc}", file=sys.stderr)
        return 2
    except (InputError, FileNotFoundError, ValueError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 1
    except VrsEvalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 -- the CLI must never traceback
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
