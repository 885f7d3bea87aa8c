"""Attach externally generated masks to box annotations, filter, deduplicate.

Candidate masks arrive keyed by (image_id, box index), where boxes are
numbered over the flattened triplet list: subject then object of the first
triplet, then the second, and so on. For every box the highest-agreement
candidate is kept, candidates whose agreement with the source box falls
below the filter threshold are rejected, and surviving masks are greedily
deduplicated in box order. Triplets whose subject or object ends up without
a mask are dropped and reported.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


from .data import Dataset, Entity, GtTriplet, ImageRecord
from .errors import InputError, ParseError
from .mask import BBox, RleMask, box_iou, box_to_rle, mask_iou, mask_to_box, nms_dedup

FILTER_THRESHOLD = 0.2
DEDUP_THRESHOLD = 0.1


@dataclass(frozen=True)
class MaskCandidate:
    box_index: int
    mask: RleMask
    box_mask_iou: float = field(default=0.0)


def candidate_iou(box: BBox, mask: RleMask, height: int, width: int,
                  mode: str = "boxes") -> float:
    """Agreement between a source box and a candidate mask.

    mode="boxes" compares the box against the mask's tight box;
    mode="pixels" compares the rasterised box region against the mask.
    Empty masks score 0 under either mode.
    """
    if mask.height != height or mask.width != width:
        raise InputError(
            f"candidate mask extent {mask.height}x{mask.width} does not match "
            f"image {height}x{width}"
        )
    if mask.area == 0:
        return 0.0
    if mode == "boxes":
        return box_iou(box, mask_to_box(mask))
    if mode == "pixels":
        return mask_iou(box_to_rle(box, height, width), mask)
    raise InputError(f"unknown agreement mode {mode!r}")


@dataclass
class IngestReport:
    total_candidates: int = 0
    retained: int = 0
    rejections: list[dict] = field(default_factory=list)
    dropped_triplets: list[dict] = field(default_factory=list)

    def reason_counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.rejections:
            out[r["reason"]] = out.get(r["reason"], 0) + 1
        return out

    def to_json(self) -> dict:
        return {
            "total_candidates": self.total_candidates,
            "retained": self.retained,
            "reason_counts": self.reason_counts(),
            "rejections": sorted(
                self.rejections, key=lambda r: (r["image_id"], r["box_index"], r.get("rank", 0))
            ),
            "dropped_triplets": sorted(
                self.dropped_triplets, key=lambda r: (r["image_id"], r["triplet"])
            ),
        }


def retention_rate(report: IngestReport) -> float:
    if report.total_candidates == 0:
        raise InputError("retention rate is undefined for zero candidates")
    return report.retained / report.total_candidates


def image_boxes(image: ImageRecord) -> list[tuple[int, int, str, BBox | None]]:
    """Flattened (box_index, triplet index, role, box) list for one image."""
    out = []
    idx = 0
    for ti, t in enumerate(image.gt):
        out.append((idx, ti, "sub", t.subject.box))
        idx += 1
        if t.object is not None:
            out.append((idx, ti, "obj", t.object.box))
            idx += 1
    return out


def attach_masks(dataset: Dataset, candidates: dict[str, list[MaskCandidate]],
                 filter_threshold: float = FILTER_THRESHOLD,
                 dedup_threshold: float = DEDUP_THRESHOLD,
                 agreement: str = "boxes") -> tuple[Dataset, IngestReport]:
    """Build a masked dataset from box annotations plus candidate masks."""
    if not 0.0 < filter_threshold <= 1.0:
        raise InputError(f"filter threshold must be in (0, 1], got {filter_threshold}")
    report = IngestReport()
    by_id = dataset.by_id()
    for image_id in candidates:
        if image_id not in by_id:
            raise InputError(f"candidates reference unknown image {image_id!r}")

    images = []
    for im in dataset.images:
        boxes = image_boxes(im)
        n_boxes = len(boxes)
        per_box: dict[int, list[MaskCandidate]] = {}
        for cand in candidates.get(im.image_id, []):
            if cand.box_index < 0:
                raise InputError(
                    f"candidate box index {cand.box_index} is negative "
                    f"(image {im.image_id!r})"
                )
            report.total_candidates += 1
            if cand.box_index >= n_boxes:
                # boxes can disappear between passes (dropped triplets), so a
                # dangling reference is a reported rejection, not an error
                report.rejections.append(
                    {"image_id": im.image_id, "box_index": cand.box_index,
                     "rank": 0, "reason": "dangling_box_index"})
                continue
            per_box.setdefault(cand.box_index, []).append(cand)

        # Pick the best candidate per box, filter by agreement.
        best: dict[int, tuple[RleMask, float]] = {}
        for bi, ti, role, box in boxes:
            entrants = per_box.get(bi, [])
            if not entrants:
                continue
            if box is None:
                for rank, cand in enumerate(entrants):
                    report.rejections.append(
                        {"image_id": im.image_id, "box_index": bi, "rank": rank,
                         "reason": "no_source_box"})
                continue
            scored = [
                (candidate_iou(box, c.mask, im.height, im.width, agreement), rank, c)
                for rank, c in enumerate(entrants)
            ]
            best_rank = max(range(len(scored)), key=lambda k: (scored[k][0], -scored[k][1]))
            for k, (iou, rank, cand) in enumerate(scored):
                if k == best_rank:
                    continue
                report.rejections.append(
                    {"image_id": im.image_id, "box_index": bi, "rank": rank,
                     "reason": "superseded", "iou": iou})
            iou, rank, cand = scored[best_rank]
            if iou < filter_threshold:
                report.rejections.append(
                    {"image_id": im.image_id, "box_index": bi, "rank": rank,
                     "reason": "below_threshold", "iou": iou})
                continue
            best[bi] = (cand.mask, iou)

        # Deduplicate surviving masks in box order.
        order = sorted(best)
        keep = nms_dedup([best[bi][0] for bi in order], dedup_threshold)
        kept_set = {order[k] for k in keep}
        for pos, bi in enumerate(order):
            if pos not in keep:
                report.rejections.append(
                    {"image_id": im.image_id, "box_index": bi, "rank": 0,
                     "reason": "duplicate", "iou": best[bi][1]})
        report.retained += len(kept_set)

        mask_for_box = {bi: best[bi][0] for bi in kept_set}
        # Entities that already carry masks pass through untouched, which
        # makes re-running the conversion on its own output a no-op.
        new_gt = []
        for ti, t in enumerate(im.gt):
            roles = [(bi, role) for bi, tti, role, _ in boxes if tti == ti]
            sub_mask = t.subject.mask
            obj_mask = t.object.mask if t.object is not None else None
            for bi, role in roles:
                if role == "sub" and sub_mask is None:
                    sub_mask = mask_for_box.get(bi)
                elif role == "obj" and obj_mask is None:
                    obj_mask = mask_for_box.get(bi)
            missing = sub_mask is None or (t.object is not None and obj_mask is None)
            if missing:
                report.dropped_triplets.append(
                    {"image_id": im.image_id, "triplet": ti, "reason": "no mask"})
                continue
            new_gt.append(GtTriplet(
                subject=Entity(t.subject.category_id, box=t.subject.box, mask=sub_mask),
                object=None if t.object is None else
                Entity(t.object.category_id, box=t.object.box, mask=obj_mask),
                predicate_ids=t.predicate_ids,
            ))
        images.append(ImageRecord(image_id=im.image_id, height=im.height,
                                  width=im.width, gt=new_gt, preds=list(im.preds)))
    return Dataset(images=images, catalog=dataset.catalog), report


def load_candidates(path: str | Path) -> dict[str, list[MaskCandidate]]:
    """Candidate file: JSONL of {"image_id", "candidates":
    [{"box_index", "mask": {"size", "counts"}}]}."""
    path = Path(path)
    if not path.exists():
        raise ParseError(f"candidate file not found: {path}")
    out: dict[str, list[MaskCandidate]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                image_id = str(obj["image_id"])
                bucket = out.setdefault(image_id, [])
                for c in obj.get("candidates") or []:
                    bucket.append(MaskCandidate(
                        box_index=int(c["box_index"]),
                        mask=RleMask.from_json(c["mask"]),
                    ))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad candidate record: {exc}", str(path), lineno) from exc
    return out
