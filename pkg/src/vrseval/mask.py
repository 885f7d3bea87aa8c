"""Mask and box primitives: RLE codec, IoU, box conversions, NMS dedup.

Masks are run-length encoded in column-major pixel order with a leading
background run (possibly of length zero), the convention used by COCO-style
annotation files. All IoU arithmetic happens in integer interval space over
the flattened pixel index, so results are bit-identical to a dense bitmap
computation without ever materialising one.

Boxes are half-open in pixel space: [x1, x2) x [y1, y2). With that convention
an axis-aligned integer box and its filled mask have exactly equal area, so
box<->mask round trips are lossless for rectangles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, origin top-left, half-open extents."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        for v in (self.x1, self.y1, self.x2, self.y2):
            if not math.isfinite(v):
                raise ValueError(f"box coordinates must be finite, got {self}")
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise ValueError(f"box must satisfy x1 <= x2 and y1 <= y2, got {self}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def to_list(self) -> list[float]:
        return [self.x1, self.y1, self.x2, self.y2]


class RleMask:
    """Run-length encoded binary mask.

    `runs` alternate lengths of background and foreground pixels in
    column-major order, starting with a background run. A trailing
    zero-length run is stripped on construction; interior runs must be
    positive and the run lengths must sum to height*width.
    """

    __slots__ = ("height", "width", "runs", "_starts", "_ends", "_cumlen", "_box")

    def __init__(self, height: int, width: int, runs):
        if height <= 0 or width <= 0:
            raise ValueError(f"mask dimensions must be positive, got {height}x{width}")
        arr = np.array(runs, dtype=np.int64, copy=True)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("runs must be a non-empty 1-d sequence")
        if arr.size > 1 and arr[-1] == 0:
            arr = arr[:-1]
        if np.any(arr < 0):
            raise ValueError("corrupt mask: negative run length")
        if arr.size > 1 and np.any(arr[1:] == 0):
            raise ValueError("corrupt mask: zero-length interior run")
        total = int(arr.sum())
        if total != height * width:
            raise ValueError(
                f"corrupt mask: run lengths sum to {total}, expected {height * width}"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "height", int(height))
        object.__setattr__(self, "width", int(width))
        object.__setattr__(self, "runs", arr)
        object.__setattr__(self, "_starts", None)
        object.__setattr__(self, "_ends", None)
        object.__setattr__(self, "_cumlen", None)
        object.__setattr__(self, "_box", None)

    def __setattr__(self, name, value):
        raise AttributeError("RleMask is immutable")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RleMask)
            and self.height == other.height
            and self.width == other.width
            and self.runs.shape == other.runs.shape
            and bool(np.all(self.runs == other.runs))
        )

    def __repr__(self) -> str:
        return f"RleMask({self.height}x{self.width}, area={self.area})"

    def _ensure_intervals(self):
        if self._starts is not None:
            return
        bounds = np.concatenate(([0], np.cumsum(self.runs)))
        n_fg = self.runs.size // 2
        starts = bounds[1 : 2 * n_fg : 2]
        ends = bounds[2 : 2 * n_fg + 1 : 2]
        cumlen = np.concatenate(([0], np.cumsum(ends - starts)))
        object.__setattr__(self, "_starts", starts)
        object.__setattr__(self, "_ends", ends)
        object.__setattr__(self, "_cumlen", cumlen)

    @property
    def intervals(self) -> tuple[np.ndarray, np.ndarray]:
        """Foreground [start, end) intervals over the flat column-major index."""
        self._ensure_intervals()
        return self._starts, self._ends

    @property
    def area(self) -> int:
        self._ensure_intervals()
        return int(self._cumlen[-1])

    def coverage_before(self, points: np.ndarray) -> np.ndarray:
        """Foreground pixel count of this mask in [0, p) for each query point.

        Exact integer arithmetic over the interval representation.
        """
        self._ensure_intervals()
        starts, ends, cumlen = self._starts, self._ends, self._cumlen
        if starts.size == 0:
            return np.zeros(points.shape, dtype=np.int64)
        j = np.searchsorted(ends, points, side="left")
        inside = j < starts.size
        # For p <= ends[j] the partial overlap with interval j is p - starts[j],
        # floored at zero; intervals before j are fully covered by cumlen[j].
        jc = np.minimum(j, starts.size - 1)
        partial = np.where(inside, np.maximum(points - starts[jc], 0), 0)
        return cumlen[j] + partial

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": [int(r) for r in self.runs]}

    @classmethod
    def from_json(cls, obj: dict) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise ValueError(f"malformed RLE object: {exc}") from exc
        return cls(int(h), int(w), counts)


def rle_encode(bitmap: np.ndarray) -> RleMask:
    """Encode a dense binary mask; inverse of `rle_decode`."""
    bitmap = np.asarray(bitmap)
    if bitmap.ndim != 2:
        raise ValueError(f"expected a 2-d bitmap, got shape {bitmap.shape}")
    h, w = bitmap.shape
    if h == 0 or w == 0:
        raise ValueError(f"mask dimensions must be positive, got {h}x{w}")
    flat = bitmap.astype(bool).ravel(order="F")
    # Sentinels on both sides turn every run boundary into a diff != 0.
    padded = np.concatenate(([~flat[0]], flat, [~flat[-1]]))
    edges = np.nonzero(padded[1:] != padded[:-1])[0]
    runs = np.diff(edges)
    if flat[0]:
        runs = np.concatenate(([0], runs))
    return RleMask(h, w, runs)


def rle_decode(mask: RleMask) -> np.ndarray:
    """Materialise the dense boolean mask of shape (height, width)."""
    values = np.zeros(mask.runs.size, dtype=bool)
    values[1::2] = True
    flat = np.repeat(values, mask.runs)
    return flat.reshape((mask.height, mask.width), order="F")


def _check_same_extent(a: RleMask, b: RleMask):
    if a.height != b.height or a.width != b.width:
        raise ValueError(
            f"mask dimensions differ: {a.height}x{a.width} vs {b.height}x{b.width}"
        )


def rle_intersection(a: RleMask, b: RleMask) -> int:
    """Exact foreground overlap in pixels."""
    _check_same_extent(a, b)
    starts, ends = a.intervals
    if starts.size == 0 or b.area == 0:
        return 0
    return int((b.coverage_before(ends) - b.coverage_before(starts)).sum())


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection over union; 0.0 when both masks are empty."""
    inter = rle_intersection(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 0.0
    return inter / union


def _tight_boxes(masks: Sequence[RleMask]) -> np.ndarray:
    """Integer tight boxes as rows [x1, y1, x2, y2]; empty masks give zeros."""
    out = np.zeros((len(masks), 4), dtype=np.int64)
    for i, m in enumerate(masks):
        if m.area:
            b = mask_to_box(m)
            out[i] = (int(b.x1), int(b.y1), int(b.x2), int(b.y2))
    return out


def mask_iou_matrix(
    masks_a: Sequence[RleMask],
    masks_b: Sequence[RleMask],
    min_iou: float | None = None,
) -> np.ndarray:
    """Pairwise IoU matrix, shape (len(masks_a), len(masks_b)).

    When `min_iou` is given, pairs whose IoU provably cannot exceed it are
    reported as 0.0 without running the exact computation; every non-zero
    entry is always exact. With `min_iou=None` all entries are exact.
    """
    na, nb = len(masks_a), len(masks_b)
    out = np.zeros((na, nb), dtype=np.float64)
    if na == 0 or nb == 0:
        return out
    for m in list(masks_a) + list(masks_b):
        _check_same_extent(masks_a[0], m)

    areas_a = np.array([m.area for m in masks_a], dtype=np.int64)
    areas_b = np.array([m.area for m in masks_b], dtype=np.int64)

    if min_iou is not None:
        # Bounding-box overlap caps the intersection, which in turn bounds IoU
        # from above; pairs whose bound cannot clear min_iou are skipped.
        ba = _tight_boxes(masks_a)
        bb = _tight_boxes(masks_b)
        iw = np.minimum(ba[:, None, 2], bb[None, :, 2]) - np.maximum(ba[:, None, 0], bb[None, :, 0])
        ih = np.minimum(ba[:, None, 3], bb[None, :, 3]) - np.maximum(ba[:, None, 1], bb[None, :, 1])
        cap = np.maximum(iw, 0) * np.maximum(ih, 0)
        cap = np.minimum(cap, np.minimum(areas_a[:, None], areas_b[None, :]))
        denom = np.maximum(areas_a[:, None] + areas_b[None, :] - cap, 1)
        needed = (cap / denom) > min_iou
    else:
        needed = np.ones((na, nb), dtype=bool)

    bounds: list[np.ndarray | None] = [None] * na
    nonempty_a = areas_a > 0
    for j in range(nb):
        if areas_b[j] == 0:
            continue
        rows = np.nonzero(needed[:, j] & nonempty_a)[0]
        if rows.size == 0:
            continue
        parts = []
        for i in rows:
            if bounds[i] is None:
                s, e = masks_a[i].intervals
                bounds[i] = np.concatenate((s, e))
            parts.append(bounds[i])
        queries = np.concatenate(parts)
        cov = masks_b[j].coverage_before(queries)
        offset = 0
        for i in rows:
            size = bounds[i].size
            half = size // 2
            seg = cov[offset : offset + size]
            inter = int(seg[half:].sum() - seg[:half].sum())
            union = int(areas_a[i]) + int(areas_b[j]) - inter
            if union > 0:
                out[i, j] = inter / union
            offset += size
    return out


def box_iou(a: BBox, b: BBox) -> float:
    """Area IoU of half-open boxes; degenerate boxes always score 0."""
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def mask_to_box(mask: RleMask) -> BBox:
    """Tight half-open bounding box of the foreground pixels."""
    if mask._box is not None:
        return mask._box
    starts, ends = mask.intervals
    if starts.size == 0:
        raise ValueError("cannot compute the bounding box of an empty mask")
    h = mask.height
    last = ends - 1
    c1 = starts // h
    c2 = last // h
    x1 = int(c1.min())
    x2 = int(c2.max()) + 1
    if bool((c2 > c1).any()):
        # Some interval wraps a column boundary, so every row is touched.
        y1, y2 = 0, h
    else:
        y1 = int((starts % h).min())
        y2 = int((last % h).max()) + 1
    box = BBox(float(x1), float(y1), float(x2), float(y2))
    object.__setattr__(mask, "_box", box)
    return box


def box_to_rle(box: BBox, height: int, width: int) -> RleMask:
    """Rasterise a box into a filled mask.

    Pixel (r, c) is foreground iff its integer coordinates fall inside the
    half-open box after clipping to the image.
    """
    if height <= 0 or width <= 0:
        raise ValueError(f"mask dimensions must be positive, got {height}x{width}")
    c1 = max(0, math.ceil(box.x1))
    c2 = min(width, math.ceil(box.x2))
    r1 = max(0, math.ceil(box.y1))
    r2 = min(height, math.ceil(box.y2))
    if c1 >= c2 or r1 >= r2:
        return RleMask(height, width, np.array([height * width], dtype=np.int64))
    n = c2 - c1
    span = r2 - r1
    if span == height:
        runs = np.array([c1 * height, n * height,
                         (width - c2) * height], dtype=np.int64)
        return RleMask(height, width, runs)
    runs = np.empty(2 * n + 1, dtype=np.int64)
    runs[0] = c1 * height + r1
    runs[1::2] = span
    runs[2:-1:2] = height - span
    runs[-1] = (width - c2) * height + (height - r2)
    return RleMask(height, width, runs)


def nms_dedup(masks: Sequence[RleMask], iou_threshold: float) -> list[int]:
    """Greedy duplicate suppression in input order.

    A mask is dropped when its IoU with any earlier retained mask exceeds the
    threshold; the returned indices are strictly increasing.
    """
    if not 0.0 < iou_threshold <= 1.0:
        raise ValueError(f"iou threshold must be in (0, 1], got {iou_threshold}")
    keep: list[int] = []
    for i, m in enumerate(masks):
        duplicate = False
        for j in keep:
            if mask_iou(masks[j], m) > iou_threshold:
                duplicate = True
                break
        if not duplicate:
            keep.append(i)
    return keep
