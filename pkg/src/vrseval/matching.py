"""Training-style losses and exact bipartite assignment of triplets.

The matching cost is a weighted sum of focal + dice terms on subject/object
masks and classification terms on the three category heads. By default the
classification term inside the cost is -p(target) (bounded, the usual choice
for set prediction); full cross-entropy is available via `class_cost="ce"`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.optimize import linear_sum_assignment

from .data import GtTriplet, PredTriplet
from .errors import InputError
from .mask import rle_decode

_EPS = 1e-12


@dataclass(frozen=True)
class FocalParams:
    alpha: float = 0.25
    gamma: float = 2.0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")


@dataclass(frozen=True)
class LossWeights:
    """Per-term weights; defaults follow the flat 1/1/2/2 configuration."""

    lambda_b: float = 1.0
    lambda_d: float = 1.0
    lambda_c_s: float = 2.0
    lambda_c_o: float = 2.0
    lambda_c_p: float = 2.0
    lambda_g: float = 2.0

    def __post_init__(self):
        for name in ("lambda_b", "lambda_d", "lambda_c_s", "lambda_c_o", "lambda_c_p", "lambda_g"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {v}")


# Built-in presets. The HOI presets omit the subject class head (subjects are
# always people there), the SGG presets keep it.
PRESETS: dict[str, LossWeights] = {
    "default": LossWeights(),
    "hico": LossWeights(lambda_b=2.0, lambda_d=1.0, lambda_c_s=0.0,
                        lambda_c_o=1.0, lambda_c_p=2.0, lambda_g=2.0),
    "vcoco": LossWeights(lambda_b=2.0, lambda_d=1.0, lambda_c_s=0.0,
                         lambda_c_o=1.0, lambda_c_p=2.0, lambda_g=2.0),
    "psg": LossWeights(lambda_b=2.0, lambda_d=1.0, lambda_c_s=1.0,
                       lambda_c_o=1.0, lambda_c_p=2.0, lambda_g=0.0),
    "promptable": LossWeights(lambda_b=2.0, lambda_d=1.0, lambda_c_s=1.0,
                              lambda_c_o=1.0, lambda_c_p=2.0, lambda_g=2.0),
}


def load_weight_presets(path: str | Path) -> dict[str, LossWeights]:
    """Merge presets from a JSON config ({"presets": {name: {field: value}}})
    over the built-ins."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read weight config {path}: {exc}") from exc
    merged = dict(PRESETS)
    for name, fields in (raw.get("presets") or {}).items():
        base = merged.get(name, LossWeights())
        try:
            merged[name] = replace(base, **fields)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad weight preset {name!r}: {exc}") from exc
    return merged


@dataclass(frozen=True)
class Assignment:
    pairs: tuple[tuple[int, int], ...]
    total_cost: float


def _check_shapes(pred: np.ndarray, target: np.ndarray):
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")


def focal_loss(pred: np.ndarray, target: np.ndarray,
               params: FocalParams = FocalParams()) -> float:
    """Mean focal loss over pixels: -alpha_t (1 - p_t)^gamma log(p_t)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_shapes(pred, target)
    p = np.clip(pred, _EPS, 1.0 - _EPS)
    p_t = np.where(target > 0.5, p, 1.0 - p)
    alpha_t = np.where(target > 0.5, params.alpha, 1.0 - params.alpha)
    loss = -alpha_t * (1.0 - p_t) ** params.gamma * np.log(p_t)
    return float(loss.mean())


def dice_loss(pred: np.ndarray, target: np.ndarray, smooth: float = 1.0) -> float:
    """1 - (2 * overlap + smooth) / (|pred| + |target| + smooth)."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    _check_shapes(pred, target)
    num = 2.0 * float((pred * target).sum()) + smooth
    den = float(pred.sum()) + float(target.sum()) + smooth
    return 1.0 - num / den


def ce_loss(scores: np.ndarray, target) -> float:
    """Cross entropy: -log p(target) for a class id, mean binary CE for a
    label set. Probabilities are clamped so the value is never infinite."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise ValueError("score vector must be 1-d")
    if isinstance(target, (int, np.integer)):
        if not 0 <= int(target) < scores.size:
            raise ValueError(f"target {target} outside score vector of size {scores.size}")
        return float(-np.log(max(scores[int(target)], _EPS)))
    wanted = set(int(t) for t in target)
    for t in wanted:
        if not 0 <= t < scores.size:
            raise ValueError(f"target {t} outside score vector of size {scores.size}")
    p = np.clip(scores, _EPS, 1.0 - _EPS)
    y = np.zeros(scores.size)
    y[list(wanted)] = 1.0
    per_class = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(per_class.mean())


def grounding_loss(matched_embed: np.ndarray, prompt_feature: np.ndarray,
                   negatives=()) -> float:
    """Contrastive cross entropy over dot-product similarities, with the
    matched triplet embedding as the positive class."""
    matched = np.asarray(matched_embed, dtype=np.float64)
    prompt = np.asarray(prompt_feature, dtype=np.float64)
    if matched.shape != prompt.shape:
        raise ValueError(f"dimension mismatch: {matched.shape} vs {prompt.shape}")
    sims = [float(matched @ prompt)]
    for neg in negatives:
        neg = np.asarray(neg, dtype=np.float64)
        if neg.shape != prompt.shape:
            raise ValueError(f"dimension mismatch: {neg.shape} vs {prompt.shape}")
        sims.append(float(neg @ prompt))
    sims = np.array(sims)
    # log-softmax of the positive entry, stabilised by the max.
    m = sims.max()
    return float(np.log(np.exp(sims - m).sum()) - (sims[0] - m))


def _class_term(scores: np.ndarray | None, target, mode: str) -> float:
    if scores is None:
        return 0.0
    if mode == "ce":
        return ce_loss(scores, target)
    if isinstance(target, (int, np.integer)):
        return -float(scores[int(target)])
    wanted = [int(t) for t in target]
    return -float(np.mean([scores[t] for t in wanted]))


def triplet_cost(pred: PredTriplet, gt: GtTriplet,
                 weights: LossWeights = LossWeights(),
                 focal: FocalParams = FocalParams(),
                 class_cost: str = "neg_prob") -> float:
    """Matching cost between one prediction and one ground-truth triplet."""
    if class_cost not in ("neg_prob", "ce"):
        raise ValueError(f"class_cost must be 'neg_prob' or 'ce', got {class_cost!r}")
    cost = 0.0
    if pred.subject_mask is not None and gt.subject.mask is not None:
        pm = rle_decode(pred.subject_mask).astype(np.float64)
        gm = rle_decode(gt.subject.mask).astype(np.float64)
        cost += weights.lambda_b * focal_loss(pm, gm, focal)
        cost += weights.lambda_d * dice_loss(pm, gm)
    if (gt.object is not None and pred.object_mask is not None
            and gt.object.mask is not None):
        pm = rle_decode(pred.object_mask).astype(np.float64)
        gm = rle_decode(gt.object.mask).astype(np.float64)
        cost += weights.lambda_b * focal_loss(pm, gm, focal)
        cost += weights.lambda_d * dice_loss(pm, gm)
    cost += weights.lambda_c_s * _class_term(
        pred.subject_scores, gt.subject.category_id, class_cost)
    if gt.object is not None:
        cost += weights.lambda_c_o * _class_term(
            pred.object_scores, gt.object.category_id, class_cost)
    cost += weights.lambda_c_p * _class_term(
        pred.predicate_scores, gt.predicate_ids, class_cost)
    return float(cost)


def cost_matrix(preds, gts, weights: LossWeights = LossWeights(),
                focal: FocalParams = FocalParams(),
                class_cost: str = "neg_prob") -> np.ndarray:
    out = np.zeros((len(preds), len(gts)), dtype=np.float64)
    for i, p in enumerate(preds):
        for j, g in enumerate(gts):
            out[i, j] = triplet_cost(p, g, weights, focal, class_cost)
    return out


def hungarian_match(costs: np.ndarray) -> Assignment:
    """Exact minimum-cost assignment of the smaller side into the larger."""
    costs = np.asarray(costs, dtype=np.float64)
    if costs.ndim != 2:
        raise ValueError(f"cost matrix must be 2-d, got shape {costs.shape}")
    if costs.size and not np.all(np.isfinite(costs)):
        raise ValueError("cost matrix contains non-finite entries")
    if costs.shape[0] == 0 or costs.shape[1] == 0:
        return Assignment(pairs=(), total_cost=0.0)
    rows, cols = linear_sum_assignment(costs)
    order = np.argsort(rows)
    pairs = tuple((int(rows[k]), int(cols[k])) for k in order)
    return Assignment(pairs=pairs, total_cost=float(costs[rows, cols].sum()))
