"""Promptable retrieval: structured prompt grammar, similarity ranking over
triplet embeddings, slot filtering, and the postprocessing baseline.

Prompts use tagged slots in subject, predicate, object order, each optional
but at least one present:

    <s>person</s><p>ride</p>
    <p>on</p><o>pavement</o>

Slot values are carried verbatim; names outside the catalog are legitimate
open-vocabulary queries and are matched by embedding similarity only.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .data import CategoryCatalog, PredTriplet
from .errors import ParseError
from .metrics import score_triplet

_TAG = re.compile(r"<(s|p|o)>(.*?)</\1>", re.DOTALL)
_SLOT_ORDER = ("s", "p", "o")


@dataclass(frozen=True)
class PromptQuery:
    subject: str | None = None
    predicate: str | None = None
    object: str | None = None

    def __post_init__(self):
        if self.subject is None and self.predicate is None and self.object is None:
            raise ParseError("prompt must fill at least one slot")

    def slots(self) -> dict[str, str]:
        out = {}
        if self.subject is not None:
            out["s"] = self.subject
        if self.predicate is not None:
            out["p"] = self.predicate
        if self.object is not None:
            out["o"] = self.object
        return out

    def render(self) -> str:
        return "".join(f"<{k}>{v}</{k}>" for k, v in
                       ((k, self.slots().get(k)) for k in _SLOT_ORDER) if v is not None)


def parse_prompt(text: str) -> PromptQuery:
    """Parse a tagged prompt; unknown category names are kept verbatim."""
    if not text or not text.strip():
        raise ParseError("empty prompt")
    stripped = text.strip()
    slots: dict[str, str] = {}
    pos = 0
    for m in _TAG.finditer(stripped):
        if stripped[pos : m.start()].strip():
            raise ParseError(
                f"unexpected text {stripped[pos:m.start()]!r} at position {pos} in prompt")
        tag, value = m.group(1), m.group(2).strip()
        if not value:
            raise ParseError(f"empty <{tag}> slot at position {m.start()}")
        if tag in slots:
            raise ParseError(f"duplicate <{tag}> slot at position {m.start()}")
        slots[tag] = value
        pos = m.end()
    if stripped[pos:].strip():
        raise ParseError(f"unexpected trailing text {stripped[pos:]!r} at position {pos}")
    if not slots:
        raise ParseError("prompt contains no tagged slots")
    return PromptQuery(subject=slots.get("s"), predicate=slots.get("p"),
                       object=slots.get("o"))


def compose_triplet_embedding(pred: PredTriplet, query: PromptQuery) -> np.ndarray:
    """Sum of the class embeddings for exactly the slots the query fills."""
    parts = []
    if query.subject is not None:
        if pred.subject_embed is None:
            raise ParseError("prediction is missing the subject embedding")
        parts.append(pred.subject_embed)
    if query.predicate is not None:
        if pred.predicate_embed is None:
            raise ParseError("prediction is missing the predicate embedding")
        parts.append(pred.predicate_embed)
    if query.object is not None:
        if pred.object_embed is None:
            raise ParseError("prediction is missing the object embedding")
        parts.append(pred.object_embed)
    out = np.zeros_like(parts[0], dtype=np.float64)
    for p in parts:
        if p.shape != out.shape:
            raise ParseError(
                f"embedding dimensions differ: {p.shape} vs {out.shape}")
        out = out + np.asarray(p, dtype=np.float64)
    return out


def rank_by_similarity(preds: list[PredTriplet], prompt_feature: np.ndarray,
                       query: PromptQuery, k: int = 10,
                       cosine: bool = False) -> list[int]:
    """Indices of the top-k predictions by similarity between the prompt
    feature and the composed triplet embedding, ties broken by index."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    prompt = np.asarray(prompt_feature, dtype=np.float64)
    sims = []
    for i, p in enumerate(preds):
        e = compose_triplet_embedding(p, query)
        if e.shape != prompt.shape:
            raise ParseError(
                f"prompt feature dimension {prompt.shape} does not match embeddings {e.shape}")
        s = float(e @ prompt)
        if cosine:
            denom = float(np.linalg.norm(e)) * float(np.linalg.norm(prompt))
            s = s / denom if denom > 0 else 0.0
        sims.append((-s, i))
    sims.sort()
    return [i for _, i in sims[:k]]


def _argmax_category(scores: np.ndarray | None) -> int | None:
    if scores is None or scores.size == 0:
        return None
    return int(np.argmax(scores))


def filter_topk_by_slots(preds: list[PredTriplet], ranked: list[int],
                         query: PromptQuery, catalog: CategoryCatalog) -> list[int]:
    """Keep ranked predictions whose argmax head categories agree with every
    filled slot that names a known catalog category. Free-form slot values
    never filter (they were already matched by embedding similarity)."""
    sub_id = catalog.object_id(query.subject) if query.subject is not None else None
    obj_id = catalog.object_id(query.object) if query.object is not None else None
    pred_id = catalog.predicate_id(query.predicate) if query.predicate is not None else None
    out = []
    for i in ranked:
        p = preds[i]
        if sub_id is not None and _argmax_category(p.subject_scores) not in (sub_id, None):
            continue
        if obj_id is not None and _argmax_category(p.object_scores) not in (obj_id, None):
            continue
        if pred_id is not None and _argmax_category(p.predicate_scores) not in (pred_id, None):
            continue
        out.append(i)
    return out


def confidence_rank(preds: list[PredTriplet], catalog: CategoryCatalog,
                    k: int | None = None) -> list[int]:
    """Rank predictions by the standard triplet confidence: the product of
    the argmax probabilities of the available heads."""
    rows = []
    for i, p in enumerate(preds):
        obj_id = _argmax_category(p.object_scores)
        pr_id = _argmax_category(p.predicate_scores)
        score = score_triplet(
            p,
            (obj_id if obj_id is not None else 0, pr_id if pr_id is not None else 0),
            subject_category=None,
        )
        rows.append((-score, i))
    rows.sort()
    idx = [i for _, i in rows]
    return idx if k is None else idx[:k]


def postprocess_baseline(preds: list[PredTriplet], query: PromptQuery,
                         catalog: CategoryCatalog, k: int = 10) -> list[int]:
    """Prompt answering by filtering standard outputs: take the k most
    confident predictions, then keep those that agree with the prompt."""
    if k <= 0:
        raise ValueError(f"k must be positive, got {k}")
    ranked = confidence_rank(preds, catalog, k)
    return filter_topk_by_slots(preds, ranked, query, catalog)


def retrieve(preds: list[PredTriplet], prompt_feature: np.ndarray,
             query: PromptQuery, catalog: CategoryCatalog, k: int = 10,
             cosine: bool = False) -> list[int]:
    """The promptable path: similarity top-k, then slot filtering."""
    ranked = rank_by_similarity(preds, prompt_feature, query, k, cosine=cosine)
    return filter_topk_by_slots(preds, ranked, query, catalog)
