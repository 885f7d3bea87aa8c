"""Evaluation and dataset toolkit for visual relationship segmentation."""

__version__ = "0.1.0"

from .data import (  # noqa: F401
    CategoryCatalog,
    Dataset,
    Entity,
    GtTriplet,
    ImageRecord,
    PredTriplet,
    attach_preds,
    load_catalog,
    load_gt,
    load_preds,
    rare_partition,
    save_dataset,
)
from .ingest import attach_masks, load_candidates, retention_rate  # noqa: F401
from .mask import (  # noqa: F401
    BBox,
    RleMask,
    box_iou,
    box_to_rle,
    mask_iou,
    mask_iou_matrix,
    mask_to_box,
    nms_dedup,
    rle_decode,
    rle_encode,
)
from .matching import (  # noqa: F401
    Assignment,
    FocalParams,
    LossWeights,
    PRESETS,
    ce_loss,
    cost_matrix,
    dice_loss,
    focal_loss,
    grounding_loss,
    hungarian_match,
    triplet_cost,
)
from .metrics import (  # noqa: F401
    EvalReport,
    TpRule,
    eval_hoi_map,
    eval_psg_recall,
    eval_siou,
    eval_vcoco_role_ap,
    score_triplet,
    transform_for_fairness,
)
from .retrieval import (  # noqa: F401
    PromptQuery,
    compose_triplet_embedding,
    filter_topk_by_slots,
    parse_prompt,
    postprocess_baseline,
    rank_by_similarity,
    retrieve,
)
from .splits import (  # noqa: F401
    ZeroShotSplit,
    eval_split_report,
    filter_train,
    make_uc_split,
    make_uo_split,
    make_uv_split,
)
