/** Run-length encoded binary mask, column-major with a leading background run. */
export interface RleMask {
  size: [number, number];
  counts: number[];
}

export interface EvalReport {
  protocol: string;
  rule: Record<string, unknown>;
  per_category: Record<string, number>;
  category_labels: Record<string, string>;
  gt_counts: Record<string, number>;
  aggregates: Record<string, number>;
  flags: string[];
}

export interface Assignment {
  pairs: Array<[number, number]>;
  totalCost: number;
}

export type TaskPreset = "hico" | "vcoco" | "psg" | "vrd";

export interface EvalOptions {
  /** Localisation geometry for the true-positive rule (default "mask"). */
  localization?: "box" | "mask";
  /** IoU threshold (default 0.5). */
  iouThreshold?: number;
  /** Per-image detection budget (default 100). */
  topK?: number;
  /** Path to a custom catalog JSON, overriding the task preset. */
  catalog?: string;
  /** Worker threads for the native evaluation. */
  threads?: number;
}
