/**
 * Node bindings for the vrseval toolkit.
 *
 * Every operation delegates to the native command-line interface over its
 * documented file formats, so results are exactly the numbers the native
 * library produces. Entry points are batch-oriented; data crosses the
 * boundary as JSON, never as per-pixel calls.
 */

import { constants } from "node:fs";
import { access, mkdtemp, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { cliBinary, runCli, runCliJson, VrsEvalCliError } from "./cli.js";
import type {
  Assignment,
  EvalOptions,
  EvalReport,
  RleMask,
  TaskPreset,
} from "./types.js";

export { VrsEvalCliError, cliBinary } from "./cli.js";
export type { Assignment, EvalOptions, EvalReport, RleMask, TaskPreset } from "./types.js";

/** Native library version; must match this package's own version. */
export async function nativeVersion(): Promise<string> {
  const { stdout } = await runCli(["--version"]);
  return stdout.trim().split(/\s+/).pop() ?? "";
}

/** Batch IoU over RLE mask pairs; semantics identical to the native mask
 * IoU (exact, 0 for a pair of empty masks). */
export async function boundMaskIou(pairs: Array<[RleMask, RleMask]>): Promise<number[]> {
  if (pairs.length === 0) {
    return [];
  }
  const payload = JSON.stringify({ pairs });
  const result = await runCliJson<{ iou: number[] }>(
    ["mask-iou", "--pairs", "-"],
    payload,
  );
  return result.iou;
}

async function assertReadable(path: string): Promise<void> {
  try {
    await access(path, constants.R_OK);
  } catch {
    throw new VrsEvalCliError(`file not found: ${path}`, 1, []);
  }
}

function evalArgs(gtPath: string, predsPath: string | null, preset: TaskPreset,
                  options: EvalOptions): string[] {
  const args = ["eval", "--task", preset, "--gt", gtPath, "--figures", "none"];
  if (predsPath !== null) {
    args.push("--preds", predsPath);
  }
  if (options.catalog !== undefined) {
    args.push("--catalog", options.catalog);
  }
  if (options.localization !== undefined) {
    args.push("--loc", options.localization);
  }
  if (options.iouThreshold !== undefined) {
    args.push("--iou-thresh", String(options.iouThreshold));
  }
  if (options.topK !== undefined) {
    args.push("--topk", String(options.topK));
  }
  if (options.threads !== undefined) {
    args.push("--threads", String(options.threads));
  }
  return args;
}

/** Run the task preset's evaluation protocol; identical numbers to the
 * native `eval` command on the same inputs. */
export async function boundEval(
  gtPath: string,
  predsPath: string | null,
  preset: TaskPreset,
  options: EvalOptions = {},
): Promise<EvalReport> {
  await assertReadable(gtPath);
  if (predsPath !== null) {
    await assertReadable(predsPath);
  }
  return runCliJson<EvalReport>(evalArgs(gtPath, predsPath, preset, options));
}

interface MatchDebugPayload {
  assignment: { pairs: Array<[number, number]>; total_cost: number };
}

/** Exact minimum-cost assignment of a rectangular cost matrix; identical to
 * the native Hungarian solve. */
export async function boundHungarian(costs: number[][]): Promise<Assignment> {
  const dir = await mkdtemp(join(tmpdir(), "vrseval-"));
  const costPath = join(dir, "costs.json");
  try {
    await writeFile(costPath, JSON.stringify({ costs }), "utf-8");
    const payload = await runCliJson<MatchDebugPayload>(
      ["match-debug", "--cost-matrix", costPath],
    );
    return {
      pairs: payload.assignment.pairs.map(([p, g]) => [p, g] as [number, number]),
      totalCost: payload.assignment.total_cost,
    };
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

/**
 * Opaque handle over a ground-truth dataset on disk: the bulk data stays on
 * the native side and is referenced by path. Using a released handle throws.
 */
export class DatasetHandle {
  private released = false;

  private constructor(
    public readonly gtPath: string,
    public readonly preset: TaskPreset,
    private readonly options: EvalOptions,
  ) {}

  static async open(
    gtPath: string,
    preset: TaskPreset,
    options: EvalOptions = {},
  ): Promise<DatasetHandle> {
    await assertReadable(gtPath);
    return new DatasetHandle(gtPath, preset, options);
  }

  private assertLive(): void {
    if (this.released) {
      throw new VrsEvalCliError("dataset handle was released", 1, []);
    }
  }

  async evaluate(predsPath: string | null = null,
                 options: EvalOptions = {}): Promise<EvalReport> {
    this.assertLive();
    return boundEval(this.gtPath, predsPath, this.preset,
                     { ...this.options, ...options });
  }

  release(): void {
    this.released = true;
  }
}
