import { spawn } from "node:child_process";

/** Error raised when the native CLI rejects a request; preserves the native
 * message and exit code (1 input error, 2 constraint violation, 3 internal). */
export class VrsEvalCliError extends Error {
  constructor(
    message: string,
    public readonly exitCode: number,
    public readonly command: string[],
  ) {
    super(message);
    this.name = "VrsEvalCliError";
  }
}

/** Binary to invoke; override with the VRSEVAL_BIN environment variable. */
export function cliBinary(): string {
  return process.env.VRSEVAL_BIN ?? "vrseval";
}

export interface RunResult {
  stdout: string;
  stderr: string;
}

/** Run one CLI invocation. Safe to call concurrently: every call owns its
 * own process and nothing is shared between calls. */
export function runCli(args: string[], stdin?: string): Promise<RunResult> {
  const bin = cliBinary();
  return new Promise((resolve, reject) => {
    const child = spawn(bin, args, { stdio: ["pipe", "pipe", "pipe"] });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    child.stdout.on("data", (chunk) => out.push(chunk));
    child.stderr.on("data", (chunk) => err.push(chunk));
    child.on("error", (cause) => {
      reject(
        new VrsEvalCliError(
          `failed to launch ${bin}: ${cause.message}`,
          -1,
          [bin, ...args],
        ),
      );
    });
    child.on("close", (code) => {
      const stderr = Buffer.concat(err).toString("utf-8");
      if (code !== 0) {
        const message = stderr.trim().split("\n").pop() ?? `exit code ${code}`;
        reject(new VrsEvalCliError(message, code ?? -1, [bin, ...args]));
        return;
      }
      resolve({ stdout: Buffer.concat(out).toString("utf-8"), stderr });
    });
    if (stdin !== undefined) {
      child.stdin.write(stdin);
    }
    child.stdin.end();
  });
}

export async function runCliJson<T>(args: string[], stdin?: string): Promise<T> {
  const { stdout } = await runCli(args, stdin);
  return JSON.parse(stdout) as T;
}
