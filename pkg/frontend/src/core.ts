/**
 * Process plumbing for the corpuscade CLI.
 *
 * Every bound operation is one spawn of the core executable with JSONL
 * on stdin/stdout; nothing in this package re-implements core behavior.
 * The executable is resolved from CORPUSCADE_BIN or PATH.
 */
import { spawn } from "node:child_process";

export interface CoreOptions {
  /** Name or path of the core executable (default: $CORPUSCADE_BIN or "corpuscade"). */
  bin?: string;
}

export function coreBin(opts: CoreOptions = {}): string {
  return opts.bin ?? process.env.CORPUSCADE_BIN ?? "corpuscade";
}

/** A core failure surfaced to the host runtime; `kind` mirrors the core's error class. */
export class CoreError extends Error {
  readonly kind: string;
  readonly exitCode: number | null;
  readonly stderr: string;

  constructor(kind: string, message: string, exitCode: number | null, stderr: string) {
    super(message);
    this.name = "CoreError";
    this.kind = kind;
    this.exitCode = exitCode;
    this.stderr = stderr;
  }
}

/** Error class named by the core, from a "SomeError: detail" message or stderr tail. */
export function errorKind(text: string): string {
  const lines = text
    .split("\n")
    .map((l) => l.trim())
    .filter((l) => l.length > 0);
  const last = lines[lines.length - 1] ?? "";
  const m = /^([A-Za-z_][A-Za-z0-9_.]*(?:Error|Exception|Warning)?):\s/.exec(last);
  return m ? m[1]! : "CoreError";
}

function fail(stderr: string, exitCode: number | null): CoreError {
  const tail = stderr.trim().split("\n").slice(-1)[0] ?? "";
  const message = tail.length > 0 ? tail : `core exited with code ${exitCode}`;
  return new CoreError(errorKind(stderr), message, exitCode, stderr);
}

/**
 * Run one core command, feeding `lines` as JSONL stdin; resolves to the
 * stdout lines in order. Rejects with CoreError when the core exits
 * nonzero or cannot be spawned.
 */
export function runJsonl(
  args: readonly string[],
  lines: readonly string[],
  opts: CoreOptions = {},
): Promise<string[]> {
  return new Promise((resolve, reject) => {
    const child = spawn(coreBin(opts), args as string[], {
      stdio: ["pipe", "pipe", "pipe"],
    });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    child.stdout.on("data", (chunk: Buffer) => out.push(chunk));
    child.stderr.on("data", (chunk: Buffer) => err.push(chunk));
    child.on("error", (e) =>
      reject(new CoreError("SpawnError", `cannot run core CLI: ${e.message}`, null, "")),
    );
    // EPIPE here means the core died mid-stream; the close handler reports it
    child.stdin.on("error", () => {});
    child.on("close", (code) => {
      if (code !== 0) {
        reject(fail(Buffer.concat(err).toString("utf8"), code));
        return;
      }
      const stdout = Buffer.concat(out).toString("utf8");
      resolve(stdout.length === 0 ? [] : stdout.replace(/\n$/, "").split("\n"));
    });
    for (const line of lines) child.stdin.write(line + "\n");
    child.stdin.end();
  });
}

/** Run one non-streaming core command (no stdin); resolves to raw stdout. */
export async function runCommand(
  args: readonly string[],
  opts: CoreOptions = {},
): Promise<string> {
  const lines = await runJsonl(args, [], opts);
  return lines.join("\n");
}
