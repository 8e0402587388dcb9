// Stdio protocol bridge: newline-delimited JSON requests on stdin, one
// response per request on stdout, with a headless fixture page on the far
// side. Launch (re)starts the page session; shutdown closes the page and
// exits 0; EOF without shutdown exits 2, matching the reference runtime.

import * as readline from "node:readline";

import type { InjectionHook } from "./hook";
import { BrowserUnavailable, PageHost, openPage } from "./pagehost";
import { canonicalStringify, err } from "./wire";

interface BridgeArgs {
  gameUrl: string;
}

function parseArgs(argv: string[]): BridgeArgs {
  let gameUrl: string | null = null;
  for (let i = 0; i < argv.length; i += 1) {
    if (argv[i] === "--game-url") {
      gameUrl = argv[i + 1] ?? null;
      i += 1;
    }
  }
  if (!gameUrl) {
    process.stderr.write("usage: bridge --game-url <url>\n");
    process.exit(2);
  }
  return { gameUrl };
}

class Bridge {
  private page: PageHost | null = null;
  private launched = false;

  constructor(private readonly gameUrl: string) {}

  async handle(request: Record<string, unknown>): Promise<Record<string, unknown>> {
    const op = request.op;
    if (op === "launch") return this.launch(request);
    if (op === "shutdown") return { ok: true };
    if (!this.launched || this.page === null) {
      return err("not-launched", "send launch first");
    }
    const hook = this.page.hook;
    if (op === "patch") return this.patch(hook, request);
    if (op === "act") return this.act(hook, request);
    if (op === "snapshot") return { ok: true, snapshot: hook.snapshot() };
    if (op === "events") {
      const since = request.since ?? 0;
      if (typeof since !== "number") return err("bad-request", "since must be a number");
      return { ok: true, events: hook.events(Math.trunc(since)) };
    }
    return err("unknown-op", String(op));
  }

  private async launch(request: Record<string, unknown>): Promise<Record<string, unknown>> {
    if (request.game !== "collider") {
      return err("launch-failure",
        `this bridge serves 'collider', not ${JSON.stringify(request.game)}`);
    }
    const seed = request.seed ?? 0;
    if (typeof seed !== "number" || !Number.isInteger(seed) || seed < 0) {
      return err("launch-failure", "seed must be a non-negative integer");
    }
    if (this.page === null) {
      try {
        this.page = await openPage(this.gameUrl);
      } catch (error) {
        if (error instanceof BrowserUnavailable) {
          return err("browser-unavailable", error.message);
        }
        return err("launch-failure", String(error));
      }
    }
    const { schema, snapshot } = this.page.hook.reset(seed);
    this.launched = true;
    return { ok: true, schema, snapshot };
  }

  private patch(hook: InjectionHook, request: Record<string, unknown>): Record<string, unknown> {
    const ops = request.ops;
    if (!Array.isArray(ops)) return err("bad-request", "ops must be a list");
    const outcome = hook.applyPatch(ops);
    return { ok: true, ...outcome };
  }

  private act(hook: InjectionHook, request: Record<string, unknown>): Record<string, unknown> {
    const steps = request.steps;
    if (!Array.isArray(steps)) return err("bad-request", "steps must be a list");
    const outcome = hook.act(steps);
    if ("error" in outcome) {
      return { ok: false, error: outcome.error };
    }
    return { ok: true, ...outcome };
  }

  close(): void {
    this.page?.close();
    this.page = null;
  }
}

export async function serve(gameUrl: string): Promise<number> {
  const bridge = new Bridge(gameUrl);
  const lines = readline.createInterface({ input: process.stdin, terminal: false });
  let cleanExit = false;

  for await (const line of lines) {
    const text = line.trim();
    if (!text) continue;
    let response: Record<string, unknown>;
    let request: Record<string, unknown> | null = null;
    try {
      const parsed = JSON.parse(text);
      if (parsed === null || typeof parsed !== "object" || Array.isArray(parsed)) {
        response = err("bad-request", "request must be a JSON object");
      } else {
        request = parsed;
        response = await bridge.handle(parsed);
      }
    } catch (error) {
      response = error instanceof SyntaxError
        ? err("bad-request", "not valid JSON")
        : err("internal", String(error));
    }
    process.stdout.write(canonicalStringify(response) + "\n");
    if (request?.op === "shutdown" && response.ok === true) {
      cleanExit = true;
      break;
    }
  }
  bridge.close();
  return cleanExit ? 0 : 2;
}

async function main(): Promise<void> {
  const args = parseArgs(process.argv.slice(2));
  process.exit(await serve(args.gameUrl));
}

main().catch((error) => {
  process.stderr.write(`bridge crashed: ${String(error)}\n`);
  process.exit(2);
});
