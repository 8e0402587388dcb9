// Headless page host for the bridge: loads the fixture page in jsdom and
// hands back the installed injection hook. One page per session; close()
// tears the window down. Any failure to bring the page up maps to the
// protocol's browser-unavailable launch error.

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import * as path from "node:path";

import type { InjectionHook } from "./hook";

export class BrowserUnavailable extends Error {}

export interface PageHost {
  hook: InjectionHook;
  close(): void;
}

async function loadJsdom(): Promise<typeof import("jsdom")> {
  try {
    return await import("jsdom");
  } catch (error) {
    throw new BrowserUnavailable(
      `no headless page host can start (jsdom missing: ${String(error)})`);
  }
}

export async function openPage(gameUrl: string): Promise<PageHost> {
  const { JSDOM, VirtualConsole } = await loadJsdom();
  const virtualConsole = new VirtualConsole();
  virtualConsole.on("jsdomError", () => {});  // canvas backend is absent; fine

  let url: URL;
  try {
    url = new URL(gameUrl);
  } catch {
    throw new BrowserUnavailable(`--game-url is not a valid URL: ${gameUrl}`);
  }

  let dom: import("jsdom").JSDOM;
  try {
    if (url.protocol === "file:") {
      const file = fileURLToPath(new URL(url.pathname, "file://"));
      dom = new JSDOM(readFileSync(file, "utf-8"), {
        url: gameUrl,
        runScripts: "dangerously",
        virtualConsole,
      });
      // classic file:// pages: execute script tags ourselves so we do not
      // depend on jsdom's resource loader for local subresources
      const tags = Array.from(dom.window.document.querySelectorAll("script[src]"));
      for (const tag of tags as Element[]) {
        const src = tag.getAttribute("src");
        if (!src) continue;
        const scriptPath = path.resolve(path.dirname(file), src);
        dom.window.eval(readFileSync(scriptPath, "utf-8"));
      }
    } else if (url.protocol === "http:" || url.protocol === "https:") {
      dom = await JSDOM.fromURL(gameUrl, {
        runScripts: "dangerously",
        resources: "usable",
        virtualConsole,
      });
      await pageSettled(dom);
    } else {
      throw new BrowserUnavailable(`unsupported URL scheme ${url.protocol}`);
    }
  } catch (error) {
    if (error instanceof BrowserUnavailable) throw error;
    throw new BrowserUnavailable(`cannot load fixture page: ${String(error)}`);
  }

  const w = dom.window as unknown as Record<string, unknown>;
  if (typeof w.gameHookError === "string") {
    dom.window.close();
    throw new BrowserUnavailable(`fixture page refused to start: ${w.gameHookError}`);
  }
  const hook = w.gameHook as InjectionHook | undefined;
  if (!hook) {
    dom.window.close();
    throw new BrowserUnavailable("fixture page loaded but exposed no injection hook");
  }
  return { hook, close: () => dom.window.close() };
}

async function pageSettled(dom: import("jsdom").JSDOM, timeoutMs = 10000): Promise<void> {
  const started = Date.now();
  const w = dom.window as unknown as Record<string, unknown>;
  while (!w.gameHook && !w.gameHookError) {
    if (Date.now() - started > timeoutMs) return;
    await new Promise((resolve) => setTimeout(resolve, 20));
  }
}
