import { describe, expect, test } from "vitest";

import { createHook } from "../src/hook";
import { canonicalStringify } from "../src/wire";

describe("injection hook", () => {
  test("reset rebuilds a pristine deterministic session", () => {
    const hook = createHook([]);
    hook.reset(7);
    hook.applyPatch([{ op: "spawn", entity_type: "obstacle", id: "o1", props: { pos: [1, 0] } }]);
    hook.act([{ action: "move", params: { dir: "right" } }]);
    const first = canonicalStringify(hook.reset(7));
    hook.act([{ action: "move", params: { dir: "down" } }]);
    const second = canonicalStringify(hook.reset(7));
    expect(second).toBe(first);
  });

  test("reset frees the spawn-id namespace", () => {
    const hook = createHook([]);
    hook.reset(0);
    hook.applyPatch([{ op: "spawn", entity_type: "obstacle", id: "o1", props: { pos: [1, 0] } }]);
    hook.reset(0);
    const out = hook.applyPatch([
      { op: "spawn", entity_type: "obstacle", id: "o1", props: { pos: [1, 0] } },
    ]);
    expect(out.rolled_back).toBe(false);
  });

  test("schema matches the published collider contract", () => {
    const hook = createHook([]);
    expect(hook.getSchema()).toEqual({
      state_paths: { "player.hp": "number", "player.pos": "point", phase: "string" },
      actions: { move: { dir: "string" } },
      entity_types: { obstacle: { container: "obstacles", props: { pos: "point" } } },
      events: ["collision", "game_over"],
    });
  });

  test("malformed steps surface a bad-request error value", () => {
    const hook = createHook([]);
    hook.reset(0);
    const out = hook.act([{ action: "move", params: { dir: "right" }, ticks: 0 }]);
    expect(out).toEqual({ error: { code: "bad-request", message: "ticks must be >= 1" } });
  });

  test("onChange fires for every state transition", () => {
    let calls = 0;
    const hook = createHook([], () => { calls += 1; });
    hook.reset(0);
    hook.applyPatch([{ op: "set", path: "player.hp", value: 50 }]);
    hook.act([{ action: "move", params: { dir: "right" } }]);
    expect(calls).toBe(3);
  });
});

describe("canonical stringify", () => {
  test("sorts keys recursively and keeps integral numbers bare", () => {
    expect(canonicalStringify({ b: 1, a: { d: 2.5, c: 75.0 } }))
      .toBe('{"a":{"c":75,"d":2.5},"b":1}');
  });

  test("rejects non-finite numbers", () => {
    expect(() => canonicalStringify({ x: Infinity })).toThrow(/non-finite/);
  });
});
