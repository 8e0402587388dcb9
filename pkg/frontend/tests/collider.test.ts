import { describe, expect, test } from "vitest";

import { ColliderGame, parseFaults } from "../src/collider";

function lethalSetup(faults: string[] = []) {
  const game = new ColliderGame(faults);
  const patched = game.applyPatch([
    { op: "set", path: "player.hp", value: 25 },
    { op: "set", path: "player.pos", value: [4, 4] },
    { op: "spawn", entity_type: "obstacle", id: "o1", props: { pos: [5, 4] } },
  ]);
  expect(patched.rolled_back).toBe(false);
  return game;
}

describe("movement", () => {
  test("one cell per accepted move", () => {
    const game = new ColliderGame();
    game.act([{ action: "move", params: { dir: "right" }, ticks: 1 }]);
    expect(game.snapshot().state.player).toEqual({ hp: 100, pos: [1, 0] });
    expect(game.snapshot().tick).toBe(1);
  });

  test("off-grid move rejected, execution continues", () => {
    const game = new ColliderGame();
    const out = game.act([
      { action: "move", params: { dir: "left" } },
      { action: "move", params: { dir: "down" } },
    ]);
    expect(out.action_trace).toEqual([
      { step: 0, accepted: false },
      { step: 1, accepted: true },
    ]);
    expect(out.logs).toEqual(["rejected move: out of bounds"]);
  });

  test("moves rejected after game over", () => {
    const game = new ColliderGame();
    game.applyPatch([{ op: "set", path: "phase", value: "game_over" }]);
    const out = game.act([{ action: "move", params: { dir: "right" } }]);
    expect(out.action_trace[0].accepted).toBe(false);
    expect(game.snapshot().state.player).toEqual({ hp: 100, pos: [0, 0] });
  });
});

describe("collision chain", () => {
  test("lethal collision: collision then game_over, hp exactly 0", () => {
    const game = lethalSetup();
    const out = game.act([{ action: "move", params: { dir: "right" }, ticks: 1 }]);
    expect(out.events.map((e) => e.type)).toEqual(["collision", "game_over"]);
    expect(out.events[0]).toEqual({ tick: 1, type: "collision", data: { at: [5, 4] } });
    const state = game.snapshot().state as { player: { hp: number }; phase: string };
    expect(state.player.hp).toBe(0);
    expect(state.phase).toBe("game_over");
  });

  test.each([
    ["no_hp_decrement", 25, ["collision"]],
    ["weak_decrement", 15, ["collision"]],
    ["no_game_over", 0, ["collision"]],
  ])("fault %s", (fault, hp, events) => {
    const game = lethalSetup([fault]);
    const out = game.act([{ action: "move", params: { dir: "right" } }]);
    expect(out.events.map((e) => e.type)).toEqual(events);
    const state = game.snapshot().state as { player: { hp: number }; phase: string };
    expect(state.player.hp).toBe(hp);
    expect(state.phase).toBe("playing");
  });

  test("events are stamped with the post-advance tick", () => {
    const game = lethalSetup();
    const out = game.act([{ action: "move", params: { dir: "right" }, ticks: 3 }]);
    expect(out.events[0].tick).toBe(3);
    expect(game.events(3)).toHaveLength(2);
    expect(game.events(4)).toHaveLength(0);
  });
});

describe("patching", () => {
  test("all-or-nothing rollback on type mismatch", () => {
    const game = new ColliderGame();
    const before = JSON.stringify(game.snapshot());
    const out = game.applyPatch([
      { op: "set", path: "player.pos", value: [5, 5] },
      { op: "set", path: "player.hp", value: "full" },
    ]);
    expect(out.rolled_back).toBe(true);
    expect(out.results[0].ok).toBe(true);
    expect(out.results[1].error?.code).toBe("type-mismatch");
    expect(JSON.stringify(game.snapshot())).toBe(before);
  });

  test("entity ids are unique for the session lifetime", () => {
    const game = new ColliderGame();
    expect(game.applyPatch([
      { op: "spawn", entity_type: "obstacle", id: "o1", props: { pos: [1, 1] } },
      { op: "remove", id: "o1" },
    ]).rolled_back).toBe(false);
    const again = game.applyPatch([
      { op: "spawn", entity_type: "obstacle", id: "o1", props: { pos: [2, 2] } },
    ]);
    expect(again.results[0].error?.code).toBe("duplicate-entity-id");
  });

  test("unknown path and unknown entity type", () => {
    const game = new ColliderGame();
    expect(game.applyPatch([{ op: "set", path: "player.mana", value: 1 }])
      .results[0].error?.code).toBe("unknown-path");
    expect(game.applyPatch([{ op: "spawn", entity_type: "dragon", id: "d", props: {} }])
      .results[0].error?.code).toBe("unknown-entity-type");
  });

  test("point component paths are settable", () => {
    const game = new ColliderGame();
    const out = game.applyPatch([{ op: "set", path: "player.pos.0", value: 7 }]);
    expect(out.rolled_back).toBe(false);
    expect((game.snapshot().state.player as { pos: number[] }).pos).toEqual([7, 0]);
  });
});

describe("fault parsing", () => {
  test("accepts known flags, rejects unknown", () => {
    expect(parseFaults("no_game_over,weak_decrement"))
      .toEqual(["no_game_over", "weak_decrement"]);
    expect(parseFaults(null)).toEqual([]);
    expect(() => parseFaults("strict_threshold")).toThrow(/unknown fault/);
  });
});
