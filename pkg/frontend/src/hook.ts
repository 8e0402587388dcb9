// In-page injection hook: the page-global surface the bridge drives.
// Mirrors the wire protocol semantics one-to-one (same rollback contract,
// same determinism); game time advances only through act(), never through
// animation frames.

import { ColliderGame } from "./collider";
import {
  ActOutcome,
  ActionStep,
  GameEvent,
  PatchOp,
  PatchOutcome,
  SchemaDoc,
  SnapshotDoc,
  WireError,
} from "./wire";

export interface InjectionHook {
  getSchema(): SchemaDoc;
  applyPatch(ops: PatchOp[]): PatchOutcome;
  act(steps: ActionStep[]): ActOutcome | { error: WireError };
  snapshot(): SnapshotDoc;
  events(since?: number): GameEvent[];
  reset(seed?: number): { schema: SchemaDoc; snapshot: SnapshotDoc };
}

export function createHook(
  faults: string[],
  onChange: (game: ColliderGame) => void = () => {},
): InjectionHook {
  let game = new ColliderGame(faults, 0);

  const hook: InjectionHook = {
    getSchema: () => game.schema(),

    applyPatch(ops) {
      const outcome = game.applyPatch(ops);
      onChange(game);
      return outcome;
    },

    act(steps) {
      for (const step of steps) {
        if (step == null || typeof step.action !== "string") {
          return { error: { code: "bad-request", message: "malformed action step" } };
        }
        if (step.ticks !== undefined && (!Number.isInteger(step.ticks) || step.ticks < 1)) {
          return { error: { code: "bad-request", message: "ticks must be >= 1" } };
        }
      }
      const outcome = game.act(steps);
      onChange(game);
      return outcome;
    },

    snapshot: () => game.snapshot(),
    events: (since = 0) => game.events(since),

    reset(seed = 0) {
      game = new ColliderGame(faults, seed);
      onChange(game);
      return { schema: game.schema(), snapshot: game.snapshot() };
    },
  };
  return hook;
}
