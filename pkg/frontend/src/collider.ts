// Collider game core: a 10x10 grid where moving onto an obstacle costs hp.
// Pure state machine, no DOM. Semantics must stay interchangeable with the
// reference runtime's collider template: one cell per accepted move, moves
// off the grid or after game over are rejected, entering an occupied cell
// emits `collision` and applies hp -25 (-10 under weak_decrement, -0 under
// no_hp_decrement), and hp <= 0 flips phase to game_over with a `game_over`
// event unless no_game_over. Time is a bare tick counter: each step advances
// step.ticks after the action, and its events carry the post-advance tick.

import {
  ActOutcome,
  ActionStep,
  GameEvent,
  OpResult,
  PatchOp,
  PatchOutcome,
  SchemaDoc,
  SnapshotDoc,
  StateValue,
  WireError,
} from "./wire";

export const COLLIDER_FAULTS = ["no_hp_decrement", "weak_decrement", "no_game_over"] as const;

const GRID = 10;
const DAMAGE = 25;
const WEAK_DAMAGE = 10;
const DIRECTIONS: Record<string, [number, number]> = {
  up: [0, -1],
  down: [0, 1],
  left: [-1, 0],
  right: [1, 0],
};

export const COLLIDER_SCHEMA: SchemaDoc = {
  state_paths: { "player.hp": "number", "player.pos": "point", phase: "string" },
  actions: { move: { dir: "string" } },
  entity_types: { obstacle: { container: "obstacles", props: { pos: "point" } } },
  events: ["collision", "game_over"],
};

interface ColliderState {
  player: { hp: number; pos: [number, number] };
  phase: string;
  obstacles: Record<string, { pos: [number, number] }>;
}

// state trees are plain JSON; avoid structuredClone, which jsdom lacks
function deepClone<T>(value: T): T {
  if (value === null || typeof value !== "object") return value;
  if (Array.isArray(value)) return value.map(deepClone) as unknown as T;
  const out: Record<string, unknown> = {};
  for (const [key, entry] of Object.entries(value as object)) {
    out[key] = deepClone(entry);
  }
  return out as T;
}

export function parseFaults(raw: string | null): string[] {
  const flags = (raw ?? "").split(",").map((f) => f.trim()).filter(Boolean);
  const known = new Set<string>(COLLIDER_FAULTS);
  for (const flag of flags) {
    if (!known.has(flag)) {
      throw new Error(`unknown fault flag for collider: ${flag}`);
    }
  }
  return flags;
}

function isNumber(v: unknown): v is number {
  return typeof v === "number" && Number.isFinite(v);
}

function isPoint(v: unknown): v is [number, number] {
  return Array.isArray(v) && v.length === 2 && v.every(isNumber);
}

function matchesTag(value: unknown, tag: string): boolean {
  if (tag === "number") return isNumber(value);
  if (tag === "string") return typeof value === "string";
  if (tag === "bool") return typeof value === "boolean";
  if (tag === "point") return isPoint(value);
  return false;
}

// dot-path typing over the collider schema, including entity prop patterns
// (obstacles.<id>.pos) and point components (player.pos.0)
function pathType(path: string): string | null {
  const direct = COLLIDER_SCHEMA.state_paths[path];
  if (direct) return direct;
  const segs = path.split(".");
  if (segs.length >= 3 && segs[0] === "obstacles" && segs.slice(2).join(".") === "pos") {
    return "point";
  }
  if (segs.length >= 2 && (segs[segs.length - 1] === "0" || segs[segs.length - 1] === "1")) {
    const parent = pathType(segs.slice(0, -1).join("."));
    if (parent === "point") return "number";
  }
  return null;
}

function resolve(state: ColliderState, path: string): { found: boolean; value?: unknown } {
  let node: unknown = state;
  for (const seg of path.split(".")) {
    if (Array.isArray(node)) {
      const index = /^\d+$/.test(seg) ? Number(seg) : -1;
      if (index < 0 || index >= node.length) return { found: false };
      node = node[index];
    } else if (node !== null && typeof node === "object" && seg in (node as object)) {
      node = (node as Record<string, unknown>)[seg];
    } else {
      return { found: false };
    }
  }
  return { found: true, value: node };
}

function assign(state: ColliderState, path: string, value: StateValue): void {
  const segs = path.split(".");
  const parent = resolve(state, segs.slice(0, -1).join("."));
  const last = segs[segs.length - 1];
  const node = segs.length > 1 ? parent.value : state;
  if (Array.isArray(node)) {
    node[Number(last)] = value;
  } else {
    (node as Record<string, StateValue>)[last] = value;
  }
}

export class ColliderGame {
  readonly faults: ReadonlySet<string>;
  readonly seed: number;
  private state: ColliderState;
  private tick = 0;
  private eventLog: GameEvent[] = [];
  private usedIds = new Set<string>();

  constructor(faults: Iterable<string> = [], seed = 0) {
    this.faults = new Set(faults);
    this.seed = seed;
    this.state = { player: { hp: 100, pos: [0, 0] }, phase: "playing", obstacles: {} };
  }

  schema(): SchemaDoc {
    return deepClone(COLLIDER_SCHEMA);
  }

  snapshot(): SnapshotDoc {
    return { tick: this.tick, state: deepClone(this.state) as never };
  }

  events(since = 0): GameEvent[] {
    return deepClone(this.eventLog.filter((e) => e.tick >= since));
  }

  // all-or-nothing: any failing op restores the pre-patch state exactly
  applyPatch(ops: PatchOp[]): PatchOutcome {
    const savedState = deepClone(this.state);
    const savedIds = new Set(this.usedIds);
    const results: OpResult[] = [];
    let failed = false;
    for (const op of ops) {
      if (failed) {
        results.push({ ok: false, error: { code: "not-attempted", message: "earlier op failed" } });
        continue;
      }
      const error = this.applyOne(op);
      if (error === null) {
        results.push({ ok: true });
      } else {
        results.push({ ok: false, error });
        failed = true;
      }
    }
    if (failed) {
      this.state = savedState;
      this.usedIds = savedIds;
    }
    return { results, rolled_back: failed, snapshot: this.snapshot() };
  }

  private applyOne(op: PatchOp): WireError | null {
    if (op.op === "set") {
      if (!op.path) return { code: "bad-request", message: "set op requires a path" };
      const tag = pathType(op.path);
      if (tag === null) return { code: "unknown-path", message: op.path };
      if (!resolve(this.state, op.path).found) {
        return { code: "unknown-path", message: `${op.path} not present` };
      }
      if (!matchesTag(op.value, tag)) {
        return { code: "type-mismatch", message: `${op.path} expects ${tag}` };
      }
      assign(this.state, op.path, deepClone(op.value));
      return null;
    }
    if (op.op === "spawn") {
      if (op.entity_type !== "obstacle") {
        return { code: "unknown-entity-type", message: String(op.entity_type) };
      }
      if (this.usedIds.has(op.id)) {
        return { code: "duplicate-entity-id", message: op.id };
      }
      const props = op.props ?? {};
      const keys = Object.keys(props);
      if (keys.length !== 1 || !("pos" in props)) {
        return { code: "type-mismatch", message: "obstacle props must be exactly ['pos']" };
      }
      if (!isPoint(props.pos)) {
        return { code: "type-mismatch", message: "prop pos expects point" };
      }
      if (op.parent != null && !this.usedIds.has(op.parent)) {
        return { code: "unknown-path", message: `parent ${op.parent} not present` };
      }
      this.state.obstacles[op.id] = { pos: [props.pos[0], props.pos[1]] };
      this.usedIds.add(op.id);
      return null;
    }
    if (op.op === "remove") {
      if (op.id in this.state.obstacles) {
        delete this.state.obstacles[op.id];
        return null;
      }
      return { code: "unknown-path", message: `entity ${op.id} not present` };
    }
    return { code: "bad-request", message: `unknown op ${(op as { op?: string }).op}` };
  }

  act(steps: ActionStep[]): ActOutcome {
    const trace = [];
    const fresh: GameEvent[] = [];
    const logs: string[] = [];
    for (let index = 0; index < steps.length; index += 1) {
      const step = steps[index];
      const { accepted, events, log } = this.actOne(step.action, step.params ?? {});
      this.tick += Math.max(1, Math.trunc(step.ticks ?? 1));
      for (const [type, data] of events) {
        const stamped = { tick: this.tick, type, data };
        this.eventLog.push(stamped);
        fresh.push(deepClone(stamped));
      }
      if (log) logs.push(log);
      trace.push({ step: index, accepted });
    }
    return { action_trace: trace, events: fresh, logs, tick: this.tick };
  }

  private actOne(action: string, params: Record<string, StateValue>): {
    accepted: boolean;
    events: Array<[string, Record<string, StateValue>]>;
    log: string | null;
  } {
    if (action !== "move") {
      return { accepted: false, events: [], log: `rejected ${action}: unknown action` };
    }
    const dir = params.dir;
    if (typeof dir !== "string" || !(dir in DIRECTIONS)) {
      return { accepted: false, events: [], log: `rejected move: bad direction ${JSON.stringify(dir)}` };
    }
    if (this.state.phase === "game_over") {
      return { accepted: false, events: [], log: "rejected move: game over" };
    }
    const [dx, dy] = DIRECTIONS[dir];
    const [x, y] = this.state.player.pos;
    const nx = x + dx;
    const ny = y + dy;
    if (nx < 0 || nx >= GRID || ny < 0 || ny >= GRID) {
      return { accepted: false, events: [], log: "rejected move: out of bounds" };
    }
    this.state.player.pos = [nx, ny];
    const events: Array<[string, Record<string, StateValue>]> = [];
    const occupied = Object.values(this.state.obstacles).some(
      (ob) => ob.pos[0] === nx && ob.pos[1] === ny,
    );
    if (occupied) {
      events.push(["collision", { at: [nx, ny] }]);
      let damage = DAMAGE;
      if (this.faults.has("weak_decrement")) damage = WEAK_DAMAGE;
      if (this.faults.has("no_hp_decrement")) damage = 0;
      this.state.player.hp -= damage;
      if (this.state.player.hp <= 0 && !this.faults.has("no_game_over")) {
        this.state.phase = "game_over";
        events.push(["game_over", {}]);
      }
    }
    return { accepted: true, events, log: null };
  }
}
