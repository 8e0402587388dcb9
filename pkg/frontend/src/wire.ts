// Wire-level types and canonical JSON shared by the page hook and the bridge.
// Responses must be byte-deterministic: keys sorted, integral numbers
// serialized without a fraction part (native to JS numbers).

export type Scalar = number | string | boolean;
export type StateValue = Scalar | StateValue[] | { [key: string]: StateValue };
export type StateTree = { [key: string]: StateValue };

export interface SpawnOp {
  op: "spawn";
  entity_type: string;
  id: string;
  props: Record<string, StateValue>;
  parent?: string | null;
}
export interface RemoveOp {
  op: "remove";
  id: string;
}
export interface SetOp {
  op: "set";
  path: string;
  value: StateValue;
}
export type PatchOp = SpawnOp | RemoveOp | SetOp;

export interface ActionStep {
  action: string;
  params?: Record<string, StateValue>;
  ticks?: number;
}

export interface WireError {
  code: string;
  message: string;
}
export interface OpResult {
  ok: boolean;
  error?: WireError;
}

export interface SnapshotDoc {
  tick: number;
  state: StateTree;
}
export interface GameEvent {
  tick: number;
  type: string;
  data: Record<string, StateValue>;
}
export interface TraceEntry {
  step: number;
  accepted: boolean;
}

export interface PatchOutcome {
  results: OpResult[];
  rolled_back: boolean;
  snapshot: SnapshotDoc;
}
export interface ActOutcome {
  action_trace: TraceEntry[];
  events: GameEvent[];
  logs: string[];
  tick: number;
}

export interface SchemaDoc {
  state_paths: Record<string, string>;
  actions: Record<string, Record<string, string>>;
  entity_types: Record<string, { container: string; props: Record<string, string> }>;
  events: string[];
}

export function canonicalStringify(value: unknown): string {
  if (value === null || typeof value !== "object") {
    if (typeof value === "number" && !Number.isFinite(value)) {
      throw new Error(`non-finite number not representable: ${value}`);
    }
    return JSON.stringify(value);
  }
  if (Array.isArray(value)) {
    return "[" + value.map(canonicalStringify).join(",") + "]";
  }
  const keys = Object.keys(value as object).sort();
  const body = keys
    .filter((k) => (value as Record<string, unknown>)[k] !== undefined)
    .map((k) => JSON.stringify(k) + ":" + canonicalStringify((value as Record<string, unknown>)[k]));
  return "{" + body.join(",") + "}";
}

export function err(code: string, message: string): { ok: false; error: WireError } {
  return { ok: false, error: { code, message } };
}
