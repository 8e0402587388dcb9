"""Engine-agnostic runtime state-patching contract.

Defines the wire-level data model (patch ops, action steps, snapshots,
evidence, runtime schema) and a client for any runtime that speaks the
newline-delimited JSON protocol over stdin/stdout:

    request:  {"op":"launch","game":...,"seed":...} | {"op":"patch","ops":[...]}
              | {"op":"act","steps":[...]} | {"op":"snapshot"}
              | {"op":"events","since":tick} | {"op":"shutdown"}
    response: {"ok":true, ...payload} | {"ok":false,"error":{"code":...,"message":...}}

Exactly one response per request, in order. Numbers are IEEE-754 doubles
with integral values serialized without a fraction part.

Time is fixed-tick: each action step advances exactly ``step.ticks`` ticks
after the action applies, and events emitted by the action are stamped with
the post-advance tick. There is no wall-clock physics anywhere.
"""

from __future__ import annotations

import json
import shlex
import subprocess
import tempfile
import threading
from collections import deque
from dataclasses import dataclass, field
from queue import Empty, Queue
from typing import Any, Iterator, Mapping, Sequence

from .jsonutil import canonical_dumps, normalize

SCALAR_TYPE_TAGS = ("number", "string", "bool", "point")


def value_matches_tag(value: Any, tag: str) -> bool:
    """Check a patch/assertion value against a schema type tag."""
    if tag == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if tag == "string":
        return isinstance(value, str)
    if tag == "bool":
        return isinstance(value, bool)
    if tag == "point":
        return (isinstance(value, (list, tuple)) and len(value) == 2
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value))
    return False


# ---------------------------------------------------------------------------
# errors

class ProtocolError(Exception):
    """Base for all protocol-level failures; carries a machine-readable code."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message


class LaunchFailure(ProtocolError):
    pass


class RuntimeCrash(ProtocolError):
    """The runtime process died or the transport broke mid-session."""


class ProtocolTimeout(ProtocolError):
    """No response within the deadline; the session has been killed."""


class SessionClosed(ProtocolError):
    def __init__(self, message: str = "session is closed"):
        super().__init__("session-closed", message)


# ---------------------------------------------------------------------------
# patch ops

@dataclass(frozen=True)
class Spawn:
    entity_type: str
    entity_id: str
    props: Mapping[str, Any]
    parent: str | None = None

    def to_wire(self) -> dict:
        op = {"op": "spawn", "entity_type": self.entity_type, "id": self.entity_id,
              "props": dict(self.props)}
        if self.parent is not None:
            op["parent"] = self.parent
        return op


@dataclass(frozen=True)
class Remove:
    entity_id: str

    def to_wire(self) -> dict:
        return {"op": "remove", "id": self.entity_id}


@dataclass(frozen=True)
class SetValue:
    path: str
    value: Any

    def to_wire(self) -> dict:
        return {"op": "set", "path": self.path, "value": self.value}


PatchOp = Spawn | Remove | SetValue


def patch_op_from_wire(raw: Mapping[str, Any]) -> PatchOp:
    kind = raw.get("op")
    if kind == "spawn":
        return Spawn(raw["entity_type"], raw["id"], raw.get("props", {}), raw.get("parent"))
    if kind == "remove":
        return Remove(raw["id"])
    if kind == "set":
        if not raw.get("path"):
            raise ValueError("set op requires a non-empty path")
        return SetValue(raw["path"], raw["value"])
    raise ValueError(f"unknown patch op kind: {kind!r}")


def validate_patch_values(ops: Sequence[PatchOp]) -> None:
    """Reject non-finite numerics anywhere in a patch (protocol invariant)."""
    for op in ops:
        payload = op.to_wire()
        normalize(payload)  # raises ValueError on NaN/inf


# ---------------------------------------------------------------------------
# actions, snapshots, evidence

@dataclass(frozen=True)
class ActionStep:
    action: str
    params: Mapping[str, Any] = field(default_factory=dict)
    ticks: int = 1

    def __post_init__(self):
        if self.ticks < 1:
            raise ValueError("ActionStep.ticks must be >= 1")

    def to_wire(self) -> dict:
        return {"action": self.action, "params": dict(self.params), "ticks": self.ticks}


def action_step_from_wire(raw: Mapping[str, Any]) -> ActionStep:
    return ActionStep(raw["action"], raw.get("params", {}), int(raw.get("ticks", 1)))


@dataclass(frozen=True)
class Snapshot:
    """A tick-stamped state tree; every leaf is addressable by one dot path."""

    tick: int
    state: Mapping[str, Any]

    def get(self, path: str, default: Any = None) -> Any:
        found, value = resolve_path(self.state, path)
        return value if found else default

    def has(self, path: str) -> bool:
        return resolve_path(self.state, path)[0]

    def to_wire(self) -> dict:
        return {"tick": self.tick, "state": normalize(self.state)}

    @classmethod
    def from_wire(cls, raw: Mapping[str, Any]) -> "Snapshot":
        return cls(int(raw["tick"]), normalize(raw["state"]))


@dataclass
class Evidence:
    """Everything a unit execution observed, judged after the fact.

    ``pre`` is taken after injection and before interaction. ``status``
    other than ``completed`` means the interaction never finished and any
    assertion over this evidence fails by contract.
    """

    pre: Snapshot | None
    post: Snapshot | None
    events: list[dict]
    action_trace: list[dict]
    logs: list[str]
    status: str  # completed | runtime_crash | timeout
    duration_ms: int = 0

    def to_json(self) -> dict:
        return {
            "pre": self.pre.to_wire() if self.pre else None,
            "post": self.post.to_wire() if self.post else None,
            "events": normalize(self.events),
            "action_trace": self.action_trace,
            "logs": list(self.logs),
            "status": self.status,
        }

    def canonical_bytes(self) -> bytes:
        """Replay-stable byte form; excludes wall-clock duration."""
        return canonical_dumps(self.to_json()).encode("utf-8")


@dataclass(frozen=True)
class RuntimeSchema:
    """Machine-readable parameter structure reported at launch handshake."""

    state_paths: Mapping[str, str]          # dot path -> type tag
    actions: Mapping[str, Mapping[str, str]]  # action name -> param name -> type tag
    entity_types: Mapping[str, Mapping[str, Any]]  # name -> {container, props{name->tag}}
    events: Sequence[str]

    def validate(self) -> None:
        for path, tag in self.state_paths.items():
            if tag not in SCALAR_TYPE_TAGS:
                raise ValueError(f"state path {path!r} has unknown type tag {tag!r}")
        for name, params in self.actions.items():
            for pname, tag in params.items():
                if tag not in SCALAR_TYPE_TAGS:
                    raise ValueError(f"action {name!r} param {pname!r} has unknown tag {tag!r}")
        for ename, decl in self.entity_types.items():
            if "container" not in decl or "props" not in decl:
                raise ValueError(f"entity type {ename!r} must declare container and props")
            for pname, tag in decl["props"].items():
                if tag not in SCALAR_TYPE_TAGS:
                    raise ValueError(f"entity {ename!r} prop {pname!r} has unknown tag {tag!r}")

    def path_type(self, path: str) -> str | None:
        """Type tag for a path, resolving entity prop patterns container.<id>.<prop>."""
        hit = self.state_paths.get(path)
        if hit is not None:
            return hit
        segs = path.split(".")
        if len(segs) >= 3:
            container, prop = segs[0], ".".join(segs[2:])
            for decl in self.entity_types.values():
                if decl["container"] == container and prop in decl["props"]:
                    return decl["props"][prop]
        # element access into a point (e.g. player.pos.0)
        if segs and segs[-1] in ("0", "1"):
            parent = self.path_type(".".join(segs[:-1]))
            if parent == "point":
                return "number"
        return None

    def addressable(self, path: str) -> bool:
        """Whether a path can exist at runtime: a typed leaf, an entity
        container, or an entity node (container.<id>)."""
        if self.path_type(path) is not None:
            return True
        segs = path.split(".")
        containers = {decl["container"] for decl in self.entity_types.values()}
        return segs[0] in containers and len(segs) <= 2

    def to_wire(self) -> dict:
        return {
            "state_paths": dict(self.state_paths),
            "actions": {k: dict(v) for k, v in self.actions.items()},
            "entity_types": {k: {"container": v["container"], "props": dict(v["props"])}
                             for k, v in self.entity_types.items()},
            "events": list(self.events),
        }

    @classmethod
    def from_wire(cls, raw: Mapping[str, Any]) -> "RuntimeSchema":
        schema = cls(raw["state_paths"], raw["actions"], raw["entity_types"], raw["events"])
        schema.validate()
        return schema


@dataclass
class PatchReport:
    """Per-op outcome of an all-or-nothing patch application."""

    results: list[dict]       # {"ok": bool, "error": {code, message}?} per op
    rolled_back: bool
    realized: Snapshot

    @property
    def ok(self) -> bool:
        return not self.rolled_back

    def first_error(self) -> dict | None:
        for entry in self.results:
            if not entry.get("ok") and entry.get("error", {}).get("code") != "not-attempted":
                return entry["error"]
        return None


# ---------------------------------------------------------------------------
# dot-path addressing over state trees

def _step(node: Any, seg: str) -> tuple[bool, Any]:
    if isinstance(node, Mapping):
        if seg in node:
            return True, node[seg]
        return False, None
    if isinstance(node, list):
        if seg.isdigit() and int(seg) < len(node):
            return True, node[int(seg)]
        return False, None
    return False, None


def resolve_path(state: Any, path: str) -> tuple[bool, Any]:
    node = state
    for seg in path.split("."):
        found, node = _step(node, seg)
        if not found:
            return False, None
    return True, node


def assign_path(state: dict, path: str, value: Any) -> None:
    segs = path.split(".")
    node: Any = state
    for seg in segs[:-1]:
        found, node = _step(node, seg)
        if not found:
            raise KeyError(path)
    last = segs[-1]
    if isinstance(node, Mapping):
        if last not in node:
            raise KeyError(path)
        node[last] = value  # type: ignore[index]
    elif isinstance(node, list) and last.isdigit() and int(last) < len(node):
        node[int(last)] = value
    else:
        raise KeyError(path)


def delete_path(state: dict, path: str) -> None:
    segs = path.split(".")
    node: Any = state
    for seg in segs[:-1]:
        found, node = _step(node, seg)
        if not found:
            raise KeyError(path)
    if isinstance(node, dict) and segs[-1] in node:
        del node[segs[-1]]
    else:
        raise KeyError(path)


def leaf_paths(state: Any, prefix: str = "") -> Iterator[tuple[str, Any]]:
    """Every (canonical path, leaf value) pair in a state tree."""
    if isinstance(state, Mapping):
        for key in state:
            sub = f"{prefix}.{key}" if prefix else str(key)
            yield from leaf_paths(state[key], sub)
    elif isinstance(state, list):
        for i, item in enumerate(state):
            sub = f"{prefix}.{i}" if prefix else str(i)
            yield from leaf_paths(item, sub)
    else:
        yield prefix, state


# ---------------------------------------------------------------------------
# subprocess client

class SubprocessSession:
    """One live runtime session over a child process's stdin/stdout.

    Single-threaded by contract: callers must serialize requests. Each
    session runs in its own scratch working directory unless ``cwd`` is
    given, so ambient file state cannot leak between units.
    """

    def __init__(self, argv: Sequence[str], cwd: str | None = None):
        self._tmpdir: tempfile.TemporaryDirectory | None = None
        if cwd is None:
            self._tmpdir = tempfile.TemporaryDirectory(prefix="gamecheck-session-")
            cwd = self._tmpdir.name
        self._argv = list(argv)
        try:
            self._proc = subprocess.Popen(
                self._argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.PIPE,
                text=True,
                bufsize=1,
                cwd=cwd,
            )
        except OSError as exc:
            self._cleanup_tmpdir()
            raise LaunchFailure("spawn-failed", f"{self._argv[0]}: {exc}") from exc
        self._lock = threading.Lock()
        self._responses: Queue = Queue()
        self._stderr_tail: deque[str] = deque(maxlen=40)
        self._closed = False
        self.schema: RuntimeSchema | None = None
        self.initial: Snapshot | None = None
        self._reader = threading.Thread(target=self._read_stdout, daemon=True)
        self._errreader = threading.Thread(target=self._read_stderr, daemon=True)
        self._reader.start()
        self._errreader.start()

    # -- transport ----------------------------------------------------------

    def _read_stdout(self) -> None:
        assert self._proc.stdout is not None
        try:
            for line in self._proc.stdout:
                line = line.strip()
                if line:
                    self._responses.put(line)
        except ValueError:
            pass  # pipe closed under us
        finally:
            self._responses.put(None)  # EOF marker

    def _read_stderr(self) -> None:
        assert self._proc.stderr is not None
        try:
            for line in self._proc.stderr:
                self._stderr_tail.append(line.rstrip())
        except ValueError:
            pass

    def _request(self, payload: dict, timeout: float | None = None) -> dict:
        if self._closed:
            raise SessionClosed()
        with self._lock:
            try:
                assert self._proc.stdin is not None
                self._proc.stdin.write(json.dumps(normalize(payload)) + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise RuntimeCrash("transport-broken", self._stderr_summary()) from exc
            try:
                line = self._responses.get(timeout=timeout)
            except Empty:
                self.kill()
                raise ProtocolTimeout("timeout", f"no response to {payload.get('op')!r} "
                                                 f"within {timeout}s") from None
            if line is None:
                raise RuntimeCrash("runtime-exited", self._stderr_summary())
            try:
                response = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RuntimeCrash("malformed-response", line[:200]) from exc
        if not response.get("ok"):
            err = response.get("error", {})
            raise ProtocolError(err.get("code", "unknown"), err.get("message", ""))
        return response

    def _stderr_summary(self) -> str:
        return " | ".join(self._stderr_tail) or "<no stderr>"

    # -- session ops --------------------------------------------------------

    def launch(self, game: str, seed: int, timeout: float | None = None) -> RuntimeSchema:
        try:
            response = self._request({"op": "launch", "game": game, "seed": seed}, timeout)
        except ProtocolTimeout:
            raise
        except ProtocolError as exc:
            raise LaunchFailure(exc.code, exc.message) from exc
        self.schema = RuntimeSchema.from_wire(response["schema"])
        self.initial = Snapshot.from_wire(response["snapshot"])
        return self.schema

    def apply_patch(self, ops: Sequence[PatchOp], timeout: float | None = None) -> PatchReport:
        validate_patch_values(ops)
        response = self._request({"op": "patch", "ops": [op.to_wire() for op in ops]}, timeout)
        return PatchReport(
            results=response["results"],
            rolled_back=bool(response.get("rolled_back")),
            realized=Snapshot.from_wire(response["snapshot"]),
        )

    def execute(self, steps: Sequence[ActionStep],
                timeout: float | None = None) -> tuple[list[dict], list[dict], list[str]]:
        response = self._request({"op": "act", "steps": [s.to_wire() for s in steps]}, timeout)
        return response["action_trace"], normalize(response["events"]), response["logs"]

    def snapshot(self, timeout: float | None = None) -> Snapshot:
        return Snapshot.from_wire(self._request({"op": "snapshot"}, timeout)["snapshot"])

    def events(self, since: int = 0, timeout: float | None = None) -> list[dict]:
        return normalize(self._request({"op": "events", "since": since}, timeout)["events"])

    def shutdown(self, timeout: float = 5.0) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            with self._lock:
                if self._proc.poll() is None and self._proc.stdin is not None:
                    self._proc.stdin.write(json.dumps({"op": "shutdown"}) + "\n")
                    self._proc.stdin.flush()
        except (BrokenPipeError, OSError):
            pass
        try:
            self._proc.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()
        self._cleanup_tmpdir()

    def kill(self) -> None:
        self._closed = True
        if self._proc.poll() is None:
            self._proc.kill()
            self._proc.wait()
        self._cleanup_tmpdir()

    def _cleanup_tmpdir(self) -> None:
        if self._tmpdir is not None:
            self._tmpdir.cleanup()
            self._tmpdir = None

    @property
    def alive(self) -> bool:
        return not self._closed and self._proc.poll() is None


class SubprocessRuntime:
    """Runtime factory binding a command template to a game reference.

    ``cmd`` is an argv template (string or list); ``{seed}`` placeholders
    are substituted per session. The launch handshake happens inside
    :meth:`open`, so a factory failure *is* a launch failure.
    """

    def __init__(self, cmd: str | Sequence[str], game: str, cwd: str | None = None):
        self.argv = shlex.split(cmd) if isinstance(cmd, str) else list(cmd)
        self.game = game
        self.cwd = cwd

    def open(self, seed: int, timeout: float | None = None) -> SubprocessSession:
        argv = [arg.replace("{seed}", str(seed)) for arg in self.argv]
        session = SubprocessSession(argv, cwd=self.cwd)
        try:
            session.launch(self.game, seed, timeout=timeout)
        except Exception:
            session.kill()
            raise
        return session

    __call__ = open
