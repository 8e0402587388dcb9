import sys
import threading
from contextlib import contextmanager
from pathlib import Path

import pytest

from gamecheck.protocol import SubprocessRuntime, resolve_path
from gamecheck.toyruntime import LocalRuntime

ACCEPTANCE_RESULTS: list[tuple[str, str]] = []


@contextmanager
def criterion(name: str):
    """Record one acceptance criterion verdict; printed in the run summary."""
    try:
        yield
    except BaseException:
        ACCEPTANCE_RESULTS.append((name, "FAIL"))
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    ACCEPTANCE_RESULTS.append((name, "PASS"))
    print(f"\nACCEPTANCE {name}: PASS")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for name, status in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(f"ACCEPTANCE {name}: {status}")


def delete_making_missing(state: dict, path: str) -> bool:
    """Make every path under ``path`` missing by deleting the nearest
    dict-keyed ancestor (list elements cannot be removed without re-indexing
    their siblings, which would perturb unrelated paths)."""
    segs = path.split(".")
    for cut in range(len(segs), 0, -1):
        parent_path = ".".join(segs[:cut - 1])
        parent = resolve_path(state, parent_path)[1] if parent_path else state
        if isinstance(parent, dict) and segs[cut - 1] in parent:
            del parent[segs[cut - 1]]
            return True
    return False

REPO_ROOT = Path(__file__).resolve().parent.parent
FIXTURES_DIR = REPO_ROOT / "fixtures"


def server_argv(template: str, faults=(), *extra: str) -> list[str]:
    argv = [sys.executable, "-m", "gamecheck.toyruntime.server", "--template", template]
    if faults:
        argv += ["--faults", ",".join(faults)]
    argv += list(extra)
    return argv


def subprocess_runtime(template: str, faults=(), *extra: str, cwd=None) -> SubprocessRuntime:
    return SubprocessRuntime(server_argv(template, faults, *extra), template, cwd=cwd)


@pytest.fixture
def collider_runtime():
    return subprocess_runtime("collider")


@pytest.fixture
def local_collider():
    return LocalRuntime("collider")


class CountingFactory:
    """Wraps a runtime factory; tracks concurrent and total open sessions."""

    def __init__(self, inner):
        self.inner = inner
        self.open_now = 0
        self.max_open = 0
        self.total = 0
        self._lock = threading.Lock()

    def __call__(self, seed, timeout=None):
        session = self.inner(seed, timeout)
        with self._lock:
            self.open_now += 1
            self.total += 1
            self.max_open = max(self.max_open, self.open_now)
        counter = self

        original_shutdown = session.shutdown
        original_kill = session.kill
        closed = {"done": False}

        def _mark_closed():
            with counter._lock:
                if not closed["done"]:
                    closed["done"] = True
                    counter.open_now -= 1

        def shutdown(timeout=5.0):
            original_shutdown(timeout)
            _mark_closed()

        def kill():
            original_kill()
            _mark_closed()

        session.shutdown = shutdown
        session.kill = kill
        return session
