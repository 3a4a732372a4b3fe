"""Execution results and the target adapter over the flat interpreter.

The compiled kernel is used when its extension built; otherwise the
pure-Python interpreter in flat.py runs the same flat representation.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

from ..acfg import ProgramAcfg
from .flat import (
    FlatProgram, OUTCOME_CRASH, OUTCOME_EXIT, OUTCOME_LIMIT, run_flat_py,
)
from .program import CRASH_KINDS, MAX_CALL_DEPTH, Program, extract_acfg

try:
    from . import _speedups
    HAVE_SPEEDUPS = True
except ImportError:
    _speedups = None
    HAVE_SPEEDUPS = False

__all__ = [
    "Outcome", "ExecutionResult", "ProgramTarget",
    "execute", "HAVE_SPEEDUPS", "DEFAULT_STEP_LIMIT",
]

DEFAULT_STEP_LIMIT = 100_000

BlockRef = Tuple[str, int]


@dataclass(frozen=True)
class Outcome:
    kind: str                        # "exit" | "crash" | "limit"
    crash_kind: str = ""
    site: Optional[BlockRef] = None
    bug_id: int = 0

    @staticmethod
    def exit() -> "Outcome":
        return Outcome("exit")

    @staticmethod
    def limit() -> "Outcome":
        return Outcome("limit")

    @staticmethod
    def crash(crash_kind: str, site: BlockRef, bug_id: int) -> "Outcome":
        return Outcome("crash", crash_kind, site, bug_id)


@dataclass(frozen=True)
class ExecutionResult:
    path: List[BlockRef]
    outcome: Outcome
    steps: int


class ProgramTarget:
    """Adapter exposing execute / block_universe / acfg over one program."""

    def __init__(self, program: Program,
                 step_limit: int = DEFAULT_STEP_LIMIT,
                 backend: str = "auto"):
        if step_limit <= 0:
            raise ValueError("step_limit must be > 0")
        if backend == "auto":
            backend = "compiled" if HAVE_SPEEDUPS else "python"
        if backend not in ("compiled", "python"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "compiled" and not HAVE_SPEEDUPS:
            raise RuntimeError("compiled VM kernel is not available")
        self.program = program
        self.step_limit = step_limit
        self.backend = backend
        self._flat = FlatProgram(program)
        self._kernel = (_speedups.FlatKernel(self._flat, MAX_CALL_DEPTH)
                        if backend == "compiled" else None)

    def execute(self, data: bytes) -> ExecutionResult:
        fp = self._flat
        if self._kernel is not None:
            outcome_code, crash_entry, path_g = self._kernel.run(
                bytes(data), self.step_limit)
        else:
            outcome_code, crash_entry, path_g = run_flat_py(
                fp, bytes(data), self.step_limit)
        refs = fp.block_refs
        path = [refs[g] for g in path_g]
        if outcome_code == OUTCOME_CRASH:
            outcome = Outcome.crash(
                CRASH_KINDS[fp.bug_kind[crash_entry]],
                path[-1],
                int(fp.bug_id[crash_entry]),
            )
        elif outcome_code == OUTCOME_LIMIT:
            outcome = Outcome.limit()
        else:
            outcome = Outcome.exit()
        return ExecutionResult(path, outcome, len(path))

    def block_universe(self) -> List[BlockRef]:
        return list(self._flat.block_refs)

    def acfg(self) -> ProgramAcfg:
        return extract_acfg(self.program)


def execute(program: Program, data: bytes,
            step_limit: int = DEFAULT_STEP_LIMIT,
            backend: str = "auto") -> ExecutionResult:
    return ProgramTarget(program, step_limit, backend).execute(data)
