from .program import (
    AssemblyError, Block, BugPlan, CRASH_KINDS, Function, Instruction,
    Program, TargetSpec, Terminator, assemble, disassemble, extract_acfg,
    gen_target,
)
from .core import (
    DEFAULT_STEP_LIMIT, ExecutionResult, HAVE_SPEEDUPS, Outcome,
    ProgramTarget, execute,
)

__all__ = [
    "AssemblyError", "Block", "BugPlan", "CRASH_KINDS", "Function",
    "Instruction", "Program", "TargetSpec", "Terminator", "assemble",
    "disassemble", "extract_acfg", "gen_target",
    "DEFAULT_STEP_LIMIT", "ExecutionResult", "HAVE_SPEEDUPS", "Outcome",
    "ProgramTarget", "execute",
]
