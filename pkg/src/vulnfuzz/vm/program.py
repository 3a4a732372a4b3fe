"""Toy bytecode programs: model, assembler, ACFG extraction, target generation.

Text format (line oriented, `#` comments):

    fn NAME
    block N:
      <instruction>*
      <terminator>

Instructions: nop | alloc | calloc | free | load | store | arith [IMM]
            | cmp POS VAL | bug ID KIND POS:VAL[,POS:VAL...]
Terminators:  jmp N | jif POS VAL N M | call NAME | ret | halt

`jif POS VAL N M` branches to block N when input[POS] == VAL, else M
(out-of-range POS counts as a mismatch). `call NAME` runs NAME and
resumes at the next listed block of the caller; with no next block the
return unwinds a further level. `bug` crashes with its kind and id iff
every POS:VAL comparison holds on the input.
"""

import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Set, Tuple

from ..acfg import Acfg, BasicBlockNode, ProgramAcfg, get_default_schema

__all__ = [
    "Program", "Function", "Block", "Instruction", "Terminator",
    "AssemblyError", "TargetSpec", "BugPlan", "CRASH_KINDS",
    "assemble", "disassemble", "extract_acfg", "gen_target",
]

CRASH_KINDS = ("OOB_WRITE", "OOB_READ", "DOUBLE_FREE", "DIV_ZERO", "ASSERT")

MAX_CALL_DEPTH = 64


class AssemblyError(ValueError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"line {line}: {message}")


@dataclass(frozen=True)
class Instruction:
    opcode: str                      # nop/alloc/calloc/free/load/store/arith/cmp/bug
    args: Tuple[int, ...] = ()
    kind: str = ""                   # crash kind, bug only
    guard: Tuple[Tuple[int, int], ...] = ()   # (pos, val) conjunction, bug only


@dataclass(frozen=True)
class Terminator:
    kind: str                        # jmp/jif/call/ret/halt
    args: Tuple[int, ...] = ()
    callee: str = ""


@dataclass(frozen=True)
class Block:
    id: int
    instructions: Tuple[Instruction, ...]
    terminator: Terminator


@dataclass(frozen=True)
class Function:
    name: str
    blocks: Tuple[Block, ...]


@dataclass(frozen=True)
class Program:
    name: str
    functions: Tuple[Function, ...]

    @property
    def entry_function(self) -> Function:
        return self.functions[0]


_PLAIN_OPCODES = {"nop", "alloc", "calloc", "free", "load", "store"}


def _parse_int(tok: str, what: str, lineno: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise AssemblyError(f"{what} must be an integer, got {tok!r}", lineno)


def _parse_instruction(toks: List[str], lineno: int) -> Instruction:
    op = toks[0]
    if op in _PLAIN_OPCODES:
        if len(toks) != 1:
            raise AssemblyError(f"{op} takes no arguments", lineno)
        return Instruction(op)
    if op == "arith":
        if len(toks) == 1:
            return Instruction("arith")
        if len(toks) == 2:
            return Instruction("arith", (_parse_int(toks[1], "immediate", lineno),))
        raise AssemblyError("arith takes at most one immediate", lineno)
    if op == "cmp":
        if len(toks) != 3:
            raise AssemblyError("cmp takes POS VAL", lineno)
        pos = _parse_int(toks[1], "position", lineno)
        val = _parse_int(toks[2], "value", lineno)
        if pos < 0:
            raise AssemblyError("cmp position must be >= 0", lineno)
        return Instruction("cmp", (pos, val))
    if op == "bug":
        if len(toks) != 4:
            raise AssemblyError("bug takes ID KIND GUARD", lineno)
        bug_id = _parse_int(toks[1], "bug id", lineno)
        kind = toks[2]
        if kind not in CRASH_KINDS:
            raise AssemblyError(f"unknown crash kind {kind!r}", lineno)
        guard = []
        for part in toks[3].split(","):
            if ":" not in part:
                raise AssemblyError(f"bad guard term {part!r}", lineno)
            p, v = part.split(":", 1)
            pos = _parse_int(p, "guard position", lineno)
            val = _parse_int(v, "guard value", lineno)
            if pos < 0 or not (0 <= val <= 255):
                raise AssemblyError(f"guard term {part!r} out of range", lineno)
            guard.append((pos, val))
        return Instruction("bug", (bug_id,), kind, tuple(guard))
    raise AssemblyError(f"unknown instruction {op!r}", lineno)


def _parse_terminator(toks: List[str], lineno: int) -> Terminator:
    op = toks[0]
    if op == "jmp" and len(toks) == 2:
        return Terminator("jmp", (_parse_int(toks[1], "target", lineno),))
    if op == "jif" and len(toks) == 5:
        pos = _parse_int(toks[1], "position", lineno)
        val = _parse_int(toks[2], "value", lineno)
        then_b = _parse_int(toks[3], "target", lineno)
        else_b = _parse_int(toks[4], "target", lineno)
        if pos < 0:
            raise AssemblyError("jif position must be >= 0", lineno)
        return Terminator("jif", (pos, val, then_b, else_b))
    if op == "call" and len(toks) == 2:
        return Terminator("call", (), toks[1])
    if op == "ret" and len(toks) == 1:
        return Terminator("ret")
    if op == "halt" and len(toks) == 1:
        return Terminator("halt")
    raise AssemblyError(f"malformed terminator {' '.join(toks)!r}", lineno)


_TERMINATOR_OPS = {"jmp", "jif", "call", "ret", "halt"}


def assemble(text: str, name: str = "program") -> Program:
    functions: List[Function] = []
    fn_name: Optional[str] = None
    fn_line = 0
    blocks: List[Block] = []
    block_id: Optional[int] = None
    block_line = 0
    instructions: List[Instruction] = []
    terminator: Optional[Terminator] = None

    def close_block(lineno: int):
        nonlocal block_id, instructions, terminator
        if block_id is None:
            return
        if terminator is None:
            raise AssemblyError(
                f"block {block_id} has no terminator", block_line)
        if any(b.id == block_id for b in blocks):
            raise AssemblyError(f"duplicate block id {block_id}", block_line)
        blocks.append(Block(block_id, tuple(instructions), terminator))
        block_id, instructions, terminator = None, [], None

    def close_fn(lineno: int):
        nonlocal fn_name, blocks
        close_block(lineno)
        if fn_name is None:
            return
        if not blocks:
            raise AssemblyError(f"function {fn_name!r} has no blocks", fn_line)
        if any(f.name == fn_name for f in functions):
            raise AssemblyError(f"duplicate function {fn_name!r}", fn_line)
        functions.append(Function(fn_name, tuple(blocks)))
        fn_name, blocks = None, []

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        if toks[0] == "fn":
            if len(toks) != 2:
                raise AssemblyError("fn takes a single name", lineno)
            close_fn(lineno)
            fn_name, fn_line = toks[1], lineno
        elif toks[0] == "block":
            if fn_name is None:
                raise AssemblyError("block outside a function", lineno)
            if len(toks) != 2 or not toks[1].endswith(":"):
                raise AssemblyError("expected 'block N:'", lineno)
            close_block(lineno)
            block_id = _parse_int(toks[1][:-1], "block id", lineno)
            block_line = lineno
        else:
            if block_id is None:
                raise AssemblyError("instruction outside a block", lineno)
            if terminator is not None:
                raise AssemblyError(
                    "instruction after terminator", lineno)
            if toks[0] in _TERMINATOR_OPS:
                terminator = _parse_terminator(toks, lineno)
            else:
                instructions.append(_parse_instruction(toks, lineno))
    close_fn(len(text.splitlines()))
    if not functions:
        raise AssemblyError("program has no functions", 1)
    prog = Program(name, tuple(functions))
    _check_links(prog)
    return prog


def _check_links(prog: Program) -> None:
    fn_names = {f.name for f in prog.functions}
    for f in prog.functions:
        ids = {b.id for b in f.blocks}
        for b in f.blocks:
            t = b.terminator
            targets = ()
            if t.kind == "jmp":
                targets = (t.args[0],)
            elif t.kind == "jif":
                targets = (t.args[2], t.args[3])
            for tgt in targets:
                if tgt not in ids:
                    raise AssemblyError(
                        f"function {f.name!r} block {b.id}: "
                        f"jump to undefined block {tgt}", 0)
            if t.kind == "call" and t.callee not in fn_names:
                raise AssemblyError(
                    f"function {f.name!r} block {b.id}: "
                    f"call to undefined function {t.callee!r}", 0)


def _fmt_instruction(ins: Instruction) -> str:
    if ins.opcode == "cmp":
        return f"cmp {ins.args[0]} {ins.args[1]}"
    if ins.opcode == "arith" and ins.args:
        return f"arith {ins.args[0]}"
    if ins.opcode == "bug":
        guard = ",".join(f"{p}:{v}" for p, v in ins.guard)
        return f"bug {ins.args[0]} {ins.kind} {guard}"
    return ins.opcode


def _fmt_terminator(t: Terminator) -> str:
    if t.kind == "jmp":
        return f"jmp {t.args[0]}"
    if t.kind == "jif":
        return "jif {} {} {} {}".format(*t.args)
    if t.kind == "call":
        return f"call {t.callee}"
    return t.kind


def disassemble(prog: Program) -> str:
    lines = []
    for f in prog.functions:
        lines.append(f"fn {f.name}")
        for b in f.blocks:
            lines.append(f"block {b.id}:")
            for ins in b.instructions:
                lines.append(f"  {_fmt_instruction(ins)}")
            lines.append(f"  {_fmt_terminator(b.terminator)}")
    return "\n".join(lines) + "\n"


def block_successors(f: Function, b: Block) -> List[int]:
    """Intra-function CFG successors; call falls through to the next block."""
    t = b.terminator
    if t.kind == "jmp":
        return [t.args[0]]
    if t.kind == "jif":
        out = [t.args[2]]
        if t.args[3] != t.args[2]:
            out.append(t.args[3])
        return out
    if t.kind == "call":
        pos = next(i for i, blk in enumerate(f.blocks) if blk.id == b.id)
        if pos + 1 < len(f.blocks):
            return [f.blocks[pos + 1].id]
    return []


# Operand kinds contributed by each opcode, per the 8-category layout.
_OPERAND_KINDS = {
    "nop": ("op_void",),
    "alloc": ("op_reg",),
    "calloc": ("op_reg",),
    "free": ("op_reg",),
    "load": ("op_mem", "op_reg"),
    "store": ("op_mem", "op_reg"),
}
_STRING_SLOT = {"alloc": "str_malloc", "calloc": "str_calloc", "free": "str_free"}


def _block_attrs(f: Function, b: Block) -> Tuple[float, ...]:
    schema = get_default_schema()
    attrs = [0.0] * schema.dimension

    def bump(name: str, by: float = 1.0):
        attrs[schema.index(name)] += by

    for ins in b.instructions:
        bump(f"insn_{ins.opcode}")
        if ins.opcode in _OPERAND_KINDS:
            for k in _OPERAND_KINDS[ins.opcode]:
                bump(k)
        elif ins.opcode == "arith":
            bump("op_reg")
            bump("op_imm" if ins.args else "op_reg")
        elif ins.opcode == "cmp":
            bump("op_imm", 2)
        elif ins.opcode == "bug":
            bump("op_imm", len(ins.guard))
        if ins.opcode in _STRING_SLOT:
            bump(_STRING_SLOT[ins.opcode])
    t = b.terminator
    if t.kind == "jmp":
        bump("op_near")
    elif t.kind == "jif":
        bump("op_imm", 2)
        bump("op_near", 2)
    elif t.kind == "call":
        bump("insn_call")
        bump("op_near")
    return tuple(attrs)


def extract_acfg(prog: Program) -> ProgramAcfg:
    """One Acfg per function; call edges stay intra-function (fall-through)."""
    functions = []
    for f in prog.functions:
        blocks = tuple(BasicBlockNode(b.id, _block_attrs(f, b)) for b in f.blocks)
        edges = []
        for b in f.blocks:
            for s in block_successors(f, b):
                edges.append((b.id, s))
        functions.append(Acfg(f.name, f.blocks[0].id, blocks, tuple(edges)))
    return ProgramAcfg(prog.name, tuple(functions),
                       get_default_schema().dimension)


@dataclass(frozen=True)
class BugPlan:
    kind: str = "ASSERT"
    guard_depth: int = 1


@dataclass(frozen=True)
class TargetSpec:
    n_functions: int = 8
    bugs: Dict[int, BugPlan] = field(default_factory=dict)
    min_blocks: int = 2
    max_blocks: int = 4


_FILLER = ("nop", "load", "store", "arith", "alloc", "free", "calloc")


def gen_target(spec: TargetSpec, rng_seed: int
               ) -> Tuple[Program, Dict[int, Tuple[str, bytes]]]:
    """Build a dispatch-style target with plantable guarded bugs.

    main routes input[0] to one of n functions; each planted bug guards on
    input bytes 1..depth. Returns the program plus, per bug id, its host
    function and a triggering input (the reachability witness).
    """
    if spec.n_functions < 1:
        raise ValueError("need at least one function")
    for idx, plan in spec.bugs.items():
        if not (0 <= idx < spec.n_functions):
            raise ValueError(f"bug planted in nonexistent function {idx}")
        if plan.kind not in CRASH_KINDS:
            raise ValueError(f"unknown crash kind {plan.kind!r}")
        if plan.guard_depth < 1:
            raise ValueError("guard depth must be >= 1")
    if spec.n_functions > 256:
        raise ValueError("dispatch byte limits n_functions to 256")

    rng = random.Random(rng_seed)
    n = spec.n_functions
    lines = ["fn main"]
    end_block = 3 * n
    # Dispatch chain: block i tests input[0] == i and jumps to the call pair.
    for i in range(n):
        lines.append(f"block {i}:")
        nxt = i + 1 if i + 1 < n else end_block
        lines.append(f"  jif 0 {i} {n + 2 * i} {nxt}")
    for i in range(n):
        lines.append(f"block {n + 2 * i}:")
        lines.append(f"  call f{i}")
        lines.append(f"block {n + 2 * i + 1}:")
        lines.append("  halt")
    lines.append(f"block {end_block}:")
    lines.append("  halt")

    ground_truth: Dict[int, Tuple[str, bytes]] = {}
    next_bug_id = 1
    for i in range(n):
        fname = f"f{i}"
        lines.append(f"fn {fname}")
        n_blocks = rng.randint(spec.min_blocks, spec.max_blocks)
        plan = spec.bugs.get(i)
        for b in range(n_blocks):
            lines.append(f"block {b}:")
            for _ in range(rng.randint(1, 3)):
                op = rng.choice(_FILLER)
                lines.append(f"  {op}" + (f" {rng.randint(0, 99)}"
                                          if op == "arith" and rng.random() < 0.5
                                          else ""))
            if plan is not None and b == n_blocks - 1:
                guard = [(pos, rng.randint(0, 255))
                         for pos in range(1, plan.guard_depth + 1)]
                guard_txt = ",".join(f"{p}:{v}" for p, v in guard)
                lines.append(f"  bug {next_bug_id} {plan.kind} {guard_txt}")
                trigger = bytearray(plan.guard_depth + 1)
                trigger[0] = i
                for p, v in guard:
                    trigger[p] = v
                ground_truth[next_bug_id] = (fname, bytes(trigger))
                next_bug_id += 1
            lines.append(f"  jmp {b + 1}" if b + 1 < n_blocks else "  ret")
    prog = assemble("\n".join(lines) + "\n", name=f"target_{rng_seed}")

    # Reachability self-check: every witness must fire its bug.
    from .core import ProgramTarget
    tgt = ProgramTarget(prog)
    for bug_id, (fname, trigger) in ground_truth.items():
        res = tgt.execute(trigger)
        if res.outcome.kind != "crash" or res.outcome.bug_id != bug_id:
            raise RuntimeError(
                f"generated target failed witness check for bug {bug_id}")
    return prog, ground_truth
