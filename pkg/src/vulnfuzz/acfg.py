"""Attributed control-flow graphs: types, validation, queries, JSON format."""

import json
import math
from dataclasses import dataclass
from typing import List, Sequence, Set, Tuple

__all__ = [
    "AttributeSchema",
    "BasicBlockNode",
    "Acfg",
    "ProgramAcfg",
    "AcfgFormatError",
    "default_schema",
    "validate",
    "predecessors",
    "serialize",
    "parse",
    "acfg_to_obj",
    "acfg_from_obj",
]

# Known toy-VM opcodes come first among the instruction slots; the rest of
# the 244 instruction-count slots are reserved for richer front ends.
_KNOWN_MNEMONICS = (
    "call", "nop", "cmp", "alloc", "calloc", "free", "load", "store",
    "arith", "bug",
)
OPERAND_SLOT_NAMES = (
    "op_void", "op_reg", "op_mem", "op_base_index",
    "op_reg_disp", "op_imm", "op_far", "op_near",
)
STRING_SLOT_NAMES = ("str_malloc", "str_calloc", "str_free")

N_INSTRUCTION_SLOTS = 244
DEFAULT_DIMENSION = N_INSTRUCTION_SLOTS + len(OPERAND_SLOT_NAMES) + len(STRING_SLOT_NAMES)


class AcfgFormatError(ValueError):
    """Raised when an ACFG document cannot be parsed; carries a location."""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


@dataclass(frozen=True)
class AttributeSchema:
    names: Tuple[str, ...]

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise ValueError("attribute names must be unique")

    @property
    def dimension(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def default_schema() -> AttributeSchema:
    """255-slot layout: 244 instruction counts, 8 operand kinds, 3 string counts."""
    insn = [f"insn_{m}" for m in _KNOWN_MNEMONICS]
    insn += [f"insn_x{i:03d}" for i in range(N_INSTRUCTION_SLOTS - len(insn))]
    return AttributeSchema(tuple(insn) + OPERAND_SLOT_NAMES + STRING_SLOT_NAMES)


_DEFAULT_SCHEMA = None


def get_default_schema() -> AttributeSchema:
    global _DEFAULT_SCHEMA
    if _DEFAULT_SCHEMA is None:
        _DEFAULT_SCHEMA = default_schema()
    return _DEFAULT_SCHEMA


@dataclass(frozen=True)
class BasicBlockNode:
    id: int
    attrs: Tuple[float, ...]


@dataclass(frozen=True)
class Acfg:
    function_name: str
    entry: int
    blocks: Tuple[BasicBlockNode, ...]
    edges: Tuple[Tuple[int, int], ...]

    def block_ids(self) -> Set[int]:
        return {b.id for b in self.blocks}


@dataclass(frozen=True)
class ProgramAcfg:
    program_name: str
    functions: Tuple[Acfg, ...]
    schema_dim: int = DEFAULT_DIMENSION


def validate(acfg: Acfg, schema_dim: int = DEFAULT_DIMENSION) -> List[str]:
    """Check Acfg invariants. Returns a list of violations; empty means ok.

    Unreachable blocks are legal; they produce no violation.
    """
    violations = []
    seen = set()
    for b in acfg.blocks:
        if b.id in seen:
            violations.append(f"duplicate block id {b.id}")
        seen.add(b.id)
        if len(b.attrs) != schema_dim:
            violations.append(
                f"block {b.id}: attribute width mismatch "
                f"(got {len(b.attrs)}, want {schema_dim})"
            )
        for i, x in enumerate(b.attrs):
            if not math.isfinite(x):
                violations.append(f"block {b.id}: attr[{i}] not finite")
            elif x < 0:
                violations.append(f"block {b.id}: attr[{i}] negative")
    if acfg.entry not in seen:
        violations.append(f"entry block {acfg.entry} missing")
    seen_edges = set()
    for (u, v) in acfg.edges:
        if u not in seen:
            violations.append(f"edge ({u},{v}): edge source missing")
        if v not in seen:
            violations.append(f"edge ({u},{v}): edge target missing")
        if (u, v) in seen_edges:
            violations.append(f"duplicate edge ({u},{v})")
        seen_edges.add((u, v))
    return violations


def predecessors(acfg: Acfg, v: int) -> Set[int]:
    """Set of blocks with an edge into v (the aggregation neighborhood)."""
    if v not in acfg.block_ids():
        raise KeyError(f"unknown block id {v} in {acfg.function_name}")
    return {u for (u, w) in acfg.edges if w == v}


def acfg_to_obj(acfg: Acfg) -> dict:
    return {
        "name": acfg.function_name,
        "entry": acfg.entry,
        "blocks": [{"id": b.id, "attrs": list(b.attrs)} for b in acfg.blocks],
        "edges": [[u, v] for (u, v) in acfg.edges],
    }


def serialize(prog: ProgramAcfg) -> str:
    doc = {
        "program": prog.program_name,
        "schema_dim": prog.schema_dim,
        "functions": [acfg_to_obj(f) for f in prog.functions],
    }
    return json.dumps(doc)


def _expect(obj, keys: Sequence[str], where: str) -> None:
    if not isinstance(obj, dict):
        raise AcfgFormatError(f"expected object, got {type(obj).__name__}", where)
    for k in obj:
        if k not in keys:
            raise AcfgFormatError(f"unknown field {k!r}", where)
    for k in keys:
        if k not in obj:
            raise AcfgFormatError(f"missing field {k!r}", where)


def acfg_from_obj(obj: dict, schema_dim: int, where: str = "function") -> Acfg:
    _expect(obj, ("name", "entry", "blocks", "edges"), where)
    blocks = []
    for j, bobj in enumerate(obj["blocks"]):
        bwhere = f"{where}.blocks[{j}]"
        _expect(bobj, ("id", "attrs"), bwhere)
        attrs = bobj["attrs"]
        if not isinstance(attrs, list) or len(attrs) != schema_dim:
            raise AcfgFormatError(
                f"attribute width mismatch (got {len(attrs) if isinstance(attrs, list) else '?'},"
                f" want {schema_dim})", bwhere)
        blocks.append(BasicBlockNode(int(bobj["id"]), tuple(float(x) for x in attrs)))
    edges = []
    for j, e in enumerate(obj["edges"]):
        if not (isinstance(e, list) and len(e) == 2):
            raise AcfgFormatError("edge must be a pair", f"{where}.edges[{j}]")
        edges.append((int(e[0]), int(e[1])))
    acfg = Acfg(str(obj["name"]), int(obj["entry"]), tuple(blocks), tuple(edges))
    bad = validate(acfg, schema_dim)
    if bad:
        raise AcfgFormatError("; ".join(bad), where)
    return acfg


def parse(text: str) -> ProgramAcfg:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise AcfgFormatError(e.msg, f"line {e.lineno} col {e.colno}") from e
    _expect(doc, ("program", "schema_dim", "functions"), "document")
    schema_dim = doc["schema_dim"]
    if not isinstance(schema_dim, int) or schema_dim < 1:
        raise AcfgFormatError("schema_dim must be a positive integer", "document")
    functions = []
    names = set()
    for i, fobj in enumerate(doc["functions"]):
        f = acfg_from_obj(fobj, schema_dim, f"functions[{i}]")
        if f.function_name in names:
            raise AcfgFormatError(
                f"duplicate function name {f.function_name!r}", f"functions[{i}]")
        names.add(f.function_name)
        functions.append(f)
    return ProgramAcfg(str(doc["program"]), tuple(functions), schema_dim)
