"""Flat array form of a program for the hot execution loop.

Both the pure-Python interpreter and the compiled one consume this exact
representation, so they are interchangeable and can be cross-checked.
"""

from typing import List, Tuple

import numpy as np

from .program import CRASH_KINDS, MAX_CALL_DEPTH, Program

__all__ = ["FlatProgram", "flatten", "run_flat_py",
           "OUTCOME_EXIT", "OUTCOME_CRASH", "OUTCOME_LIMIT"]

TERM_JMP, TERM_JIF, TERM_CALL, TERM_RET, TERM_HALT = range(5)
OUTCOME_EXIT, OUTCOME_CRASH, OUTCOME_LIMIT = range(3)


class FlatProgram:
    """Blocks numbered globally in listing order; all fields int64 arrays."""

    def __init__(self, prog: Program):
        gidx = {}
        fn_names = []
        block_refs: List[Tuple[str, int]] = []
        for fi, f in enumerate(prog.functions):
            fn_names.append(f.name)
            for b in f.blocks:
                gidx[(f.name, b.id)] = len(block_refs)
                block_refs.append((f.name, b.id))
        nb = len(block_refs)

        term_type = np.zeros(nb, dtype=np.int64)
        t0 = np.full(nb, -1, dtype=np.int64)
        t1 = np.full(nb, -1, dtype=np.int64)
        t2 = np.full(nb, -1, dtype=np.int64)
        t3 = np.full(nb, -1, dtype=np.int64)
        bug_start = np.zeros(nb, dtype=np.int64)
        bug_end = np.zeros(nb, dtype=np.int64)
        bug_id: List[int] = []
        bug_kind: List[int] = []
        guard_start: List[int] = []
        guard_end: List[int] = []
        guard_pos: List[int] = []
        guard_val: List[int] = []

        entry_of = {f.name: gidx[(f.name, f.blocks[0].id)]
                    for f in prog.functions}
        for f in prog.functions:
            for pos_in_fn, b in enumerate(f.blocks):
                g = gidx[(f.name, b.id)]
                bug_start[g] = len(bug_id)
                for ins in b.instructions:
                    if ins.opcode == "bug":
                        bug_id.append(ins.args[0])
                        bug_kind.append(CRASH_KINDS.index(ins.kind))
                        guard_start.append(len(guard_pos))
                        for (p, v) in ins.guard:
                            guard_pos.append(p)
                            guard_val.append(v)
                        guard_end.append(len(guard_pos))
                bug_end[g] = len(bug_id)

                t = b.terminator
                if t.kind == "jmp":
                    term_type[g] = TERM_JMP
                    t0[g] = gidx[(f.name, t.args[0])]
                elif t.kind == "jif":
                    term_type[g] = TERM_JIF
                    t0[g], t1[g] = t.args[0], t.args[1]
                    t2[g] = gidx[(f.name, t.args[2])]
                    t3[g] = gidx[(f.name, t.args[3])]
                elif t.kind == "call":
                    term_type[g] = TERM_CALL
                    t0[g] = entry_of[t.callee]
                    if pos_in_fn + 1 < len(f.blocks):
                        t1[g] = gidx[(f.name, f.blocks[pos_in_fn + 1].id)]
                elif t.kind == "ret":
                    term_type[g] = TERM_RET
                else:
                    term_type[g] = TERM_HALT

        self.entry = entry_of[prog.entry_function.name]
        self.n_blocks = nb
        self.block_refs = block_refs
        self.term_type = term_type
        self.t0, self.t1, self.t2, self.t3 = t0, t1, t2, t3
        self.bug_start, self.bug_end = bug_start, bug_end
        self.bug_id = np.array(bug_id, dtype=np.int64)
        self.bug_kind = np.array(bug_kind, dtype=np.int64)
        self.guard_start = np.array(guard_start, dtype=np.int64)
        self.guard_end = np.array(guard_end, dtype=np.int64)
        self.guard_pos = np.array(guard_pos, dtype=np.int64)
        self.guard_val = np.array(guard_val, dtype=np.int64)


def run_flat_py(fp: FlatProgram, data: bytes, step_limit: int
                ) -> Tuple[int, int, List[int]]:
    """Reference interpreter. Returns (outcome, crash_bug_entry, path)."""
    lists = getattr(fp, "_lists", None)
    if lists is None:
        lists = fp._lists = (
            fp.term_type.tolist(), fp.t0.tolist(), fp.t1.tolist(),
            fp.t2.tolist(), fp.t3.tolist(),
            fp.bug_start.tolist(), fp.bug_end.tolist(),
            fp.guard_start.tolist(), fp.guard_end.tolist(),
            fp.guard_pos.tolist(), fp.guard_val.tolist(),
        )
    (term_type, t0, t1, t2, t3, bug_start, bug_end,
     guard_start, guard_end, guard_pos, guard_val) = lists

    path: List[int] = []
    stack: List[int] = []
    cur = fp.entry
    n = len(data)
    while True:
        if len(path) >= step_limit:
            return OUTCOME_LIMIT, -1, path
        path.append(cur)
        for bi in range(bug_start[cur], bug_end[cur]):
            hit = True
            for gi in range(guard_start[bi], guard_end[bi]):
                p = guard_pos[gi]
                if p >= n or data[p] != guard_val[gi]:
                    hit = False
                    break
            if hit:
                return OUTCOME_CRASH, bi, path
        tt = term_type[cur]
        if tt == TERM_JMP:
            cur = t0[cur]
        elif tt == TERM_JIF:
            p = t0[cur]
            cur = t2[cur] if (p < n and data[p] == t1[cur]) else t3[cur]
        elif tt == TERM_CALL:
            if len(stack) >= MAX_CALL_DEPTH:
                return OUTCOME_LIMIT, -1, path
            stack.append(t1[cur])             # -1 means unwind further on ret
            cur = t0[cur]
        elif tt == TERM_RET:
            while stack and stack[-1] == -1:
                stack.pop()
            if not stack:
                return OUTCOME_EXIT, -1, path
            cur = stack.pop()
        else:                                 # halt
            return OUTCOME_EXIT, -1, path
