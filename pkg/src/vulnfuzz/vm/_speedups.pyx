# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of flat.run_flat_py; identical semantics, same flat arrays.

The kernel object acquires the flat-program memoryviews once at construction
so the per-execution cost is just the interpreter loop.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

DEF T_JMP = 0
DEF T_JIF = 1
DEF T_CALL = 2
DEF T_RET = 3
DEF T_HALT = 4

DEF O_EXIT = 0
DEF O_CRASH = 1
DEF O_LIMIT = 2


cdef class FlatKernel:
    cdef cnp.int64_t[::1] term_type, t0, t1, t2, t3
    cdef cnp.int64_t[::1] bug_start, bug_end
    cdef cnp.int64_t[::1] guard_start, guard_end, guard_pos, guard_val
    cdef cnp.int64_t[::1] stack
    cdef object _stack_arr
    cdef long entry, max_call_depth

    def __init__(self, fp, long max_call_depth):
        self.term_type = fp.term_type
        self.t0, self.t1, self.t2, self.t3 = fp.t0, fp.t1, fp.t2, fp.t3
        self.bug_start, self.bug_end = fp.bug_start, fp.bug_end
        self.guard_start, self.guard_end = fp.guard_start, fp.guard_end
        self.guard_pos, self.guard_val = fp.guard_pos, fp.guard_val
        self.entry = fp.entry
        self.max_call_depth = max_call_depth
        self._stack_arr = np.empty(max_call_depth, dtype=np.int64)
        self.stack = self._stack_arr

    def run(self, bytes data, long step_limit):
        """Interpret one input; returns (outcome, crash_bug_entry, path)."""
        cdef const unsigned char[::1] inp = data
        cdef long n = len(data)
        cdef list path = []
        cdef cnp.int64_t[::1] stack = self.stack
        cdef long sp = 0
        cdef long steps = 0
        cdef long cur = self.entry
        cdef long bi, gi, p, tt
        cdef bint hit

        while True:
            if steps >= step_limit:
                return O_LIMIT, -1, path
            path.append(cur)
            steps += 1
            for bi in range(self.bug_start[cur], self.bug_end[cur]):
                hit = True
                for gi in range(self.guard_start[bi], self.guard_end[bi]):
                    p = self.guard_pos[gi]
                    if p >= n or inp[p] != self.guard_val[gi]:
                        hit = False
                        break
                if hit:
                    return O_CRASH, bi, path
            tt = self.term_type[cur]
            if tt == T_JMP:
                cur = self.t0[cur]
            elif tt == T_JIF:
                p = self.t0[cur]
                if p < n and inp[p] == self.t1[cur]:
                    cur = self.t2[cur]
                else:
                    cur = self.t3[cur]
            elif tt == T_CALL:
                if sp >= self.max_call_depth:
                    return O_LIMIT, -1, path
                stack[sp] = self.t1[cur]
                sp += 1
                cur = self.t0[cur]
            elif tt == T_RET:
                while sp > 0 and stack[sp - 1] == -1:
                    sp -= 1
                if sp == 0:
                    return O_EXIT, -1, path
                sp -= 1
                cur = stack[sp]
            else:
                return O_EXIT, -1, path
