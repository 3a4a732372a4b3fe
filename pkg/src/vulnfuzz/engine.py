"""Generational fuzzing loop: fitness-driven seed selection, adaptive
slight/heavy mutation via the crash-window scheduler, coverage tracking,
and crash deduplication."""

import csv
import json
import random
import time
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

from . import scoring
from .scoring import SvsMap
from .vm.core import BlockRef, ExecutionResult, ProgramTarget

__all__ = [
    "Seed", "SeedPool", "CwjState", "CampaignConfig", "GenerationStats",
    "CampaignReport", "INTERESTING_BYTES",
    "mutate_slight", "mutate_heavy", "cwj_step", "select_seeds",
    "run_campaign", "write_report_json", "write_report_csv",
]

INTERESTING_BYTES = (0x00, 0xFF, 0x7F, 0x80, ord("*"))

MS_SLIGHT = "slight"
MS_HEAVY = "heavy"


@dataclass(frozen=True)
class Seed:
    data: bytes
    fitness: float
    is_crash: bool = False
    origin: str = "initial"           # initial | mutated | crash
    discovered_at: int = 0


class SeedPool:
    """Bounded pool that never evicts a crash seed while non-crash remain."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.seeds: List[Seed] = []

    def add(self, seed: Seed) -> None:
        self.seeds.append(seed)
        while len(self.seeds) > self.capacity:
            victims = [i for i, s in enumerate(self.seeds) if not s.is_crash]
            if not victims:
                victims = range(len(self.seeds))
            evict = min(victims, key=lambda i: (self.seeds[i].fitness, -i))
            self.seeds.pop(evict)

    def __len__(self) -> int:
        return len(self.seeds)


@dataclass(frozen=True)
class CwjState:
    cw: int
    zeta: int
    ms: str
    ini_cw: int
    min_cw: int
    max_cw: int

    def __post_init__(self):
        if not (1 <= self.min_cw <= self.cw <= self.max_cw):
            raise ValueError("need min_cw <= CW <= max_cw, min_cw >= 1")
        if self.zeta < 0:
            raise ValueError("zeta must be >= 0")

    @staticmethod
    def initial(ini_cw: int, min_cw: int, max_cw: int) -> "CwjState":
        return CwjState(ini_cw, 0, MS_SLIGHT, ini_cw, min_cw, max_cw)


def cwj_step(state: CwjState, found_crash: bool, found_new_block: bool,
             text_mode: bool = False) -> CwjState:
    """One scheduler update per generation.

    Default follows the pseudocode exactly: a stuck streak past CW flips to
    heavy mutation and shrinks CW (clamped at min_cw); any progress resets
    to slight and grows CW (clamped at max_cw). `text_mode` swaps the
    shrink/grow directions, matching the prose description instead.
    """
    cw, zeta, ms = state.cw, state.zeta, state.ms

    def shrink(x):
        return x // 2 if x >= state.min_cw * 2 else x

    def grow(x):
        return x * 2 if x <= state.max_cw // 2 else x

    if not found_crash and not found_new_block:
        zeta += 1
        if zeta > cw:
            ms = MS_HEAVY
            cw = grow(cw) if text_mode else shrink(cw)
    else:
        zeta = 0
        ms = MS_SLIGHT
        cw = shrink(cw) if text_mode else grow(cw)
    return replace(state, cw=cw, zeta=zeta, ms=ms)


def mutate_slight(data: bytes, rng: random.Random) -> bytes:
    """1-4 touched byte positions; at most one insertion, so |len change| <= 1.

    Each operation spends its touched-position count from the budget, which
    keeps the byte-level edit distance at 4 or less.
    """
    out = bytearray(data)
    if not out:
        raise ValueError("cannot mutate an empty seed")
    budget = rng.randint(1, 4)
    inserted = False
    while budget > 0:
        op = rng.randrange(4)
        if op == 0:                    # single-bit flip
            i = rng.randrange(len(out))
            out[i] ^= 1 << rng.randrange(8)
            budget -= 1
        elif op == 1:                  # single-byte replace
            i = rng.randrange(len(out))
            out[i] = rng.randrange(256)
            budget -= 1
        elif op == 2 and not inserted:  # insert one interesting byte
            i = rng.randrange(len(out) + 1)
            out.insert(i, rng.choice(INTERESTING_BYTES))
            inserted = True
            budget -= 1
        elif op == 3:                  # overwrite up to 2 adjacent bytes
            span = min(rng.randint(1, 2), budget, len(out))
            i = rng.randrange(len(out) - span + 1)
            for j in range(i, i + span):
                out[j] = rng.randrange(256)
            budget -= span
    return bytes(out)


def mutate_heavy(data: bytes, pool: Sequence[bytes],
                 rng: random.Random) -> bytes:
    """Structure-changing edit; output length stays in [1, 4 * len(data)]."""
    if not data:
        raise ValueError("cannot mutate an empty seed")
    partners = [p for p in pool if p and p != data]
    ops = ["overwrite", "indel"]
    if partners:
        ops.append("splice")
    op = rng.choice(ops)
    out = bytearray(data)
    max_len = 4 * len(data)
    if op == "splice":
        other = partners[rng.randrange(len(partners))]
        cut_a = rng.randrange(1, len(data) + 1)
        cut_b = rng.randrange(len(other))
        out = bytearray(data[:cut_a] + other[cut_b:])
    elif op == "overwrite":
        max_span = max(1, len(out) // 4)
        span = rng.randint(max(1, max_span // 2), max_span)
        i = rng.randrange(len(out))
        for j in range(i, min(i + span, len(out))):
            out[j] = rng.randrange(256)
    else:
        max_span = max(1, len(out) // 4)
        span = rng.randint(max(1, max_span // 2), max_span)
        if rng.random() < 0.5 and len(out) > span:
            i = rng.randrange(len(out) - span + 1)
            del out[i:i + span]
        else:
            i = rng.randrange(len(out) + 1)
            out[i:i] = bytes(rng.randrange(256) for _ in range(span))
    if not out:
        out = bytearray([rng.randrange(256)])
    return bytes(out[:max_len])


@dataclass
class ExecutedCase:
    data: bytes
    fitness: float
    crashed: bool
    index: int


def select_seeds(generation: Sequence[ExecutedCase], k: int) -> List[Seed]:
    """All crashing inputs plus the top-k by fitness (stable ties).

    Crash inputs do not consume top-k slots; an input that is both counts
    once, as a crash seed.
    """
    if k < 1:
        raise ValueError("K must be >= 1")
    if not generation:
        raise ValueError("cannot select from an empty generation")
    out = [Seed(c.data, c.fitness, True, "crash") for c in generation
           if c.crashed]
    rest = [c for c in generation if not c.crashed]
    rest.sort(key=lambda c: (-c.fitness, c.index))
    out += [Seed(c.data, c.fitness, False, "mutated") for c in rest[:k]]
    return out


@dataclass(frozen=True)
class CampaignConfig:
    population: int = 50
    top_k: int = 10
    ini_cw: int = 8
    min_cw: int = 2
    max_cw: int = 64
    fitness_mode: str = "svs_sum"     # svs_sum | coverage_count
    fitness_dedup_blocks: bool = False
    cwj_text_mode: bool = False
    pool_capacity: int = 200
    budget_execs: int = 100_000
    budget_seconds: Optional[float] = None
    stop_on_crash: bool = False
    rng_seed: int = 0

    def __post_init__(self):
        if not (self.population >= self.top_k >= 1):
            raise ValueError("need population >= top_k >= 1")
        if self.budget_execs <= 0:
            raise ValueError("budget_execs must be > 0")
        if self.fitness_mode not in ("svs_sum", "coverage_count"):
            raise ValueError(f"unknown fitness mode {self.fitness_mode!r}")


@dataclass
class GenerationStats:
    generation: int
    executions: int
    new_blocks: int
    unique_crashes: int
    cw: int
    ms: str
    best_fitness: float


@dataclass
class CampaignReport:
    generations: List[GenerationStats] = field(default_factory=list)
    crash_catalog: Dict[str, bytes] = field(default_factory=dict)
    covered_blocks: Set[BlockRef] = field(default_factory=set)
    final_pool: List[Seed] = field(default_factory=list)
    total_executions: int = 0
    first_crash_execution: Optional[int] = None
    aborted: Optional[str] = None


def crash_dedup_key(result: ExecutionResult) -> str:
    o = result.outcome
    fn, block = o.site
    return f"{o.crash_kind}:{fn}:{block}:{o.bug_id}"


def run_campaign(adapter: ProgramTarget, svs: Optional[SvsMap],
                 initial_inputs: Sequence[bytes],
                 config: CampaignConfig) -> CampaignReport:
    """Deterministic generational loop per the configured fitness mode."""
    if not initial_inputs:
        raise ValueError("need at least one initial input")
    if config.fitness_mode == "svs_sum":
        if svs is None:
            raise ValueError("svs_sum mode requires an SVS map")
        missing = [b for b in adapter.block_universe() if b not in svs.scores]
        if missing:
            raise ValueError(f"SVS map misses {len(missing)} blocks, "
                             f"e.g. {missing[0]}")

    rng = random.Random(config.rng_seed)
    pool = SeedPool(config.pool_capacity)
    cwj = CwjState.initial(config.ini_cw, config.min_cw, config.max_cw)
    report = CampaignReport()
    deadline = (time.monotonic() + config.budget_seconds
                if config.budget_seconds else None)
    testcases: List[bytes] = [bytes(x) for x in initial_inputs]
    gen_idx = 0

    while True:
        executed: List[ExecutedCase] = []
        new_block_count = 0
        found_crash = False
        found_new_block = False
        best_fitness = 0.0
        try:
            for i, t in enumerate(testcases):
                res = adapter.execute(t)
                report.total_executions += 1
                fresh = set(res.path) - report.covered_blocks
                if config.fitness_mode == "coverage_count":
                    fit = float(len(fresh))
                else:
                    fit = scoring.fitness(res.path, svs,
                                          config.fitness_dedup_blocks)
                report.covered_blocks |= fresh
                new_block_count += len(fresh)
                if fresh:
                    found_new_block = True
                crashed = res.outcome.kind == "crash"
                if crashed:
                    found_crash = True
                    if report.first_crash_execution is None:
                        report.first_crash_execution = report.total_executions
                    key = crash_dedup_key(res)
                    if key not in report.crash_catalog:
                        report.crash_catalog[key] = t
                executed.append(ExecutedCase(t, fit, crashed, i))
                best_fitness = max(best_fitness, fit)
        except Exception as e:                      # adapter failure
            report.aborted = f"{type(e).__name__}: {e}"
            report.final_pool = pool.seeds
            return report

        for s in select_seeds(executed, config.top_k):
            origin = ("crash" if s.is_crash
                      else "initial" if gen_idx == 0 else "mutated")
            pool.add(replace(s, discovered_at=gen_idx, origin=origin))
        cwj = cwj_step(cwj, found_crash, found_new_block,
                       config.cwj_text_mode)
        report.generations.append(GenerationStats(
            gen_idx, report.total_executions, new_block_count,
            len(report.crash_catalog), cwj.cw, cwj.ms, best_fitness))
        gen_idx += 1

        if report.total_executions >= config.budget_execs:
            break
        if config.stop_on_crash and report.crash_catalog:
            break
        if deadline is not None and time.monotonic() >= deadline:
            break

        pool_bytes = [s.data for s in pool.seeds]
        testcases = []
        for j in range(config.population):
            base = pool.seeds[j % len(pool.seeds)].data
            if cwj.ms == MS_SLIGHT:
                testcases.append(mutate_slight(base, rng))
            else:
                testcases.append(mutate_heavy(base, pool_bytes, rng))
    report.final_pool = pool.seeds
    return report


def report_to_obj(report: CampaignReport, manifest: Optional[dict] = None) -> dict:
    obj = {
        "generations": [vars(g) for g in report.generations],
        "crash_catalog": {k: v.hex() for k, v in report.crash_catalog.items()},
        "covered_blocks": sorted([list(b) for b in report.covered_blocks]),
        "total_executions": report.total_executions,
        "first_crash_execution": report.first_crash_execution,
        "aborted": report.aborted,
    }
    if manifest is not None:
        obj["manifest"] = manifest
    return obj


def write_report_json(report: CampaignReport, path: str,
                      manifest: Optional[dict] = None) -> None:
    with open(path, "w") as f:
        json.dump(report_to_obj(report, manifest), f, indent=1)


def write_report_csv(report: CampaignReport, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["generation", "executions", "unique_crashes",
                    "covered_blocks", "CW", "MS"])
        covered = 0
        for g in report.generations:
            covered += g.new_blocks
            w.writerow([g.generation, g.executions, g.unique_crashes,
                        covered, g.cw, g.ms])
