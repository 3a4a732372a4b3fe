#!/usr/bin/env python3
"""Throughput benchmark: compiled VM kernel vs the pure-Python interpreter.

Runs the same randomized input batch through both backends on a generated
dispatch target and reports executions/second plus the speedup ratio. The
compiled backend is skipped if the extension is not built.

Usage: python3 benchmarks/bench_vm.py [--execs N] [--seed S]
"""

import argparse
import random
import time

from vulnfuzz.vm import BugPlan, ProgramTarget, TargetSpec, gen_target
from vulnfuzz.vm.core import HAVE_SPEEDUPS


def bench(target: ProgramTarget, inputs) -> float:
    start = time.perf_counter()
    for data in inputs:
        target.execute(data)
    return len(inputs) / (time.perf_counter() - start)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--execs", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    prog, _ = gen_target(
        TargetSpec(n_functions=8, bugs={3: BugPlan("ASSERT", 1)}), args.seed)
    rnd = random.Random(args.seed)
    inputs = [bytes(rnd.randrange(256) for _ in range(rnd.randrange(1, 6)))
              for _ in range(args.execs)]

    py = bench(ProgramTarget(prog, backend="python"), inputs)
    print(f"pure Python : {py:12,.0f} execs/s")
    if HAVE_SPEEDUPS:
        cc = bench(ProgramTarget(prog, backend="compiled"), inputs)
        print(f"compiled    : {cc:12,.0f} execs/s")
        print(f"speedup     : {cc / py:12.1f}x")
    else:
        print("compiled    : extension not built (pip install -e . "
              "--no-build-isolation)")


if __name__ == "__main__":
    main()
