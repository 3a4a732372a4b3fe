"""Synthetic labeled ACFG corpora with a tunable class signal."""

import json
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .acfg import (
    Acfg,
    BasicBlockNode,
    DEFAULT_DIMENSION,
    acfg_from_obj,
    acfg_to_obj,
    get_default_schema,
    validate,
)

__all__ = [
    "LabeledGraph", "SynthSpec", "generate", "split",
    "write_corpus", "read_corpus", "SIGNAL_SLOTS",
]

LABEL_VULNERABLE = 0
LABEL_SECURE = 1

# Slots whose counts get boosted in vulnerable-class graphs: call density
# plus the memory-API counts.
SIGNAL_SLOTS = ("insn_call", "str_malloc", "str_calloc", "str_free", "op_imm")

# Slots with background noise identical across classes.
_NOISE_SLOTS = (
    "insn_nop", "insn_load", "insn_store", "insn_arith", "insn_cmp",
    "op_void", "op_reg", "op_mem",
)

# Mean shift applied to each signal slot of a vulnerable block at
# signal_strength 1; at 1 the classes are separable by any single slot.
_SIGNAL_SHIFT = 8.0


@dataclass(frozen=True)
class LabeledGraph:
    graph: Acfg
    label: int


@dataclass(frozen=True)
class SynthSpec:
    count_per_class: int
    min_blocks: int = 3
    max_blocks: int = 8
    min_edge_density: float = 0.2
    max_edge_density: float = 0.5
    signal_strength: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        if self.count_per_class < 0:
            raise ValueError("count_per_class must be >= 0")
        if not (1 <= self.min_blocks <= self.max_blocks):
            raise ValueError("bad block-count range")
        if not (0.0 <= self.min_edge_density <= self.max_edge_density <= 1.0):
            raise ValueError("bad edge-density range")
        if not (0.0 <= self.signal_strength <= 1.0):
            raise ValueError("signal_strength must be in [0, 1]")


def _gen_one(spec: SynthSpec, label: int, index: int) -> LabeledGraph:
    # Per-item RNG keyed by (seed, index) so generation parallelizes cleanly.
    rng = np.random.default_rng([spec.rng_seed, index])
    schema = get_default_schema()
    n = int(rng.integers(spec.min_blocks, spec.max_blocks + 1))
    density = rng.uniform(spec.min_edge_density, spec.max_edge_density)

    noise_idx = [schema.index(s) for s in _NOISE_SLOTS]
    signal_idx = [schema.index(s) for s in SIGNAL_SLOTS]
    blocks = []
    for b in range(n):
        attrs = np.zeros(schema.dimension)
        attrs[noise_idx] = rng.poisson(2.0, size=len(noise_idx))
        attrs[signal_idx] = rng.poisson(1.0, size=len(signal_idx))
        if label == LABEL_VULNERABLE:
            attrs[signal_idx] += spec.signal_strength * _SIGNAL_SHIFT
        blocks.append(BasicBlockNode(b, tuple(float(x) for x in attrs)))

    edges = set()
    # Spine keeps every block reachable from the entry.
    for b in range(1, n):
        edges.add((int(rng.integers(0, b)), b))
    for u in range(n):
        for v in range(n):
            if u != v and (u, v) not in edges and rng.random() < density * 0.3:
                edges.add((u, v))

    g = Acfg(f"synth_{index}", 0, tuple(blocks), tuple(sorted(edges)))
    return LabeledGraph(g, label)


def generate(spec: SynthSpec) -> List[LabeledGraph]:
    """Emit count_per_class graphs per label, deterministic under rng_seed."""
    out = []
    for i in range(spec.count_per_class):
        out.append(_gen_one(spec, LABEL_VULNERABLE, 2 * i))
        out.append(_gen_one(spec, LABEL_SECURE, 2 * i + 1))
    for lg in out:
        bad = validate(lg.graph)
        assert not bad, bad
    return out


def split(corpus: List[LabeledGraph], train_fraction: float,
          rng_seed: int) -> Tuple[List[LabeledGraph], List[LabeledGraph]]:
    """Class-stratified disjoint split, deterministic under rng_seed."""
    if not (0.0 < train_fraction < 1.0):
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(rng_seed)
    train, test = [], []
    for label in (LABEL_VULNERABLE, LABEL_SECURE):
        members = [lg for lg in corpus if lg.label == label]
        if members:
            k = int(round(train_fraction * len(members)))
            if k == 0 or k == len(members):
                raise ValueError(
                    f"corpus too small to stratify class {label} "
                    f"at fraction {train_fraction}")
            order = rng.permutation(len(members))
            train += [members[i] for i in order[:k]]
            test += [members[i] for i in order[k:]]
    if not train or not test:
        raise ValueError("corpus too small to split")
    return train, test


def write_corpus(path: str, corpus: List[LabeledGraph]) -> None:
    with open(path, "w") as f:
        for lg in corpus:
            rec = {"label": lg.label, "graph": acfg_to_obj(lg.graph)}
            f.write(json.dumps(rec) + "\n")


def read_corpus(path: str, schema_dim: int = DEFAULT_DIMENSION) -> List[LabeledGraph]:
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            label = rec["label"]
            if label not in (0, 1):
                raise ValueError(f"line {lineno}: label must be 0 or 1")
            out.append(LabeledGraph(
                acfg_from_obj(rec["graph"], schema_dim, f"line {lineno}"), label))
    return out
