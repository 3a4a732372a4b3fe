"""Per-block static vulnerable scores and path fitness."""

import json
from dataclasses import dataclass
from typing import Dict, Iterable, List, Sequence, Tuple

__all__ = [
    "SvsMap", "assign_svs", "fitness", "dump_svs", "load_svs",
    "DEFAULT_KAPPA", "DEFAULT_OMEGA",
]

DEFAULT_KAPPA = 20.0
DEFAULT_OMEGA = 0.1

BlockRef = Tuple[str, int]


@dataclass(frozen=True)
class SvsMap:
    scores: Dict[BlockRef, float]
    predictions: Dict[str, float]
    kappa: float
    omega: float


def assign_svs(predictions: Dict[str, float],
               program_blocks: Dict[str, Iterable[int]],
               kappa: float = DEFAULT_KAPPA,
               omega: float = DEFAULT_OMEGA) -> SvsMap:
    """Every block of a function scores kappa * p + omega.

    omega > 0 keeps all scores positive even at p = 0, so no path ever has
    zero fitness.
    """
    if kappa < 0:
        raise ValueError("kappa must be >= 0")
    if omega <= 0:
        raise ValueError("omega must be > 0")
    scores = {}
    for fn, block_ids in program_blocks.items():
        block_ids = list(block_ids)
        if block_ids and fn not in predictions:
            raise KeyError(f"function {fn!r} has no prediction")
        for b in block_ids:
            scores[(fn, b)] = kappa * predictions[fn] + omega
    return SvsMap(scores, dict(predictions), kappa, omega)


def fitness(path: Sequence[BlockRef], svs: SvsMap,
            dedup_blocks: bool = False) -> float:
    """Sum of scores along the trace; repeated blocks count per visit.

    dedup_blocks=True counts each distinct block once (ablation knob).
    """
    entries = dict.fromkeys(path) if dedup_blocks else path
    total = 0.0
    for ref in entries:
        if ref not in svs.scores:
            raise KeyError(f"block {ref} not in SVS map")
        total += svs.scores[ref]
    return total


def dump_svs(svs: SvsMap, path: str) -> None:
    by_fn: Dict[str, List[dict]] = {}
    for (fn, b), score in svs.scores.items():
        by_fn.setdefault(fn, []).append({"id": b, "svs": score})
    doc = {
        "kappa": svs.kappa,
        "omega": svs.omega,
        "functions": [
            {"name": fn, "p": svs.predictions[fn],
             "blocks": sorted(blocks, key=lambda x: x["id"])}
            for fn, blocks in sorted(by_fn.items())
        ],
    }
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def load_svs(path: str) -> SvsMap:
    with open(path) as f:
        doc = json.load(f)
    scores = {}
    predictions = {}
    for fobj in doc["functions"]:
        predictions[fobj["name"]] = float(fobj["p"])
        for bobj in fobj["blocks"]:
            scores[(fobj["name"], int(bobj["id"]))] = float(bobj["svs"])
    return SvsMap(scores, predictions, float(doc["kappa"]), float(doc["omega"]))
