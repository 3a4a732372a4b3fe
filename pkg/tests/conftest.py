import numpy as np
import pytest

from vulnfuzz.acfg import Acfg, BasicBlockNode


def random_acfg(rng: np.random.Generator, n_blocks: int, attr_dim: int,
                edge_prob: float = 0.4, name: str = "g") -> Acfg:
    blocks = tuple(
        BasicBlockNode(i, tuple(float(x) for x in rng.uniform(0, 3, attr_dim)))
        for i in range(n_blocks))
    edges = set()
    for u in range(n_blocks):
        for v in range(n_blocks):
            if rng.random() < edge_prob:
                edges.add((u, v))
    return Acfg(name, 0, blocks, tuple(sorted(edges)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
