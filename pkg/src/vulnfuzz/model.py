"""Graph embedding network: forward pass, manual backprop, SGD training.

Per-block attribute vectors are aggregated over predecessor sets for a
fixed number of synchronous iterations, sum-pooled into one function-level
vector, projected to two logits and softmaxed; the first component is the
vulnerable probability.
"""

import json
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .acfg import Acfg
from .synth import LabeledGraph

__all__ = [
    "Hyperparams", "ModelParams", "Prediction", "EvalReport",
    "CheckpointError", "init_params", "forward", "loss", "backward",
    "train", "evaluate", "save_checkpoint", "load_checkpoint",
]

PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class Hyperparams:
    a: int = 255
    d: int = 256
    n: int = 5
    T: int = 3
    learning_rate: float = 0.0001
    epochs: int = 10
    rng_seed: int = 0

    def __post_init__(self):
        if min(self.a, self.d, self.n, self.T) < 1:
            raise ValueError("a, d, n, T must all be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")


@dataclass
class ModelParams:
    W1: np.ndarray          # d x a
    P: List[np.ndarray]     # n matrices, each d x d
    W2: np.ndarray          # d x d
    W3: np.ndarray          # 2 x d

    def check_shapes(self, hyper: Hyperparams) -> None:
        d, a, n = hyper.d, hyper.a, hyper.n
        if self.W1.shape != (d, a) or self.W2.shape != (d, d) \
                or self.W3.shape != (2, d) or len(self.P) != n \
                or any(p.shape != (d, d) for p in self.P):
            raise ValueError("parameter shapes do not match hyperparams")

    def copy(self) -> "ModelParams":
        return ModelParams(self.W1.copy(), [p.copy() for p in self.P],
                           self.W2.copy(), self.W3.copy())


@dataclass(frozen=True)
class Prediction:
    mu_g: np.ndarray
    Z: np.ndarray
    Q: np.ndarray
    p: float


@dataclass(frozen=True)
class EvalReport:
    accuracy_at_k: Dict[int, float]
    recall: float
    mean_loss: float


class CheckpointError(ValueError):
    pass


def init_params(hyper: Hyperparams, zero: bool = False) -> ModelParams:
    """Uniform init on [-1/sqrt(d), +1/sqrt(d)]; `zero` gives p=0.5 everywhere."""
    d, a, n = hyper.d, hyper.a, hyper.n
    if zero:
        return ModelParams(np.zeros((d, a)), [np.zeros((d, d)) for _ in range(n)],
                           np.zeros((d, d)), np.zeros((2, d)))
    rng = np.random.default_rng(hyper.rng_seed)
    s = 1.0 / np.sqrt(d)
    return ModelParams(
        rng.uniform(-s, s, (d, a)),
        [rng.uniform(-s, s, (d, d)) for _ in range(n)],
        rng.uniform(-s, s, (d, d)),
        rng.uniform(-s, s, (2, d)),
    )


def _pred_matrix(acfg: Acfg) -> np.ndarray:
    """A[u, v] = 1 iff edge (u, v); right-multiplying sums over predecessors."""
    idx = {b.id: i for i, b in enumerate(acfg.blocks)}
    A = np.zeros((len(acfg.blocks), len(acfg.blocks)))
    for (u, v) in acfg.edges:
        A[idx[u], idx[v]] = 1.0
    return A


def _attr_matrix(acfg: Acfg, a: int) -> np.ndarray:
    X = np.array([b.attrs for b in acfg.blocks], dtype=float).T
    if X.shape != (a, len(acfg.blocks)):
        raise ValueError(
            f"attribute width mismatch: got {X.shape[0]}, want {a}")
    return X


def _sigma_forward(P: List[np.ndarray], S: np.ndarray):
    """sigma(S) = P1 relu(P2 ... relu(Pn S)); returns output and layer cache."""
    n = len(P)
    pre = [None] * n       # pre[k] = P[k] @ (its input), k = n-1 .. 0
    inputs = [None] * n
    h = S
    for k in range(n - 1, 0, -1):
        inputs[k] = h
        pre[k] = P[k] @ h
        h = np.maximum(pre[k], 0.0)
    inputs[0] = h
    pre[0] = P[0] @ h
    return pre[0], pre, inputs


def _forward_cached(acfg: Acfg, params: ModelParams, hyper: Hyperparams):
    X = _attr_matrix(acfg, hyper.a)
    A = _pred_matrix(acfg)
    nv = X.shape[1]
    W1X = params.W1 @ X
    mu = np.zeros((hyper.d, nv))
    cache = []
    for _ in range(hyper.T):
        S = mu @ A                       # column v sums mu over predecessors
        sig, pre, inputs = _sigma_forward(params.P, S)
        mu_next = np.tanh(W1X + sig)
        cache.append((S, pre, inputs, mu_next))
        mu = mu_next
    pooled = mu.sum(axis=1)
    mu_g = params.W2 @ pooled
    Z = params.W3 @ mu_g
    z = Z - Z.max()
    e = np.exp(z)
    Q = e / e.sum()
    pred = Prediction(mu_g, Z, Q, float(Q[0]))
    return pred, (X, A, cache, pooled)


def forward(acfg: Acfg, params: ModelParams, hyper: Hyperparams) -> Prediction:
    params.check_shapes(hyper)
    pred, _ = _forward_cached(acfg, params, hyper)
    return pred


def loss(Q: Sequence[float], label: int) -> float:
    """Cross entropy against label 0 (vulnerable) or 1 (secure)."""
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    return float(-np.log(max(float(Q[label]), PROB_CLAMP)))


def backward(acfg: Acfg, params: ModelParams, hyper: Hyperparams,
             label: int) -> ModelParams:
    """d(cross-entropy)/d(theta) through the unrolled iterations."""
    grad, _ = _backward_with_loss(acfg, params, hyper, label)
    return grad


def _backward_with_loss(acfg: Acfg, params: ModelParams, hyper: Hyperparams,
                        label: int) -> Tuple[ModelParams, float]:
    if label not in (0, 1):
        raise ValueError(f"label must be 0 or 1, got {label}")
    params.check_shapes(hyper)
    pred, (X, A, cache, pooled) = _forward_cached(acfg, params, hyper)
    n = hyper.n

    gW1 = np.zeros_like(params.W1)
    gP = [np.zeros_like(p) for p in params.P]

    # Softmax + cross entropy collapse to Q - onehot(label).
    dZ = pred.Q.copy()
    dZ[label] -= 1.0
    if pred.Q[label] <= PROB_CLAMP:       # clamped loss is locally constant
        dZ[:] = 0.0
    gW3 = np.outer(dZ, pred.mu_g)
    dmu_g = params.W3.T @ dZ
    gW2 = np.outer(dmu_g, pooled)
    dpool = params.W2.T @ dmu_g
    dmu = np.tile(dpool[:, None], (1, X.shape[1]))

    for t in range(hyper.T - 1, -1, -1):
        S, pre, inputs, mu_t = cache[t]
        dpre_act = dmu * (1.0 - mu_t * mu_t)   # through tanh
        gW1 += dpre_act @ X.T
        # Through sigma: no ReLU after the outermost layer.
        g = dpre_act
        gP[0] += g @ inputs[0].T
        g = params.P[0].T @ g
        for k in range(1, n):
            g = g * (pre[k] > 0)
            gP[k] += g @ inputs[k].T
            g = params.P[k].T @ g
        dmu = g @ A.T                          # S = mu_prev @ A
    return ModelParams(gW1, gP, gW2, gW3), loss(pred.Q, label)


def sgd_step(params: ModelParams, grad: ModelParams, lr: float) -> None:
    params.W1 -= lr * grad.W1
    for p, g in zip(params.P, grad.P):
        p -= lr * g
    params.W2 -= lr * grad.W2
    params.W3 -= lr * grad.W3


def train(corpus: Sequence[LabeledGraph], hyper: Hyperparams,
          initial_params: Optional[ModelParams] = None,
          start_epoch: int = 0) -> Tuple[ModelParams, List[float]]:
    """Single-sample SGD over seeded per-epoch shuffles.

    `initial_params`/`start_epoch` allow resuming: the epoch-k shuffle
    depends only on (rng_seed, k), so a resumed run replays the original
    schedule exactly.
    """
    if not corpus:
        raise ValueError("empty training corpus")
    params = initial_params.copy() if initial_params is not None \
        else init_params(hyper)
    params.check_shapes(hyper)
    trace = []
    for epoch in range(start_epoch, hyper.epochs):
        order = np.random.default_rng([hyper.rng_seed, epoch]).permutation(len(corpus))
        total = 0.0
        for i in order:
            lg = corpus[i]
            grad, sample_loss = _backward_with_loss(
                lg.graph, params, hyper, lg.label)
            total += sample_loss
            sgd_step(params, grad, hyper.learning_rate)
        trace.append(total / len(corpus))
    return params, trace


def evaluate(corpus: Sequence[LabeledGraph], params: ModelParams,
             hyper: Hyperparams, ks: Sequence[int]) -> EvalReport:
    """Top-K precision over descending p, recall at K = #vulnerable."""
    if not corpus:
        raise ValueError("empty evaluation corpus")
    for k in ks:
        if not (1 <= k <= len(corpus)):
            raise ValueError(f"K={k} out of range for corpus of {len(corpus)}")
    preds = [forward(lg.graph, params, hyper) for lg in corpus]
    losses = [loss(pr.Q, lg.label) for pr, lg in zip(preds, corpus)]
    # Stable sort keeps input order among ties.
    order = sorted(range(len(corpus)), key=lambda i: -preds[i].p)
    labels_sorted = [corpus[i].label for i in order]
    acc = {}
    for k in ks:
        acc[k] = sum(1 for l in labels_sorted[:k] if l == 0) / k
    n_vuln = sum(1 for lg in corpus if lg.label == 0)
    recall = (sum(1 for l in labels_sorted[:n_vuln] if l == 0) / n_vuln
              if n_vuln else 0.0)
    return EvalReport(acc, recall, float(np.mean(losses)))


def save_checkpoint(params: ModelParams, hyper: Hyperparams, path: str) -> None:
    doc = {
        "version": 1,
        "hyper": {"a": hyper.a, "d": hyper.d, "n": hyper.n, "T": hyper.T},
        "W1": params.W1.tolist(),
        "P": [p.tolist() for p in params.P],
        "W2": params.W2.tolist(),
        "W3": params.W3.tolist(),
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(path: str,
                    expect_hyper: Optional[Hyperparams] = None
                    ) -> Tuple[ModelParams, Hyperparams]:
    try:
        with open(path) as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise CheckpointError(
            f"line {e.lineno} col {e.colno}: {e.msg}") from e
    if doc.get("version") != 1:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    try:
        h = doc["hyper"]
        hyper = Hyperparams(a=h["a"], d=h["d"], n=h["n"], T=h["T"])
        params = ModelParams(
            np.array(doc["W1"], dtype=float),
            [np.array(p, dtype=float) for p in doc["P"]],
            np.array(doc["W2"], dtype=float),
            np.array(doc["W3"], dtype=float),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"malformed checkpoint: {e}") from e
    try:
        params.check_shapes(hyper)
    except ValueError as e:
        raise CheckpointError(str(e)) from e
    if expect_hyper is not None:
        for name in ("a", "d", "n", "T"):
            if getattr(hyper, name) != getattr(expect_hyper, name):
                raise CheckpointError(
                    f"shape mismatch: checkpoint {name}={getattr(hyper, name)}, "
                    f"config {name}={getattr(expect_hyper, name)}")
    return params, hyper
