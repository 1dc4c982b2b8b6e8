"""Bits shared by the three trainers."""
from __future__ import annotations

from typing import Iterator, Sequence

import numpy as np

from .metrics import average_precision
from .networks import Network
from .tensor import no_grad


def minibatches(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled index batches covering every row once; the tail batch is kept."""
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def as_matrix(data) -> np.ndarray:
    x = getattr(data, "samples", data)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError(f"expected a non-empty [n x d] matrix, got shape {x.shape}")
    return x


def batched(fn, x: np.ndarray, batch_size: int = 1024) -> np.ndarray:
    """Apply a per-row scorer chunkwise without recording a graph."""
    with no_grad():
        return np.concatenate([fn(x[i:i + batch_size]) for i in range(0, len(x), batch_size)])


def snapshot(nets: Sequence[Network]) -> list[list[np.ndarray]]:
    return [n.state() for n in nets]


def restore(nets: Sequence[Network], states) -> None:
    for n, s in zip(nets, states):
        n.load_state(s)


def eval_auprc(scores: np.ndarray, labels: np.ndarray) -> float:
    # a diverged model or a single-class eval split gives no usable signal
    if not np.all(np.isfinite(scores)) or np.unique(labels).size < 2:
        return float("nan")
    return average_precision(scores, labels)


def improves(auc: float, best: float | None) -> bool:
    """True when ``auc`` beats ``best``; NaN never wins and never blocks."""
    if np.isnan(auc):
        return False
    return best is None or np.isnan(best) or auc > best
