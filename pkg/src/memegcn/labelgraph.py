"""Label co-occurrence graph and the stacked message-passing network.

Each layer computes ``act((A @ H + H) @ W)``: neighbours contribute through
the zero-diagonal adjacency ``A`` and the explicit ``+ H`` keeps each node's
own features. The final layer is left linear because its rows are used as
per-label classifier weights.
"""

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import DEFAULT_SLOPE, leaky_relu, leaky_relu_grad

# Output widths per layer for the depths studied in the ablation.
DEPTH_SCHEDULES = {
    2: (512, 2048),
    3: (512, 1024, 2048),
    4: (512, 1024, 1024, 2048),
    5: (512, 1024, 1024, 1024, 2048),
}


def dims_for_depth(depth: int) -> tuple:
    try:
        return DEPTH_SCHEDULES[depth]
    except KeyError:
        raise ParameterError(f"graph depth must be one of {sorted(DEPTH_SCHEDULES)}, got {depth}") from None


def build_cooccurrence(labels) -> np.ndarray:
    """``L.T @ L`` for an n x u binary label matrix."""
    L = np.asarray(labels)
    if L.ndim != 2:
        raise ShapeError(f"label matrix must be 2-D, got shape {L.shape}")
    if not np.isin(L, (0, 1)).all():
        raise ParameterError("label matrix entries must be 0 or 1")
    L = L.astype(np.float64)
    return L.T @ L


@dataclass(frozen=True)
class AdjacencyMatrix:
    a: np.ndarray

    @property
    def u(self) -> int:
        return self.a.shape[0]


def build_adjacency(a_coo) -> AdjacencyMatrix:
    """Row-normalise co-occurrence counts by each label's own count.

    Entry (i, j) becomes the fraction of label-i positives that are also
    label-j positive; the diagonal is zeroed. Labels with no positives get
    an all-zero row.
    """
    c = np.asarray(a_coo, dtype=np.float64)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise ShapeError(f"co-occurrence matrix must be square, got {c.shape}")
    counts = np.diag(c).copy()
    safe = np.where(counts > 0, counts, 1.0)
    a = np.where(counts[:, None] > 0, c / safe[:, None], 0.0)
    np.fill_diagonal(a, 0.0)
    a.setflags(write=False)
    return AdjacencyMatrix(a)


@dataclass
class GcnStack:
    """Graph layer weights; ``weights[k]`` is in_dim x out_dim."""

    weights: List[np.ndarray]
    slope: float = DEFAULT_SLOPE

    def __post_init__(self):
        for k in range(1, len(self.weights)):
            if self.weights[k - 1].shape[1] != self.weights[k].shape[0]:
                raise ShapeError(
                    f"graph layer {k} expects {self.weights[k].shape[0]} inputs, "
                    f"layer {k - 1} produces {self.weights[k - 1].shape[1]}"
                )

    @property
    def dims(self) -> tuple:
        return tuple(w.shape[1] for w in self.weights)

    @property
    def out_dim(self) -> int:
        return self.weights[-1].shape[1]


@dataclass
class GcnCache:
    """Intermediate values kept for the backward pass."""

    propagated: List[np.ndarray] = field(default_factory=list)  # (A + I) @ H_n
    pre: List[np.ndarray] = field(default_factory=list)  # propagated @ W_n


def gcn_forward(node_features, adj: AdjacencyMatrix, stack: GcnStack, cache: GcnCache = None) -> np.ndarray:
    h = np.asarray(node_features, dtype=np.float64)
    a = adj.a
    if a.shape[0] != h.shape[0]:
        raise ShapeError(f"adjacency is {a.shape[0]}x{a.shape[1]} but there are {h.shape[0]} nodes")
    last = len(stack.weights) - 1
    for k, w in enumerate(stack.weights):
        if h.shape[1] != w.shape[0]:
            raise ShapeError(f"graph layer {k} expects {w.shape[0]} features, got {h.shape[1]}")
        prop = a @ h + h
        pre = prop @ w
        if cache is not None:
            cache.propagated.append(prop)
            cache.pre.append(pre)
        h = pre if k == last else leaky_relu(pre, stack.slope)
    return h


def gcn_backward(grad_out, adj: AdjacencyMatrix, stack: GcnStack, cache: GcnCache) -> List[np.ndarray]:
    """Gradients w.r.t. each layer weight, given d(loss)/d(output)."""
    a_plus_i_t = adj.a.T + np.eye(adj.u)
    grads: List[np.ndarray] = [None] * len(stack.weights)
    g = np.asarray(grad_out, dtype=np.float64)
    last = len(stack.weights) - 1
    for k in range(last, -1, -1):
        if k != last:
            g = g * leaky_relu_grad(cache.pre[k], stack.slope)
        grads[k] = cache.propagated[k].T @ g
        if k > 0:
            g = a_plus_i_t @ (g @ stack.weights[k].T)
    return grads


def adjacency_from_pools(pools: Sequence) -> AdjacencyMatrix:
    """Adjacency over the union of several label matrices (e.g. train + trial)."""
    stacked = np.vstack([np.asarray(p) for p in pools])
    return build_adjacency(build_cooccurrence(stacked))
