"""AdamW, exact gradients of both heads, and the training loop."""

import logging
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .dataio import LABEL_NAMES, Dataset
from .errors import DivergenceError, ParameterError, ShapeError
from .fusion import DEFAULT_LAMBDA, fuse_batch
from .labelgraph import AdjacencyMatrix, GcnCache, gcn_backward, gcn_forward
from .metrics import MetricsReport, metrics_report
from .model import (
    ClassWeights,
    ModelParams,
    binary_logits,
    compute_class_weights,
    init_params,
    loss_from_logits,
    loss_grad_logits,
    multilabel_logits,
    predict_proba,
    threshold_predict,
)

logger = logging.getLogger(__name__)

GRAPH_GROUP = "graph"
HEAD_GROUP = "head"


# ---------------------------------------------------------------------------
# AdamW
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AdamWHyper:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass
class MomentState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, param) -> "MomentState":
        return cls(np.zeros_like(param, dtype=np.float64), np.zeros_like(param, dtype=np.float64))


def adamw_step(
    param,
    grad,
    state: MomentState,
    lr: float,
    hyper: AdamWHyper = AdamWHyper(),
    decay: bool = True,
) -> Tuple[np.ndarray, MomentState]:
    """One decoupled-weight-decay Adam update. Inputs are not modified.

    The decay term ``weight_decay * theta`` is added to the Adam direction
    and scaled by ``lr``; it is skipped when ``decay`` is False (biases).
    """
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != param.shape or state.m.shape != param.shape:
        raise ShapeError(f"parameter {param.shape}, gradient {grad.shape} and state {state.m.shape} must match")
    b1, b2 = hyper.beta1, hyper.beta2
    t = state.step + 1
    m = b1 * state.m + (1.0 - b1) * grad
    v = b2 * state.v + (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**t)
    v_hat = v / (1.0 - b2**t)
    direction = m_hat / (np.sqrt(v_hat) + hyper.eps)
    if decay and hyper.weight_decay:
        direction = direction + hyper.weight_decay * param
    return param - lr * direction, MomentState(m, v, t)


@dataclass
class OptimizerState:
    moments: Dict[str, MomentState]
    hyper: AdamWHyper = AdamWHyper()

    @property
    def step_count(self) -> int:
        return max((s.step for s in self.moments.values()), default=0)

    @classmethod
    def for_params(cls, params: ModelParams, hyper: AdamWHyper = AdamWHyper()) -> "OptimizerState":
        return cls({k: MomentState.zeros_like(v) for k, v in params.tensors().items()}, hyper)


def param_group(name: str) -> str:
    return GRAPH_GROUP if name.startswith("gcn.") else HEAD_GROUP


def is_bias(name: str) -> bool:
    return name.endswith(".bias")


def task_tensors(params: ModelParams, task: str) -> List[str]:
    """Names of the tensors a task's loss depends on."""
    names = list(params.tensors())
    if task == "A":
        return [n for n in names if n.startswith("binary.")]
    if task == "B":
        return [n for n in names if not n.startswith("binary.")]
    raise ParameterError(f"task must be 'A' or 'B', got {task!r}")


def apply_gradients(
    params: ModelParams,
    grads: Dict[str, np.ndarray],
    state: OptimizerState,
    lr_graph: float,
    lr_head: float,
    names: Optional[Sequence[str]] = None,
) -> ModelParams:
    """AdamW-update the named tensors (all by default); others are left alone."""
    tensors = params.tensors()
    names = list(tensors) if names is None else names
    updated = {}
    for name in names:
        lr = lr_graph if param_group(name) == GRAPH_GROUP else lr_head
        updated[name], state.moments[name] = adamw_step(
            tensors[name], grads[name], state.moments[name], lr, state.hyper, decay=not is_bias(name)
        )
    return params.with_tensors(updated)


# ---------------------------------------------------------------------------
# Gradients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GraphInputs:
    node_features: np.ndarray
    adjacency: AdjacencyMatrix


def task_targets(labels, task: str) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    return labels[:, :1] if task == "A" else labels


def batch_loss(
    visual, textual, labels, params: ModelParams, weights: ClassWeights, task: str,
    loss_kind: str = "custom", graph: GraphInputs = None,
) -> float:
    """Mean loss over the rows of a batch."""
    fused = fuse_batch(visual, textual, params.lam)
    y = task_targets(labels, task)
    if task == "A":
        logits = binary_logits(fused, params)[:, None]
        w = weights.select([0]) if weights is not None else None
    else:
        h = gcn_forward(graph.node_features, graph.adjacency, params.gcn)
        logits = multilabel_logits(fused, h, params)
        w = weights
    return loss_from_logits(logits, y, loss_kind, w)


def compute_gradients(
    visual, textual, labels, params: ModelParams, weights: ClassWeights, task: str,
    loss_kind: str = "custom", graph: GraphInputs = None,
) -> Tuple[float, Dict[str, np.ndarray]]:
    """Loss and exact gradients of the mean batch loss for every tensor.

    Tensors the task does not use get zero gradients.
    """
    if len(visual) == 0:
        raise ParameterError("cannot compute gradients of an empty batch")
    fused = fuse_batch(visual, textual, params.lam)
    y = task_targets(labels, task)
    grads = {k: np.zeros_like(v) for k, v in params.tensors().items()}

    if task == "A":
        w = weights.select([0]) if weights is not None else None
        logits = binary_logits(fused, params)[:, None]
        loss = loss_from_logits(logits, y, loss_kind, w)
        g = loss_grad_logits(logits, y, loss_kind, w)[:, 0]
        grads["binary.weight"] = fused.T @ g
        grads["binary.bias"] = np.array([g.sum()])
    elif task == "B":
        if graph is None:
            raise ParameterError("task B needs node features and an adjacency matrix")
        cache = GcnCache()
        h = gcn_forward(graph.node_features, graph.adjacency, params.gcn, cache)
        z = fused @ params.projection.weight.T + params.projection.bias
        logits = z @ h.T
        loss = loss_from_logits(logits, y, loss_kind, weights)
        g = loss_grad_logits(logits, y, loss_kind, weights)
        grad_h = g.T @ z
        grad_z = g @ h
        grads["projection.weight"] = grad_z.T @ fused
        grads["projection.bias"] = grad_z.sum(axis=0)
        for k, gw in enumerate(gcn_backward(grad_h, graph.adjacency, params.gcn, cache)):
            grads[f"gcn.{k}"] = gw
    else:
        raise ParameterError(f"task must be 'A' or 'B', got {task!r}")
    return loss, grads


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    lr_graph: float = 1e-2
    lr_head: float = 1e-3
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    loss_kind: str = "custom"
    lam: float = DEFAULT_LAMBDA
    gcn_dims: Tuple[int, ...] = (512, 2048)
    weight_decay: float = 0.01
    threshold: float = 0.5
    gate_subtypes: bool = False
    subtypes_only: bool = False
    slope: float = 0.2
    weight_formula: str = "balanced"

    def __post_init__(self):
        if self.lr_graph <= 0 or self.lr_head <= 0:
            raise ParameterError("learning rates must be positive")
        if self.batch_size < 1:
            raise ParameterError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 0:
            raise ParameterError(f"epochs must be >= 0, got {self.epochs}")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.loss_kind not in ("custom", "softmargin"):
            raise ParameterError(f"loss_kind must be 'custom' or 'softmargin', got {self.loss_kind!r}")
        if not 0.0 < self.threshold < 1.0:
            raise ParameterError(f"threshold must lie in (0, 1), got {self.threshold}")

    def describe(self) -> str:
        return " ".join(
            f"{k}={','.join(map(str, v)) if isinstance(v, tuple) else v}" for k, v in self.__dict__.items()
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    report: MetricsReport
    seconds: float


@dataclass
class FitResult:
    params: ModelParams
    history: List[EpochRecord]
    best_epoch: int
    weights: ClassWeights
    initial_params: ModelParams = field(repr=False, default=None)

    @property
    def best(self) -> EpochRecord:
        return self.history[self.best_epoch]


def task_score(report: MetricsReport, task: str) -> float:
    return report.task_a_macro_f1 if task == "A" else report.task_b_score


def evaluate(ds: Dataset, params: ModelParams, task: str, graph: GraphInputs = None,
             gate_subtypes: bool = False, subtypes_only: bool = False) -> MetricsReport:
    node_features = graph.node_features if graph is not None else None
    adjacency = graph.adjacency if graph is not None else None
    p = predict_proba(ds.visual, ds.textual, params, task, node_features, adjacency)
    pred = threshold_predict(p, params.threshold, gate_subtypes and task == "B")
    gold = task_targets(ds.labels, task).astype(np.int64)
    names = ds.label_names[:1] if task == "A" else ds.label_names
    return metrics_report(pred, gold, names, subtypes_only=subtypes_only and task == "B")


def training_weights(train: Dataset, task: str, formula: str = "balanced") -> ClassWeights:
    counts = train.labels.sum(axis=0)
    if task == "A":
        w0 = compute_class_weights(counts[:1], len(train), formula)
        ones = np.ones(len(counts) - 1)
        return ClassWeights(np.concatenate([w0.w_pos, ones]), np.concatenate([w0.w_neg, ones]))
    return compute_class_weights(counts, len(train), formula)


def fit(
    train: Dataset,
    valid: Dataset,
    cfg: TrainConfig,
    task: str,
    graph: GraphInputs = None,
    weights: ClassWeights = None,
) -> FitResult:
    """Seeded minibatch AdamW; keeps the parameters of the best validation epoch.

    Epoch 0 is the untrained model. Ties in the validation score keep the
    earlier epoch. Class weights default to the training-set frequencies.
    """
    if task not in ("A", "B"):
        raise ParameterError(f"task must be 'A' or 'B', got {task!r}")
    if len(train) == 0 or len(valid) == 0:
        raise ParameterError("training and validation sets must be nonempty")
    if (train.d_v, train.e) != (valid.d_v, valid.e):
        raise ShapeError(f"train features are {train.d_v}+{train.e}, valid are {valid.d_v}+{valid.e}")
    if task == "B" and graph is None:
        raise ParameterError("task B needs graph inputs (node features and adjacency)")

    node_dim = graph.node_features.shape[1] if graph is not None else 1
    params = init_params(cfg.seed, train.d_v + train.e, node_dim, cfg.gcn_dims, cfg.lam, cfg.threshold, cfg.slope)
    initial = params.copy()
    if weights is None and cfg.loss_kind == "custom":
        weights = training_weights(train, task, cfg.weight_formula)
    if weights is None:
        weights = ClassWeights.uniform(len(train.label_names))

    state = OptimizerState.for_params(params, AdamWHyper(weight_decay=cfg.weight_decay))
    names = task_tensors(params, task)
    shuffler = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
    n = len(train)

    def record(epoch, loss, started):
        report = evaluate(valid, params, task, graph, cfg.gate_subtypes, cfg.subtypes_only)
        return EpochRecord(epoch, loss, report, time.perf_counter() - started)

    started = time.perf_counter()
    init_loss = batch_loss(train.visual, train.textual, train.labels, params, weights, task, cfg.loss_kind, graph)
    history = [record(0, init_loss, started)]
    best_epoch, best_score, best_params = 0, task_score(history[0].report, task), params

    for epoch in range(1, cfg.epochs + 1):
        started = time.perf_counter()
        order = shuffler.permutation(n)
        total = 0.0
        for b, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = order[lo:lo + cfg.batch_size]
            loss, grads = compute_gradients(
                train.visual[idx], train.textual[idx], train.labels[idx], params, weights, task, cfg.loss_kind, graph
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch, b)
            total += loss * len(idx)
            params = apply_gradients(params, grads, state, cfg.lr_graph, cfg.lr_head, names)
        history.append(record(epoch, total / n, started))
        score = task_score(history[-1].report, task)
        logger.debug("epoch %d loss %.6f score %.4f", epoch, total / n, score)
        if score > best_score:
            best_epoch, best_score, best_params = epoch, score, params

    return FitResult(best_params, history, best_epoch, weights, initial)


# ---------------------------------------------------------------------------
# Epoch log
# ---------------------------------------------------------------------------

def format_epoch_log(history: Sequence[EpochRecord], header_comment: str = "", timing: bool = True) -> str:
    """Per-epoch TSV.

    Wall-clock seconds go on the single ``# wall_clock_seconds`` header line
    so the remaining lines are reproducible byte for byte.
    """
    names = [s.name for s in history[0].report.per_label] if history else list(LABEL_NAMES)
    lines = []
    if timing:
        lines.append("# wall_clock_seconds\t" + ",".join(f"{r.seconds:.3f}" for r in history))
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("\t".join(["epoch", "train_loss", "valid_macro_f1", "valid_weighted_f1"] + [f"f1_{n}" for n in names]))
    for r in history:
        cells = [str(r.epoch), f"{r.train_loss:.8f}", f"{r.report.task_a_macro_f1:.6f}", f"{r.report.task_b_score:.6f}"]
        cells += [f"{s.weighted_f1:.6f}" for s in r.report.per_label]
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"
