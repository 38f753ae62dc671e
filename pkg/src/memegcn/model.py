"""Binary and multi-label heads, their losses, and checkpoint files.

The multi-label head follows the classifier-generation idea: the graph
network turns one word vector per label into one weight vector per label,
and each label's logit is that vector dotted with the projected fused
feature.
"""

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, Sequence

import numpy as np

from .dataio import decode_feature_matrix, encode_feature_matrix
from .errors import DegenerateClassError, FormatError, ParameterError, ShapeError
from .fusion import DEFAULT_LAMBDA, ProjectionParams, fuse, fuse_batch, project
from .labelgraph import AdjacencyMatrix, GcnStack, gcn_forward
from .numerics import DEFAULT_SLOPE, log_sigmoid, sigmoid

PROB_CLAMP = 1e-12
DEFAULT_THRESHOLD = 0.5


@dataclass
class BinaryHeadParams:
    weight: np.ndarray  # length N
    bias: np.ndarray  # shape (1,)


@dataclass
class ModelParams:
    binary: BinaryHeadParams
    projection: ProjectionParams
    gcn: GcnStack
    lam: float = DEFAULT_LAMBDA
    threshold: float = DEFAULT_THRESHOLD

    @property
    def fused_dim(self) -> int:
        return self.binary.weight.shape[0]

    def tensors(self) -> Dict[str, np.ndarray]:
        """Trainable tensors by name, in checkpoint order."""
        out = {
            "binary.weight": self.binary.weight,
            "binary.bias": self.binary.bias,
            "projection.weight": self.projection.weight,
            "projection.bias": self.projection.bias,
        }
        for k, w in enumerate(self.gcn.weights):
            out[f"gcn.{k}"] = w
        return out

    def with_tensors(self, tensors: Dict[str, np.ndarray]) -> "ModelParams":
        t = {**self.tensors(), **tensors}
        n_layers = len(self.gcn.weights)
        return replace(
            self,
            binary=BinaryHeadParams(t["binary.weight"], t["binary.bias"]),
            projection=ProjectionParams(t["projection.weight"], t["projection.bias"]),
            gcn=GcnStack([t[f"gcn.{k}"] for k in range(n_layers)], self.gcn.slope),
        )

    def copy(self) -> "ModelParams":
        return self.with_tensors({k: v.copy() for k, v in self.tensors().items()})


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(
    seed: int,
    fused_dim: int,
    node_dim: int,
    gcn_dims: Sequence[int],
    lam: float = DEFAULT_LAMBDA,
    threshold: float = DEFAULT_THRESHOLD,
    slope: float = DEFAULT_SLOPE,
) -> ModelParams:
    """Glorot-uniform weights and zero biases, drawn in a fixed order from ``seed``."""
    if not gcn_dims:
        raise ParameterError("at least one graph layer is required")
    rng = np.random.default_rng(seed)
    d_c = gcn_dims[-1]
    binary = BinaryHeadParams(glorot_uniform(rng, fused_dim, 1, fused_dim), np.zeros(1))
    proj = ProjectionParams(glorot_uniform(rng, fused_dim, d_c, (d_c, fused_dim)), np.zeros(d_c))
    layers = []
    fan_in = node_dim
    for out in gcn_dims:
        layers.append(glorot_uniform(rng, fan_in, out, (fan_in, out)))
        fan_in = out
    return ModelParams(binary, proj, GcnStack(layers, slope), float(lam), float(threshold))


# ---------------------------------------------------------------------------
# Forward passes
# ---------------------------------------------------------------------------

def binary_logits(fused, params: ModelParams) -> np.ndarray:
    fused = np.asarray(fused, dtype=np.float64)
    if fused.shape[-1] != params.fused_dim:
        raise ShapeError(f"binary head expects {params.fused_dim} features, got {fused.shape[-1]}")
    return fused @ params.binary.weight + params.binary.bias[0]


def binary_forward(f_v, f_t, params: ModelParams) -> float:
    """Probability that one sample is misogynous."""
    return float(sigmoid(binary_logits(fuse(f_v, f_t, params.lam).vector, params)))


def multilabel_logits(fused, label_vectors, params: ModelParams) -> np.ndarray:
    z = project(fused, params.projection)
    if label_vectors.shape[1] != z.shape[-1]:
        raise ShapeError(f"label vectors have width {label_vectors.shape[1]}, projection gives {z.shape[-1]}")
    return z @ label_vectors.T


def multilabel_forward(f_v, f_t, node_features, adj: AdjacencyMatrix, params: ModelParams) -> np.ndarray:
    """Per-label probabilities for one sample."""
    label_vectors = gcn_forward(node_features, adj, params.gcn)
    return sigmoid(multilabel_logits(fuse(f_v, f_t, params.lam).vector, label_vectors, params))


def predict_proba(visual, textual, params: ModelParams, task: str, node_features=None, adj=None) -> np.ndarray:
    """Batch probabilities: n x 1 for task A, n x u for task B."""
    fused = fuse_batch(visual, textual, params.lam)
    if task == "A":
        return sigmoid(binary_logits(fused, params))[:, None]
    if task == "B":
        return sigmoid(multilabel_logits(fused, gcn_forward(node_features, adj, params.gcn), params))
    raise ParameterError(f"task must be 'A' or 'B', got {task!r}")


# ---------------------------------------------------------------------------
# Class weights and losses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassWeights:
    w_pos: np.ndarray
    w_neg: np.ndarray

    def __post_init__(self):
        if np.any(np.asarray(self.w_pos) <= 0) or np.any(np.asarray(self.w_neg) <= 0):
            raise ParameterError("class weights must be strictly positive")

    def select(self, index) -> "ClassWeights":
        return ClassWeights(np.asarray(self.w_pos)[index], np.asarray(self.w_neg)[index])

    @classmethod
    def uniform(cls, u: int) -> "ClassWeights":
        return cls(np.ones(u), np.ones(u))


def compute_class_weights(positive_counts, n_s: int, formula: str = "balanced") -> ClassWeights:
    """Per-label positive/negative loss weights from label frequencies.

    ``formula="balanced"`` gives ``n_s / (2 N_p)`` and ``n_s / (2 N_n)``,
    which equal 1 for a label with as many positives as negatives.
    ``formula="frequency"`` gives the plain rates ``N_p / n_s`` and
    ``N_n / n_s``.
    """
    counts = np.asarray(positive_counts, dtype=np.float64)
    if n_s <= 0:
        raise ParameterError(f"n_s must be positive, got {n_s}")
    bad = [i for i, c in enumerate(counts) if not 0 < c < n_s]
    if bad:
        raise DegenerateClassError(
            f"label(s) {bad} have {[int(counts[i]) for i in bad]} positives out of {n_s}; "
            "weights need at least one positive and one negative"
        )
    neg = n_s - counts
    if formula == "balanced":
        return ClassWeights(n_s / (2.0 * counts), n_s / (2.0 * neg))
    if formula == "frequency":
        return ClassWeights(counts / n_s, neg / n_s)
    raise ParameterError(f"unknown weight formula {formula!r}")


def _as_batch(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[None, :] if x.ndim == 1 else x


def weighted_bce_loss(p, y, w: ClassWeights) -> float:
    """Class-weighted cross-entropy summed over labels, averaged over rows."""
    p = np.clip(_as_batch(p), PROB_CLAMP, 1.0 - PROB_CLAMP)
    y = _as_batch(y)
    per = w.w_pos * y * np.log(p) + w.w_neg * (1.0 - y) * np.log(1.0 - p)
    return float(-per.sum(axis=1).mean())


_LOG_LO = np.log(PROB_CLAMP)
_LOG_HI = np.log1p(-PROB_CLAMP)


def _clamped_log_probs(logits):
    """Clamped ``log p`` and ``log(1 - p)`` straight from logits, plus their active masks.

    Equivalent to clamping ``p`` to [1e-12, 1 - 1e-12] before the logs but
    without the cancellation in ``1 - sigmoid(x)`` for large ``x``.
    """
    ls_pos = log_sigmoid(logits)
    ls_neg = log_sigmoid(-logits)
    live_pos = (ls_pos > _LOG_LO) & (ls_pos < _LOG_HI)
    live_neg = (ls_neg > _LOG_LO) & (ls_neg < _LOG_HI)
    return np.clip(ls_pos, _LOG_LO, _LOG_HI), np.clip(ls_neg, _LOG_LO, _LOG_HI), live_pos, live_neg


def weighted_bce_from_logits(logits, y, w: ClassWeights) -> float:
    """:func:`weighted_bce_loss` of ``sigmoid(logits)``, computed stably."""
    x = _as_batch(logits)
    y = _as_batch(y)
    log_p, log_q, _, _ = _clamped_log_probs(x)
    per = w.w_pos * y * log_p + w.w_neg * (1.0 - y) * log_q
    return float(-per.sum(axis=1).mean())


def weighted_bce_grad_logits(logits, y, w: ClassWeights) -> np.ndarray:
    """Gradient of :func:`weighted_bce_from_logits` w.r.t. the logits.

    A clamped log term contributes zero gradient.
    """
    x = _as_batch(logits)
    y = _as_batch(y)
    p = sigmoid(x)
    _, _, live_pos, live_neg = _clamped_log_probs(x)
    g = -w.w_pos * y * (1.0 - p) * live_pos + w.w_neg * (1.0 - y) * p * live_neg
    return g / x.shape[0]


def softmargin_loss(logits, y) -> float:
    """Unweighted sigmoid cross-entropy, mean over labels and rows."""
    x = _as_batch(logits)
    y = _as_batch(y)
    per = -(y * log_sigmoid(x) + (1.0 - y) * log_sigmoid(-x))
    return float(per.mean(axis=1).mean())


def softmargin_grad_logits(logits, y) -> np.ndarray:
    x = _as_batch(logits)
    y = _as_batch(y)
    return (sigmoid(x) - y) / (x.shape[0] * x.shape[1])


def loss_from_logits(logits, y, loss_kind: str, weights: ClassWeights = None) -> float:
    if loss_kind == "custom":
        return weighted_bce_from_logits(logits, y, weights)
    if loss_kind == "softmargin":
        return softmargin_loss(logits, y)
    raise ParameterError(f"loss_kind must be 'custom' or 'softmargin', got {loss_kind!r}")


def loss_grad_logits(logits, y, loss_kind: str, weights: ClassWeights = None) -> np.ndarray:
    if loss_kind == "custom":
        return weighted_bce_grad_logits(logits, y, weights)
    if loss_kind == "softmargin":
        return softmargin_grad_logits(logits, y)
    raise ParameterError(f"loss_kind must be 'custom' or 'softmargin', got {loss_kind!r}")


def threshold_predict(p, threshold: float = DEFAULT_THRESHOLD, gate_subtypes: bool = False) -> np.ndarray:
    """Binary flags from probabilities with an inclusive threshold.

    With ``gate_subtypes`` the subtype flags (columns 1..) are cleared for
    any row whose misogynous flag (column 0) is off.
    """
    if not 0.0 < threshold < 1.0:
        raise ParameterError(f"threshold must lie in (0, 1), got {threshold}")
    p = np.asarray(p, dtype=np.float64)
    flags = (p >= threshold).astype(np.int64)
    if gate_subtypes and flags.shape[-1] > 1:
        flags[..., 1:] *= flags[..., :1]
    return flags


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Layout: ASCII header lines "key=value" opened by CHECKPOINT_MAGIC and closed
# by "END", then one FMAT blob per tensor in the order listed under
# "tensors". Biases are stored as 1 x k rows. The graph inputs (node
# features and adjacency) follow the trainable tensors so a checkpoint can
# be evaluated on its own.

CHECKPOINT_MAGIC = "MEMEGCN-CKPT1"


@dataclass
class Checkpoint:
    params: ModelParams
    node_features: np.ndarray
    adjacency: AdjacencyMatrix
    meta: Dict[str, str] = field(default_factory=dict)


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    params = ckpt.params
    tensors = {k: np.atleast_2d(v) for k, v in params.tensors().items()}
    tensors["node_features"] = ckpt.node_features
    tensors["adjacency"] = ckpt.adjacency.a
    header = {
        **ckpt.meta,
        "lambda": repr(params.lam),
        "threshold": repr(params.threshold),
        "slope": repr(params.gcn.slope),
        "fused_dim": str(params.fused_dim),
        "depth": str(len(params.gcn.weights)),
        "gcn_dims": ",".join(str(d) for d in params.gcn.dims),
        "tensors": ",".join(tensors),
    }
    lines = [CHECKPOINT_MAGIC] + [f"{k}={v}" for k, v in header.items()] + ["END"]
    blob = ("\n".join(lines) + "\n").encode("ascii")
    blob += b"".join(encode_feature_matrix(t) for t in tensors.values())
    Path(path).write_bytes(blob)


def load_checkpoint(path) -> Checkpoint:
    buf = Path(path).read_bytes()
    end_marker = buf.find(b"\nEND\n")
    if not buf.startswith(CHECKPOINT_MAGIC.encode("ascii") + b"\n") or end_marker < 0:
        raise FormatError("not a checkpoint file", 0)
    header = {}
    for line in buf[: end_marker].decode("ascii").split("\n")[1:]:
        key, _, value = line.partition("=")
        header[key] = value
    offset = end_marker + len(b"\nEND\n")
    tensors = {}
    for name in header["tensors"].split(","):
        tensors[name], offset = decode_feature_matrix(buf, offset)
    if offset != len(buf):
        raise FormatError("trailing bytes after checkpoint tensors", offset)

    depth = int(header["depth"])
    params = ModelParams(
        BinaryHeadParams(tensors["binary.weight"].reshape(-1), tensors["binary.bias"].reshape(-1)),
        ProjectionParams(tensors["projection.weight"], tensors["projection.bias"].reshape(-1)),
        GcnStack([tensors[f"gcn.{k}"] for k in range(depth)], float(header["slope"])),
        float(header["lambda"]),
        float(header["threshold"]),
    )
    reserved = {"lambda", "threshold", "slope", "fused_dim", "depth", "gcn_dims", "tensors"}
    meta = {k: v for k, v in header.items() if k not in reserved}
    return Checkpoint(params, tensors["node_features"], AdjacencyMatrix(tensors["adjacency"]), meta)


def quantize_params(params: ModelParams) -> ModelParams:
    """Round every tensor to float32 precision, as a checkpoint round trip would."""
    return params.with_tensors({k: v.astype(np.float32).astype(np.float64) for k, v in params.tensors().items()})

