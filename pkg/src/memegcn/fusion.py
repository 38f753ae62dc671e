"""Lambda-weighted concatenation of visual and textual features."""

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

DEFAULT_LAMBDA = 0.7


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")


@dataclass(frozen=True)
class FusedFeature:
    vector: np.ndarray
    lambda_used: float


@dataclass
class ProjectionParams:
    weight: np.ndarray  # d_c x N
    bias: np.ndarray  # d_c

    @property
    def out_dim(self) -> int:
        return self.weight.shape[0]


def fuse(f_v, f_t, lam: float = DEFAULT_LAMBDA) -> FusedFeature:
    """Return ``[(1 - lam) * f_v, lam * f_t]``.

    ``lam = 0`` keeps only the visual stream, ``lam = 1`` only the textual one.
    """
    _check_lambda(lam)
    f_v = np.asarray(f_v, dtype=np.float64).reshape(-1)
    f_t = np.asarray(f_t, dtype=np.float64).reshape(-1)
    return FusedFeature(np.concatenate([(1.0 - lam) * f_v, lam * f_t]), float(lam))


def fuse_batch(visual, textual, lam: float = DEFAULT_LAMBDA) -> np.ndarray:
    """Row-wise :func:`fuse` over n x d_v and n x e blocks."""
    _check_lambda(lam)
    visual = np.asarray(visual, dtype=np.float64)
    textual = np.asarray(textual, dtype=np.float64)
    if visual.shape[0] != textual.shape[0]:
        raise ShapeError(f"visual has {visual.shape[0]} rows but textual has {textual.shape[0]}")
    return np.hstack([(1.0 - lam) * visual, lam * textual])


def project(f, p: ProjectionParams) -> np.ndarray:
    v = f.vector if isinstance(f, FusedFeature) else np.asarray(f, dtype=np.float64)
    if p.weight.shape[1] != v.shape[-1]:
        raise ShapeError(f"projection expects {p.weight.shape[1]} inputs, fused vector has {v.shape[-1]}")
    return v @ p.weight.T + p.bias
