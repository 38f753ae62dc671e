"""End-to-end finite-difference validation of the hand-written gradients."""

from typing import Dict, Iterable

import numpy as np

from .labelgraph import build_adjacency, build_cooccurrence
from .model import ClassWeights, ModelParams, init_params
from .numerics import grad_check
from .optim import GraphInputs, batch_loss, compute_gradients

TOY_DIMS = {"d_v": 8, "e": 6, "e_emb": 4, "d_c": 5}
TOY_SCHEDULES = {2: (7, 5), 3: (7, 6, 5), 4: (7, 6, 6, 5), 5: (7, 6, 6, 6, 5)}


def toy_problem(seed: int, depth: int, n: int = 6, u: int = 5):
    """Random batch, graph inputs, weights and parameters at toy sizes."""
    rng = np.random.default_rng([seed, depth])
    visual = rng.standard_normal((n, TOY_DIMS["d_v"]))
    textual = rng.standard_normal((n, TOY_DIMS["e"]))
    labels = (rng.random((n, u)) < 0.5).astype(np.int64)
    pool = (rng.random((40, u)) < 0.4).astype(np.int64)
    graph = GraphInputs(rng.standard_normal((u, TOY_DIMS["e_emb"])), build_adjacency(build_cooccurrence(pool)))
    weights = ClassWeights(rng.uniform(0.5, 4.0, u), rng.uniform(0.5, 1.5, u))
    lam = float(rng.uniform(0.2, 0.8))
    params = init_params(seed, TOY_DIMS["d_v"] + TOY_DIMS["e"], TOY_DIMS["e_emb"], TOY_SCHEDULES[depth], lam)
    # nonzero biases so their gradients are exercised away from the init point
    params = params.with_tensors({
        "binary.bias": rng.normal(size=1),
        "projection.bias": rng.normal(size=TOY_DIMS["d_c"]),
    })
    return visual, textual, labels, graph, weights, params


def max_gradient_error(visual, textual, labels, params: ModelParams, weights, task, loss_kind, graph,
                       step: float = 1e-5) -> Dict[str, float]:
    """Max relative error per tensor of ``compute_gradients`` against central differences.

    The default step sits near the cube root of float64 epsilon, where
    truncation and round-off errors of the central difference balance.
    """
    _, grads = compute_gradients(visual, textual, labels, params, weights, task, loss_kind, graph)
    out = {}
    for name, value in params.tensors().items():
        def f(theta, name=name):
            return batch_loss(visual, textual, labels, params.with_tensors({name: theta}), weights, task,
                              loss_kind, graph)
        out[name] = grad_check(f, value, grads[name], step)
    return out


def check_model_gradients(
    seed: int,
    tasks: Iterable[str] = "AB",
    loss_kinds: Iterable[str] = ("custom", "softmargin"),
    depths: Iterable[int] = (2, 3),
) -> Dict[str, float]:
    """Worst relative error for each (task, loss, depth) combination."""
    worst = {}
    for task in tasks:
        for loss_kind in loss_kinds:
            for depth in depths if task == "B" else list(depths)[:1]:
                visual, textual, labels, graph, weights, params = toy_problem(seed, depth)
                errs = max_gradient_error(visual, textual, labels, params, weights, task, loss_kind, graph)
                key = f"task={task} loss={loss_kind}" + (f" depth={depth}" if task == "B" else "")
                worst[key] = max(errs.values())
    return worst
