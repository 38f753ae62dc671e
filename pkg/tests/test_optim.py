import numpy as np
import pytest

from memegcn.errors import DivergenceError, ParameterError
from collections import namedtuple

from memegcn.gradcheck import check_model_gradients
from memegcn.gradcheck import toy_problem as _toy
from memegcn.model import ClassWeights, save_checkpoint, Checkpoint
from memegcn.optim import (
    AdamWHyper,
    MomentState,
    OptimizerState,
    TrainConfig,
    adamw_step,
    apply_gradients,
    batch_loss,
    compute_gradients,
    fit,
    format_epoch_log,
    param_group,
)

Toy = namedtuple("Toy", "visual textual labels graph weights params")


def toy_problem(*args, **kw):
    return Toy(*_toy(*args, **kw))


SMALL = dict(gcn_dims=(8, 16), epochs=3, batch_size=16)


def test_adamw_zero_gradient_no_decay_is_identity():
    theta = np.array([0.3, -1.2])
    new, state = adamw_step(theta, np.zeros(2), MomentState.zeros_like(theta), 1e-3, AdamWHyper(weight_decay=0.0))
    np.testing.assert_array_equal(new, theta)
    assert state.step == 1


def test_adamw_first_step_is_lr_times_sign():
    theta = np.zeros(3)
    g = np.array([0.5, -2.0, 1e-3])
    new, _ = adamw_step(theta, g, MomentState.zeros_like(theta), 0.01, AdamWHyper(weight_decay=0.0))
    # m_hat = g, sqrt(v_hat) = |g|
    np.testing.assert_allclose(new, -0.01 * g / (np.abs(g) + 1e-8), rtol=1e-15)


def test_adamw_pure_decay():
    new, _ = adamw_step(np.array([1.0]), np.zeros(1), MomentState.zeros_like(np.zeros(1)), 0.01)
    assert new[0] == pytest.approx(1.0 - 0.01 * 0.01, abs=1e-15)
    biased, _ = adamw_step(np.array([1.0]), np.zeros(1), MomentState.zeros_like(np.zeros(1)), 0.01, decay=False)
    assert biased[0] == 1.0


def test_adamw_does_not_mutate_inputs():
    theta = np.ones(2)
    st = MomentState.zeros_like(theta)
    adamw_step(theta, np.ones(2), st, 0.1)
    np.testing.assert_array_equal(theta, 1.0)
    np.testing.assert_array_equal(st.m, 0.0)


def test_param_groups():
    assert param_group("gcn.0") == "graph"
    assert param_group("projection.weight") == "head"
    assert param_group("binary.bias") == "head"


@pytest.mark.parametrize("task", ["A", "B"])
def test_gradient_is_a_mean(task):
    prob = toy_problem(2, 2, n=4)
    x_v, x_t, y = prob.visual, prob.textual, prob.labels
    kw = dict(params=prob.params, weights=prob.weights, task=task, loss_kind="custom", graph=prob.graph)
    l1, g1 = compute_gradients(x_v, x_t, y, **kw)
    l2, g2 = compute_gradients(np.vstack([x_v, x_v]), np.vstack([x_t, x_t]), np.vstack([y, y]), **kw)
    assert l1 == pytest.approx(l2, rel=1e-13)
    for k in g1:
        np.testing.assert_allclose(g1[k], g2[k], rtol=1e-12, atol=1e-15)


@pytest.mark.parametrize("task", ["A", "B"])
def test_unused_tensors_get_zero_gradients(task):
    prob = toy_problem(3, 2)
    _, grads = compute_gradients(prob.visual, prob.textual, prob.labels, prob.params, prob.weights, task, "custom", prob.graph)
    for k, g in grads.items():
        if k.startswith("binary.") != (task == "A"):
            assert not g.any()


def test_model_gradients_match_finite_differences():
    worst = check_model_gradients(0)
    assert max(worst.values()) < 1e-5, worst


def test_single_sample_loss_decreases():
    prob = toy_problem(5, 2, n=1)
    params = prob.params
    state = OptimizerState.for_params(params)
    args = (prob.visual, prob.textual, prob.labels)
    start = batch_loss(*args, params, prob.weights, "B", "custom", prob.graph)
    for _ in range(50):
        _, grads = compute_gradients(*args, params, prob.weights, "B", "custom", prob.graph)
        params = apply_gradients(params, grads, state, 1e-2, 1e-2)
    assert batch_loss(*args, params, prob.weights, "B", "custom", prob.graph) < start


def test_learning_rate_groups_are_separate():
    prob = toy_problem(6, 2)
    _, grads = compute_gradients(prob.visual, prob.textual, prob.labels, prob.params, prob.weights, "B", "custom", prob.graph)
    new = apply_gradients(prob.params, grads, OptimizerState.for_params(prob.params), 1e-2, 0.0 + 1e-12)
    before, after = prob.params.tensors(), new.tensors()
    assert np.abs(after["gcn.0"] - before["gcn.0"]).max() > 1e-4
    assert np.abs(after["projection.weight"] - before["projection.weight"]).max() < 1e-10


def test_fit_zero_epochs_returns_initial(small_split):
    train, valid, graph = small_split
    res = fit(train, valid, TrainConfig(**{**SMALL, "epochs": 0}, seed=4), "B", graph)
    assert res.best_epoch == 0 and len(res.history) == 1
    for k, v in res.params.tensors().items():
        np.testing.assert_array_equal(v, res.initial_params.tensors()[k])


@pytest.mark.parametrize("task", ["A", "B"])
def test_fit_is_deterministic(small_split, task, tmp_path):
    train, valid, graph = small_split
    cfg = TrainConfig(**SMALL, seed=11)
    out = []
    for i in range(2):
        res = fit(train, valid, cfg, task, graph)
        path = tmp_path / f"{i}.ckpt"
        save_checkpoint(path, Checkpoint(res.params, graph.node_features, graph.adjacency, {"task": task}))
        out.append((path.read_bytes(), format_epoch_log(res.history, cfg.describe(), timing=False)))
    assert out[0] == out[1]


def test_fit_task_a_leaves_graph_weights(small_split):
    train, valid, graph = small_split
    res = fit(train, valid, TrainConfig(**SMALL, seed=2), "A", graph)
    for k in ("projection.weight", "gcn.0", "gcn.1"):
        np.testing.assert_array_equal(res.params.tensors()[k], res.initial_params.tensors()[k])


def test_fit_improves_on_easy_data(small_split):
    train, valid, graph = small_split
    res = fit(train, valid, TrainConfig(gcn_dims=(8, 16), epochs=15, seed=0), "B", graph)
    assert res.best.report.task_b_score > res.history[0].report.task_b_score
    assert res.history[-1].train_loss < res.history[0].train_loss


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_fit_divergence_raises(small_split):
    train, valid, graph = small_split
    bad = ClassWeights(np.full(5, np.inf), np.ones(5))
    with pytest.raises(DivergenceError) as err:
        fit(train, valid, TrainConfig(**SMALL), "B", graph, weights=bad)
    assert err.value.epoch == 1 and err.value.batch == 0


@pytest.mark.parametrize("kw", [dict(lr_graph=0), dict(batch_size=0), dict(lam=1.5), dict(loss_kind="hinge"), dict(epochs=-1)])
def test_config_validation(kw):
    with pytest.raises(ParameterError):
        TrainConfig(**kw)


def test_epoch_log_layout(small_split):
    train, valid, graph = small_split
    res = fit(train, valid, TrainConfig(**SMALL), "B", graph)
    lines = format_epoch_log(res.history, "cfg").splitlines()
    assert lines[0].startswith("# wall_clock_seconds\t")
    assert lines[1] == "# cfg"
    assert lines[2].split("\t")[:4] == ["epoch", "train_loss", "valid_macro_f1", "valid_weighted_f1"]
    assert len(lines) == 3 + len(res.history)
