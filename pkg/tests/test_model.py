import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from memegcn.errors import DegenerateClassError, FormatError, ParameterError, ShapeError
from memegcn.fusion import ProjectionParams
from memegcn.labelgraph import AdjacencyMatrix, GcnStack, build_adjacency, build_cooccurrence
from memegcn.model import (
    BinaryHeadParams,
    Checkpoint,
    ClassWeights,
    ModelParams,
    binary_forward,
    compute_class_weights,
    init_params,
    load_checkpoint,
    multilabel_forward,
    quantize_params,
    save_checkpoint,
    softmargin_loss,
    threshold_predict,
    weighted_bce_from_logits,
    weighted_bce_loss,
)
from memegcn.numerics import sigmoid

# Published weights for the five labels (positive, negative).
PUBLISHED_W_POS = (1.000, 3.924, 1.779, 2.270, 5.246)
PUBLISHED_W_NEG = (1.000, 0.573, 0.695, 0.641, 0.552)
LN2 = 0.6931471805599453


def params_with(n_fused, binary_w=None, bias=0.0, lam=0.5, gcn=None, proj=None, d_c=2):
    binary = BinaryHeadParams(np.zeros(n_fused) if binary_w is None else np.asarray(binary_w, float), np.array([bias]))
    proj = proj or ProjectionParams(np.zeros((d_c, n_fused)), np.zeros(d_c))
    gcn = gcn or GcnStack([np.zeros((2, d_c))])
    return ModelParams(binary, proj, gcn, lam)


def test_binary_forward_zero_params():
    p = params_with(5)
    assert binary_forward(np.ones(3), np.ones(2), p) == 0.5


def test_binary_forward_lambda_zero_ignores_text(rng):
    p = init_params(0, 5, 2, (3,), lam=0.0)
    f_v = rng.standard_normal(3)
    a = binary_forward(f_v, rng.standard_normal(2), p)
    b = binary_forward(f_v, 100 * rng.standard_normal(2), p)
    assert a == b


def test_binary_forward_scalar_chain():
    p = params_with(6, binary_w=[1, 0, 0, 0, 0, 0], lam=0.5)
    assert binary_forward([2.0, 0.0, 0.0], [9.0, 9.0, 9.0], p) == pytest.approx(0.7310585786300049, abs=1e-12)


def test_multilabel_zero_final_layer(rng):
    p = init_params(1, 4, 3, (5, 2))
    p.gcn.weights[-1][:] = 0.0
    adj = build_adjacency(build_cooccurrence(rng.random((20, 5)) < 0.5))
    probs = multilabel_forward(rng.standard_normal(2), rng.standard_normal(2), rng.standard_normal((5, 3)), adj, p)
    np.testing.assert_array_equal(probs, 0.5)


def test_multilabel_toy_dot_product():
    # graph rows [[1,0],[0,2]] from identity features, zero adjacency, W = diag(1,2)
    gcn = GcnStack([np.diag([1.0, 2.0])])
    proj = ProjectionParams(np.eye(2), np.zeros(2))
    p = ModelParams(BinaryHeadParams(np.zeros(2), np.zeros(1)), proj, gcn, lam=0.5)
    probs = multilabel_forward([6.0], [-2.0], np.eye(2), AdjacencyMatrix(np.zeros((2, 2))), p)
    np.testing.assert_allclose(probs, [0.9525741268224334, 0.11920292202211755], atol=1e-12)


def test_multilabel_identical_rows_identical_probs(rng):
    p = init_params(2, 5, 3, (4, 3))
    x = rng.standard_normal((5, 3))
    x[2] = x[1]
    adj = AdjacencyMatrix(np.zeros((5, 5)))
    probs = multilabel_forward(rng.standard_normal(3), rng.standard_normal(2), x, adj, p)
    assert probs[1] == probs[2]


def test_class_weights_published_values():
    w = compute_class_weights([5000, 1274, 2810, 2202, 953], 10000)
    np.testing.assert_allclose(w.w_pos, PUBLISHED_W_POS, atol=1e-3)
    np.testing.assert_allclose(w.w_neg, PUBLISHED_W_NEG, atol=1e-3)


def test_class_weights_balanced_and_small():
    w = compute_class_weights([5, 1], 10)
    assert w.w_pos[0] == w.w_neg[0] == 1.0
    w = compute_class_weights([1], 4)
    assert w.w_pos[0] == 2.0
    assert w.w_neg[0] == pytest.approx(4 / 6)


def test_class_weights_frequency_formula():
    w = compute_class_weights([1274], 10000, formula="frequency")
    assert w.w_pos[0] == pytest.approx(0.1274)
    assert w.w_neg[0] == pytest.approx(0.8726)


@pytest.mark.parametrize("counts", [[0, 5], [10, 5]])
def test_class_weights_degenerate(counts):
    with pytest.raises(DegenerateClassError):
        compute_class_weights(counts, 10)


def test_weighted_bce_examples():
    w1 = ClassWeights(np.ones(1), np.ones(1))
    assert weighted_bce_loss([0.5], [1], w1) == pytest.approx(LN2, abs=1e-12)
    assert weighted_bce_loss([1.0, 0.0], [1, 0], ClassWeights.uniform(2)) < 1e-11
    t3 = ClassWeights(np.array(PUBLISHED_W_POS), np.array(PUBLISHED_W_NEG))
    # (1.000 + 0.573 + 0.695 + 0.641 + 0.552) * ln 2
    expected = 3.461 * LN2
    assert weighted_bce_loss(np.full(5, 0.5), [1, 0, 0, 0, 0], t3) == pytest.approx(expected, abs=1e-12)
    assert expected == pytest.approx(2.398982, abs=1e-6)


def test_weighted_bce_unit_weights_equals_plain_bce(rng):
    p = rng.uniform(0.01, 0.99, (7, 5))
    y = (rng.random((7, 5)) < 0.5).astype(float)
    plain = -(y * np.log(p) + (1 - y) * np.log(1 - p)).sum(axis=1).mean()
    assert abs(weighted_bce_loss(p, y, ClassWeights.uniform(5)) - plain) < 1e-12


def test_weighted_bce_logit_form_agrees(rng):
    x = rng.uniform(-8, 8, (6, 5))
    y = (rng.random((6, 5)) < 0.5).astype(float)
    w = ClassWeights(rng.uniform(0.5, 4, 5), rng.uniform(0.5, 2, 5))
    assert weighted_bce_from_logits(x, y, w) == pytest.approx(weighted_bce_loss(sigmoid(x), y, w), rel=1e-12)
    assert weighted_bce_from_logits(np.array([[-1000.0, 1000.0]]), np.array([[1, 0]]), ClassWeights.uniform(2)) \
        == pytest.approx(2 * -np.log(1e-12))


@given(st.floats(0.01, 0.98), st.floats(0.001, 0.01))
def test_weighted_bce_monotone(p, dp):
    w = ClassWeights(np.array([2.5]), np.array([0.7]))
    assert weighted_bce_loss([p + dp], [1], w) < weighted_bce_loss([p], [1], w)
    assert weighted_bce_loss([p + dp], [0], w) > weighted_bce_loss([p], [0], w)


def test_softmargin_examples():
    assert softmargin_loss(np.zeros(5), [1, 0, 1, 0, 0]) == pytest.approx(LN2, abs=1e-12)
    assert softmargin_loss([800.0], [1]) == 0.0
    assert softmargin_loss([1.0, -1.0], [1, 0]) == pytest.approx(0.3132616875182228, abs=1e-12)


def test_threshold_predict():
    p = np.array([0.9, 0.6, 0.4, 0.5, 0.1])
    np.testing.assert_array_equal(threshold_predict(p, 0.5), [1, 1, 0, 1, 0])
    np.testing.assert_array_equal(threshold_predict([0.4, 0.9, 0.9, 0.9, 0.9], 0.5, gate_subtypes=True), [0] * 5)
    np.testing.assert_array_equal(threshold_predict([0.5], 0.5), [1])
    with pytest.raises(ParameterError):
        threshold_predict(p, 1.0)


def test_threshold_predict_batch_gating():
    p = np.array([[0.4, 0.9, 0.1, 0.9, 0.9], [0.6, 0.9, 0.1, 0.2, 0.9]])
    np.testing.assert_array_equal(threshold_predict(p, 0.5, True), [[0, 0, 0, 0, 0], [1, 1, 0, 0, 1]])


@given(st.lists(st.floats(0.001, 0.999), min_size=5, max_size=5), st.integers(0, 4), st.floats(0, 0.5))
def test_threshold_predict_monotone(p, i, bump):
    before = threshold_predict(np.array(p), 0.5)
    q = np.array(p)
    q[i] = min(q[i] + bump, 1.0)
    after = threshold_predict(q, 0.5)
    assert np.all(after >= before)


def test_init_params_shapes_and_determinism():
    a = init_params(4, 10, 3, (7, 6))
    b = init_params(4, 10, 3, (7, 6))
    assert a.binary.weight.shape == (10,)
    assert a.projection.weight.shape == (6, 10)
    assert [w.shape for w in a.gcn.weights] == [(3, 7), (7, 6)]
    for k, v in a.tensors().items():
        assert v.tobytes() == b.tensors()[k].tobytes()
    limit = np.sqrt(6 / (3 + 7))
    assert np.abs(a.gcn.weights[0]).max() <= limit
    assert np.all(a.projection.bias == 0) and a.binary.bias[0] == 0


def test_checkpoint_round_trip(tmp_path, rng):
    params = quantize_params(init_params(9, 7, 3, (4, 5), lam=0.3))
    adj = build_adjacency(build_cooccurrence(rng.random((20, 5)) < 0.5))
    nodes = rng.standard_normal((5, 3)).astype(np.float32).astype(np.float64)
    adj = AdjacencyMatrix(adj.a.astype(np.float32).astype(np.float64))
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, Checkpoint(params, nodes, adj, {"task": "B", "seed": "9"}))
    back = load_checkpoint(path)
    assert back.meta == {"task": "B", "seed": "9"}
    assert back.params.lam == 0.3 and back.params.gcn.dims == (4, 5)
    for k, v in params.tensors().items():
        np.testing.assert_array_equal(back.params.tensors()[k], v)
    np.testing.assert_array_equal(back.node_features, nodes)
    np.testing.assert_array_equal(back.adjacency.a, adj.a)


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.ckpt"
    p.write_bytes(b"hello\n")
    with pytest.raises(FormatError):
        load_checkpoint(p)


def test_shape_errors():
    p = init_params(0, 4, 2, (3,))
    with pytest.raises(ShapeError):
        binary_forward(np.ones(3), np.ones(2), p)
