import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpgat.featurize import PAD
from cpgat.gnn import (
    EmptyNeighborhood,
    LayerSpec,
    ModelParams,
    ShapeMismatch,
    attention_softmax,
    backward,
    check_params,
    forward,
    gat_aggregate,
    gat_logits,
    gcn_layer,
    init_params,
    leaky_relu,
    make_specs,
    masked_mean,
    readout,
)
from helpers import central_differences, random_graph_tensors, relative_error

TOL = 1e-9


def model(rng, in_dim, hidden, depth=2, kind="GAT", vocab=12, **kw):
    specs = make_specs(in_dim, hidden=hidden, depth=depth, kind=kind, **kw)
    params = init_params(specs, rng, vocab_size=vocab, embed_dim=in_dim)
    return specs, params


def max_grad_error(g, params, specs):
    trace = forward(g, params, specs)
    grads = backward(trace, g, params, specs, upstream=1.0)
    arrays = [arr for _, arr in params.named()]
    numeric = central_differences(lambda: forward(g, params, specs).logit, arrays)
    return max(relative_error(grads[name], num) for (name, _), num in zip(params.named(), numeric))


class TestLayerSpec:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(kind="MLP", in_dim=2, out_dim=2),
            dict(kind="GAT", in_dim=0, out_dim=2),
            dict(kind="GAT", in_dim=2, out_dim=2, slope=1.0),
            dict(kind="GAT", in_dim=2, out_dim=2, heads=0),
            dict(kind="GAT", in_dim=2, out_dim=2, activation="tanh"),
            dict(kind="GCN", in_dim=2, out_dim=2, heads=2),
        ],
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            LayerSpec(**kw)

    def test_make_specs_chains_widths(self):
        specs = make_specs(5, hidden=3, depth=3, heads=2)
        assert [(s.in_dim, s.width) for s in specs] == [(5, 6), (6, 6), (6, 6)]


class TestGatLogits:
    def test_hand_case(self):
        h = np.array([[1.0, 0.0], [0.0, 1.0]])
        e = gat_logits(h, np.eye(2), np.array([1.0, 0, 0, 0]), np.ones((2, 2), bool))
        assert abs(e[0, 1] - 1.0) < TOL and abs(e[1, 0] - 0.0) < TOL

    def test_zero_attention_vector(self):
        rng = np.random.default_rng(0)
        e = gat_logits(rng.normal(size=(4, 3)), rng.normal(size=(2, 3)), np.zeros(4), np.ones((4, 4), bool))
        assert not e.any()

    @given(st.floats(1e-6, 1e6))
    def test_negative_preactivation(self, v):
        assert abs(leaky_relu(-v) - (-0.2 * v)) <= 1e-12 * v
        h = np.array([[-v]])
        e = gat_logits(h, np.eye(1), np.array([1.0, 0.0]), np.ones((1, 1), bool))
        assert abs(e[0, 0] + 0.2 * v) <= 1e-12 * v

    def test_off_edge_zero(self):
        h = np.ones((2, 1))
        e = gat_logits(h, np.eye(1), np.array([1.0, 1.0]), np.eye(2, dtype=bool))
        assert e[0, 1] == 0.0 and e[0, 0] == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            gat_logits(np.ones((2, 3)), np.eye(2), np.zeros(4), np.ones((2, 2), bool))


class TestSoftmax:
    def test_hand_case(self):
        alpha = attention_softmax(np.array([[1.0, 0.0]]), np.ones((1, 2), bool))
        assert abs(alpha[0, 0] - 0.7311) < 1e-4 and abs(alpha[0, 1] - 0.2689) < 1e-4
        assert abs(alpha[0, 0] - 1 / (1 + np.exp(-1.0))) < TOL

    @given(st.floats(-50, 50))
    def test_single_neighbor(self, e):
        alpha = attention_softmax(np.array([[e, 7.0]]), np.array([[True, False]]))
        assert alpha.tolist() == [[1.0, 0.0]]

    def test_symmetric(self):
        alpha = attention_softmax(np.zeros((1, 2)), np.ones((1, 2), bool))
        assert np.allclose(alpha, 0.5, atol=TOL)

    def test_large_logits_stable(self):
        alpha = attention_softmax(np.array([[1000.0, 999.0]]), np.ones((1, 2), bool))
        assert np.isfinite(alpha).all() and abs(alpha[0, 0] - 0.7310585786) < 1e-9

    def test_empty_neighborhood(self):
        with pytest.raises(EmptyNeighborhood):
            attention_softmax(np.zeros((2, 2)), np.array([[True, False], [False, False]]))

    def test_invalid_row_may_be_empty(self):
        A = np.array([[True, False], [False, False]])
        alpha = attention_softmax(np.zeros((2, 2)), A, valid=np.array([True, False]))
        assert alpha.tolist() == [[1.0, 0.0], [0.0, 0.0]]

    @settings(max_examples=50)
    @given(st.integers(0, 2**31), st.floats(-30, 30))
    def test_shift_invariance(self, seed, c):
        rng = np.random.default_rng(seed)
        A = rng.random((5, 5)) < 0.5
        A[np.arange(5), np.arange(5)] = True
        e = rng.normal(size=(5, 5))
        shifted = e.copy()
        shifted[2] += c
        np.testing.assert_allclose(attention_softmax(shifted, A), attention_softmax(e, A), atol=TOL)


class TestAggregate:
    def test_self_loop_only_is_linear(self):
        rng = np.random.default_rng(1)
        h, W = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
        out = gat_aggregate(h, np.eye(3), W, activation="identity")
        np.testing.assert_allclose(out, h @ W.T, atol=TOL)

    def test_uniform_over_identical_neighbors(self):
        h = np.array([[1.0, -2.0], [1.0, -2.0]])
        W = np.array([[1.0, 1.0], [2.0, 0.5]])
        out = gat_aggregate(h, np.full((2, 2), 0.5), W)
        np.testing.assert_allclose(out[0], np.maximum(W @ h[0], 0), atol=TOL)

    def test_path_graph_brute_force(self):
        h = np.array([[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]])
        alpha = np.array([[0.6, 0.4, 0.0], [0.2, 0.5, 0.3], [0.0, 0.9, 0.1]])
        out = gat_aggregate(h, alpha, np.eye(2), activation="identity")
        for i in range(3):
            for c in range(2):
                expected = sum(alpha[i][j] * h[j][c] for j in range(3))
                assert abs(out[i, c] - expected) < TOL


class TestGcn:
    def test_identity_adjacency(self):
        rng = np.random.default_rng(2)
        h, W = rng.normal(size=(4, 3)), rng.normal(size=(5, 3))
        out = gcn_layer(h, W, np.eye(4, dtype=bool), activation="identity")
        np.testing.assert_allclose(out, np.maximum(h @ W.T, 0), atol=TOL)

    def test_zero_input(self):
        assert not gcn_layer(np.zeros((3, 2)), np.ones((4, 2)), np.ones((3, 3), bool)).any()

    def test_complete_pair(self):
        h = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = gcn_layer(h, np.eye(2), np.ones((2, 2), bool))
        assert out.tolist() == [[4.0, 6.0], [4.0, 6.0]]

    def test_normalized(self):
        A = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=bool)
        h = np.eye(3)
        out = gcn_layer(h, np.eye(3), A, activation="identity", normalize=True)
        deg = A.sum(axis=1)
        for i in range(3):
            for j in range(3):
                expected = A[i, j] / np.sqrt(deg[i] * deg[j])
                assert abs(out[i, j] - expected) < TOL

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            gcn_layer(np.ones((2, 2)), np.ones((2, 3)), np.ones((2, 2), bool))


class TestReadout:
    def test_single_valid(self):
        h = np.array([[1.0, 2.0], [9.0, 9.0]])
        pooled, logit = readout(h, np.array([True, False]), np.array([1.0, 1.0]), np.array([0.5]))
        assert pooled.tolist() == [1.0, 2.0] and logit == 3.5

    def test_cancellation(self):
        h = np.array([[1.5, -2.0], [-1.5, 2.0]])
        assert not masked_mean(h, np.array([True, True])).any()

    def test_random_brute_force(self):
        rng = np.random.default_rng(3)
        h = rng.normal(size=(8, 4))
        valid = np.array([1, 1, 0, 1, 1, 1, 0, 0], dtype=bool)
        pooled = masked_mean(h, valid)
        for c in range(4):
            col = [h[i][c] for i in range(8) if valid[i]]
            assert abs(pooled[c] - sum(col) / len(col)) < TOL

    def test_empty_graph(self):
        assert not masked_mean(np.ones((3, 2)), np.zeros(3, bool)).any()


class TestForward:
    def test_zero_params(self):
        rng = np.random.default_rng(0)
        specs, params = model(rng, 4, 3)
        for arr in [p for _, p in params.named()]:
            arr[...] = 0
        g = random_graph_tensors(rng, 5, 8)
        assert forward(g, params, specs).probability == 0.5

    def test_single_node_degenerate(self):
        rng = np.random.default_rng(4)
        specs, params = model(rng, 3, 2, depth=1)
        g = random_graph_tensors(rng, 1, 1)
        trace = forward(g, params, specs)
        h = g.features(params.embedding)
        np.testing.assert_allclose(trace.activations[1], np.maximum(h @ params.W[0][0].T, 0), atol=TOL)
        assert trace.attention[0].alpha.tolist() == [[1.0]]

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        specs, params = model(rng, 4, 4)
        g = random_graph_tensors(rng, 6, 8)
        a, b = forward(g, params, specs), forward(g, params, specs)
        assert a.logit == b.logit
        assert all(np.array_equal(x, y) for x, y in zip(a.activations, b.activations))

    @pytest.mark.parametrize("seed", range(20))
    def test_row_stochastic_and_mask_hygiene(self, seed):
        rng = np.random.default_rng(seed)
        specs, params = model(rng, 4, 3, heads=2)
        n = int(rng.integers(1, 8))
        g = random_graph_tensors(rng, n, 8)
        trace = forward(g, params, specs)
        for rec in trace.attention:
            sums = rec.alpha[g.valid].sum(axis=1)
            assert np.all(np.abs(sums - 1) <= 1e-6)
            assert np.all(rec.alpha[~rec.mask] == 0.0)
            assert np.all((rec.alpha >= 0) & (rec.alpha <= 1))
        for h in trace.activations[1:]:
            assert not h[~g.valid].any()
        assert 0 < trace.probability < 1

    def test_self_loop_only_gat_layer(self):
        rng = np.random.default_rng(6)
        specs, params = model(rng, 3, 2, depth=1)
        g = random_graph_tensors(rng, 4, 4, density=0.0)
        trace = forward(g, params, specs)
        h = g.features(params.embedding)
        np.testing.assert_array_equal(trace.activations[1], np.maximum(h @ params.W[0][0].T, 0))

    def test_shape_mismatch(self):
        rng = np.random.default_rng(7)
        specs, params = model(rng, 4, 3)
        params.embedding = params.embedding[:, :3]
        with pytest.raises(ShapeMismatch):
            forward(random_graph_tensors(rng, 3, 4), params, specs)


class TestBackward:
    def test_zero_upstream(self):
        rng = np.random.default_rng(0)
        specs, params = model(rng, 4, 3)
        g = random_graph_tensors(rng, 5, 6)
        grads = backward(forward(g, params, specs), g, params, specs, 0.0)
        assert all(not grads[name].any() for name, _ in params.named())

    @pytest.mark.parametrize("seed", range(6))
    def test_gat_finite_differences(self, seed):
        rng = np.random.default_rng(100 + seed)
        specs, params = model(rng, 4, 3, activation="leaky_relu")
        g = random_graph_tensors(rng, 6, 7)
        assert max_grad_error(g, params, specs) < 1e-4

    @pytest.mark.parametrize("seed", range(4))
    def test_multi_head_finite_differences(self, seed):
        rng = np.random.default_rng(200 + seed)
        specs, params = model(rng, 3, 2, heads=3)
        g = random_graph_tensors(rng, 5, 6)
        assert max_grad_error(g, params, specs) < 1e-4

    @pytest.mark.parametrize("normalize", [False, True])
    def test_gcn_finite_differences(self, normalize):
        rng = np.random.default_rng(300 + normalize)
        specs, params = model(rng, 4, 3, kind="GCN", activation="leaky_relu", normalize=normalize)
        g = random_graph_tensors(rng, 6, 7)
        assert max_grad_error(g, params, specs) < 1e-4

    def test_pad_row_gradient_zero(self):
        rng = np.random.default_rng(8)
        specs, params = model(rng, 4, 3)
        g = random_graph_tensors(rng, 5, 6)
        # route some pooling mass through PAD so its raw gradient would be nonzero
        g.pool = g.pool.tolil()
        g.pool[0, PAD] = 0.5
        g.pool = g.pool.tocsr()
        grads = backward(forward(g, params, specs), g, params, specs, 1.0)
        assert not grads["embedding"][PAD].any()
        assert grads["embedding"][1:].any()


class TestParams:
    def test_checkpoint_round_trip(self):
        rng = np.random.default_rng(9)
        specs, params = model(rng, 4, 3, heads=2)
        text = json.dumps(params.to_dict())
        back = ModelParams.from_dict(json.loads(text), specs)
        for (n1, a1), (n2, a2) in zip(params.named(), back.named()):
            assert n1 == n2 and np.max(np.abs(a1 - a2)) <= 1e-12

    def test_gcn_has_no_attention_vector(self):
        specs, params = model(np.random.default_rng(0), 4, 3, kind="GCN")
        assert params.a == [None, None]
        assert "layer0.a" not in dict(params.named())

    def test_check_params_rejects_bad_shape(self):
        specs, params = model(np.random.default_rng(0), 4, 3)
        params.W[1] = params.W[1][:, :, :2]
        with pytest.raises(ShapeMismatch):
            check_params(params, specs)

    def test_glorot_bounds(self):
        specs, params = model(np.random.default_rng(0), 64, 64)
        limit = np.sqrt(6 / 128)
        assert np.abs(params.W[0]).max() <= limit and not params.readout_b.any()
