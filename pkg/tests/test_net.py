import numpy as np
import pytest

from rumnet.net import (
    DenseNetwork,
    GradientBuffer,
    NetworkSpec,
    init_network,
    max_node_l1,
)
from oracles import assert_grads_close, fd_gradient, replay_dense_forward


def random_net(depth, width, din, dout, seed, scale=0.8):
    rng = np.random.default_rng(seed)
    spec = NetworkSpec(din, dout, depth, width)
    layers = [(rng.normal(0, scale, size=(o, i)), rng.normal(0, scale, size=o))
              for o, i in spec.layer_dims()]
    return DenseNetwork(spec, layers)


def trained_like_net(depth, width, din, dout, seed):
    # fan-balanced weights keep |f| near 1 so finite differences stay informative
    rng = np.random.default_rng(seed)
    net = init_network(NetworkSpec(din, dout, depth, width), rng)
    for _, b in net.layers:
        b += rng.normal(0, 0.1, size=b.shape)
    return net


class TestSpec:
    def test_depth_zero_is_single_affine(self):
        spec = NetworkSpec(3, 2, depth=0, width=0)
        assert spec.layer_dims() == [(2, 3)]

    def test_width_required_with_depth(self):
        with pytest.raises(ValueError, match="width"):
            NetworkSpec(3, 2, depth=1, width=0)

    def test_unknown_activation(self):
        with pytest.raises(ValueError, match="activation"):
            NetworkSpec(3, 2, activation="tanh")


class TestForward:
    def test_identity_affine(self):
        net = DenseNetwork(NetworkSpec(2, 2), [(np.eye(2), np.zeros(2))])
        assert np.array_equal(net.forward(np.array([1.0, -2.0])), [1.0, -2.0])

    def test_single_unit_elu(self):
        net = DenseNetwork(
            NetworkSpec(1, 1, depth=1, width=1),
            [(np.ones((1, 1)), np.zeros(1)), (np.ones((1, 1)), np.zeros(1))],
        )
        out = net.forward(np.array([-1.0]))
        assert out[0] == pytest.approx(np.exp(-1.0) - 1.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_straight_line_replay(self, seed):
        net = random_net(2, 4, 3, 2, seed)
        x = np.random.default_rng(100 + seed).normal(size=3)
        expected = replay_dense_forward(net.layers, net.spec.activation, x)
        np.testing.assert_allclose(net.forward(x), expected, rtol=0, atol=1e-12)

    def test_dim_mismatch_error(self):
        net = random_net(1, 3, 4, 2, 0)
        with pytest.raises(ValueError, match="expected 4, got 3"):
            net.forward(np.zeros(3))

    def test_pure_function(self):
        net = random_net(2, 5, 3, 2, 7)
        x = np.random.default_rng(1).normal(size=3)
        a = net.forward(x)
        b = net.forward(x)
        assert np.array_equal(a, b)

    def test_elu_continuity_at_kink(self):
        # pre-activation of the hidden unit equals the input itself
        net = DenseNetwork(
            NetworkSpec(1, 1, depth=1, width=1),
            [(np.ones((1, 1)), np.zeros(1)), (np.ones((1, 1)), np.zeros(1))],
        )
        lo = net.forward(np.array([-1e-9]))[0]
        hi = net.forward(np.array([1e-9]))[0]
        assert abs(hi - lo) <= 1e-7

    def test_batched_rows_match_single(self):
        net = random_net(2, 4, 3, 2, 11)
        X = np.random.default_rng(2).normal(size=(6, 3))
        batch = net.forward(X)
        for i in range(6):
            # batched BLAS and single-row matvec may differ in rounding order
            np.testing.assert_allclose(batch[i], net.forward(X[i]), rtol=1e-14, atol=1e-15)


class TestBackward:
    def test_affine_chain_rule(self):
        net = DenseNetwork(NetworkSpec(2, 2), [(np.eye(2), np.zeros(2))])
        x = np.array([3.0, -1.0])
        _, cache = net.forward_with_cache(x)
        grads = GradientBuffer.for_network(net)
        dx = net.backward(cache, np.array([1.0, 0.0]), grads)
        np.testing.assert_array_equal(dx, [1.0, 0.0])
        np.testing.assert_array_equal(grads.layers[0][0], np.outer([1.0, 0.0], x))
        np.testing.assert_array_equal(grads.layers[0][1], [1.0, 0.0])

    def test_zero_upstream_gives_zero_grads(self):
        net = random_net(2, 4, 3, 2, 3)
        _, cache = net.forward_with_cache(np.ones(3))
        grads = GradientBuffer.for_network(net)
        dx = net.backward(cache, np.zeros(2), grads)
        assert not dx.any()
        assert not any(gw.any() or gb.any() for gw, gb in grads.layers)

    @pytest.mark.parametrize("depth,width", [(0, 0), (1, 3), (2, 5), (3, 10)])
    def test_gradcheck_grid(self, depth, width):
        for draw in range(20):
            net = trained_like_net(depth, width, 4, 2, seed=1000 * depth + 10 * width + draw)
            x = np.random.default_rng(draw).normal(size=4)
            up = np.random.default_rng(500 + draw).normal(size=2)

            def loss():
                return float(net.forward(x) @ up)

            grads = GradientBuffer.for_network(net)
            _, cache = net.forward_with_cache(x)
            net.backward(cache, up, grads)
            numeric = fd_gradient(loss, net.param_arrays())
            assert_grads_close(grads.arrays(), numeric)

    def test_input_gradient_matches_fd(self):
        net = random_net(2, 5, 3, 2, 17)
        x = np.random.default_rng(9).normal(size=3)
        up = np.array([0.7, -1.3])
        _, cache = net.forward_with_cache(x)
        dx = net.backward(cache, up, GradientBuffer.for_network(net))

        def loss():
            return float(net.forward(x) @ up)

        numeric = fd_gradient(loss, [x])
        assert_grads_close([dx], numeric)

    def test_upstream_dim_mismatch(self):
        net = random_net(1, 3, 4, 2, 0)
        _, cache = net.forward_with_cache(np.zeros(4))
        with pytest.raises(ValueError, match="upstream"):
            net.backward(cache, np.zeros(3), GradientBuffer.for_network(net))


class TestInit:
    def test_same_seed_identical(self):
        spec = NetworkSpec(4, 2, depth=2, width=5)
        a = init_network(spec, np.random.default_rng(42))
        b = init_network(spec, np.random.default_rng(42))
        for (wa, ba), (wb, bb) in zip(a.layers, b.layers):
            assert np.array_equal(wa, wb) and np.array_equal(ba, bb)

    def test_biases_zero(self):
        net = init_network(NetworkSpec(4, 2, depth=2, width=5), np.random.default_rng(0))
        assert all(not b.any() for _, b in net.layers)

    def test_uniform_mean_within_3_se(self):
        # depth 0, 3x3: bound sqrt(6/6) = 1, variance of U(-1,1) is 1/3
        spec = NetworkSpec(3, 3)
        rng = np.random.default_rng(123)
        draws = np.concatenate([init_network(spec, rng).layers[0][0].ravel()
                                for _ in range(1200)])  # 10800 >= 1e4 samples
        se = np.sqrt(1.0 / 3.0 / draws.size)
        assert abs(draws.mean()) <= 3 * se

    def test_bound_scales_with_fan(self):
        net = init_network(NetworkSpec(10, 6, depth=1, width=8), np.random.default_rng(1))
        w0, _ = net.layers[0]
        assert np.abs(w0).max() <= np.sqrt(6.0 / (10 + 8))


class TestMaxNodeL1:
    def test_identity(self):
        net = DenseNetwork(NetworkSpec(2, 2), [(np.eye(2), np.zeros(2))])
        assert max_node_l1(net) == 1.0

    def test_single_row_with_bias(self):
        net = DenseNetwork(NetworkSpec(2, 1), [(np.array([[0.5, -0.25]]), np.array([0.25]))])
        assert max_node_l1(net) == pytest.approx(1.0, abs=1e-15)

    def test_matches_row_scan(self):
        net = random_net(3, 6, 4, 2, 21)
        best = 0.0
        for w, b in net.layers:
            for r in range(w.shape[0]):
                best = max(best, sum(abs(v) for v in w[r]) + abs(b[r]))
        assert max_node_l1(net) == pytest.approx(best, rel=1e-15)


class TestZeroWidthEdges:
    def test_input_dim_zero_is_trainable_constant(self):
        net = init_network(NetworkSpec(0, 3, depth=1, width=2), np.random.default_rng(5))
        out = net.forward(np.zeros((4, 0)))
        assert out.shape == (4, 3)
        assert np.array_equal(out[0], out[1])

    def test_output_dim_zero_emits_empty(self):
        net = init_network(NetworkSpec(3, 0), np.random.default_rng(5))
        assert net.forward(np.ones(3)).shape == (0,)
