import copy
import math
from dataclasses import replace

import numpy as np
import pytest

import helpers as H
import perreg as pr
from perreg.nn import (ACTIVATIONS, DenseLayer, Network, TrainConfig,
                       TrainingDiverged, backward, forward, gradient_arrays,
                       init_network, init_velocity, sgd_step,
                       softmax_cross_entropy, train_epoch, trainable_arrays)
from perreg.per import RegConfig
from perreg.special_fns import RngStream


def _separable_data(n=200, d=4, seed=13):
    gen = RngStream(seed).generator()
    half = n // 2
    x = gen.normal(0.0, 0.5, (n, d))
    x[:half] += 2.0
    x[half:] -= 2.0
    y = np.array([0] * half + [1] * (n - half))
    return x, y


class TestInit:
    def test_degenerate_specs(self):
        with pytest.raises(ValueError):
            init_network([4, 0, 2], "relu")
        with pytest.raises(ValueError):
            init_network([4, 2], "relu")  # no hidden layer
        with pytest.raises(ValueError):
            init_network([4, 3, 2], "relu", init="magic")

    def test_golden_parameters(self):
        net = init_network([3, 4, 2], "relu", "he", RngStream(42))
        want = np.array([0.9056571267032261, -0.8789461059674449,
                         1.03990182151895])
        assert np.array_equal(net.layers[0].weights[0], want)
        assert np.all(net.layers[0].bias == 0.0)
        assert net.layers[0].activation == "relu"
        assert net.layers[1].activation == "identity"

    def test_he_variance(self):
        net = init_network([256, 256, 2], "relu", "he", RngStream(1))
        var = net.layers[0].weights.var()
        assert abs(var - 2.0 / 256) <= 0.2 * (2.0 / 256)

    def test_glorot_bound(self):
        net = init_network([100, 50, 2], "relu", "glorot", RngStream(2))
        bound = math.sqrt(6.0 / 150)
        assert np.max(np.abs(net.layers[0].weights)) <= bound


class TestForward:
    def test_zero_network_zero_logits(self):
        layers = [DenseLayer(np.zeros((3, 2)), np.zeros(3), "identity"),
                  DenseLayer(np.zeros((2, 3)), np.zeros(2), "identity")]
        net = Network(layers)
        logits, acts, _ = forward(net, np.ones((4, 2)))
        assert np.all(logits == 0.0)
        assert len(acts) == 2

    def test_relu_identity_weights(self):
        layers = [DenseLayer(np.eye(2), np.zeros(2), "relu"),
                  DenseLayer(np.eye(2), np.zeros(2), "identity")]
        net = Network(layers)
        _, acts, _ = forward(net, np.array([[-1.0, 2.0]]))
        assert np.array_equal(acts[0].values, np.array([[0.0, 2.0]]))

    def test_depth_two_composition(self):
        net = init_network([3, 5, 4, 2], "elu", "he", RngStream(3))
        x = RngStream(4).generator().normal(0, 1, (6, 3))
        logits, acts, _ = forward(net, x)
        h1 = ACTIVATIONS["elu"][0](x @ net.layers[0].weights.T
                                   + net.layers[0].bias)
        h2 = ACTIVATIONS["elu"][0](h1 @ net.layers[1].weights.T
                                   + net.layers[1].bias)
        out = h2 @ net.layers[2].weights.T + net.layers[2].bias
        assert np.allclose(acts[1].values, h2, atol=0)
        assert np.allclose(logits, out, atol=0)

    def test_shape_validation(self):
        net = init_network([3, 4, 2], "relu")
        with pytest.raises(ValueError):
            forward(net, np.ones((2, 5)))


class TestSoftmaxHead:
    def test_uniform_logits(self):
        loss, grad = softmax_cross_entropy(np.zeros((5, 4)),
                                           np.array([0, 1, 2, 3, 0]))
        assert loss == pytest.approx(math.log(4.0), abs=1e-14)
        assert np.allclose(grad.sum(axis=1), 0.0, atol=1e-16)

    def test_gradient_matches_fd(self):
        gen = np.random.default_rng(0)
        logits = gen.normal(0, 2, (3, 4))
        y = np.array([1, 3, 0])
        _, grad = softmax_cross_entropy(logits, y)
        fd = H.grad_check(lambda: softmax_cross_entropy(logits, y)[0],
                          [logits])[0]
        assert H.rel_error([grad], [fd]) <= 1e-8


class TestBackward:
    def test_plain_network_fd(self):
        assert H.full_network_rel_error("leaky_relu", "none", seed=5) <= 1e-6

    def test_per_frozen_slices_fd(self):
        assert H.full_network_rel_error("elu", "per", seed=6) <= 1e-5

    def test_lambda_zero_matches_none_bitwise(self):
        rng = RngStream(9)
        net = init_network([3, 6, 4], "relu", "he", rng.substream(0))
        gen = rng.substream(1).generator()
        x = gen.normal(0, 1, (4, 3))
        y = gen.integers(0, 4, 4)
        _, _, cache = forward(net, x)
        g_none = backward(net, cache, y, RegConfig(method="none"))
        g_per0 = backward(net, cache, y,
                          RegConfig(method="per", lam=0.0,
                                    seed=rng.substream(2)))
        for a, b in zip(gradient_arrays(g_none), gradient_arrays(g_per0)):
            assert np.array_equal(a, b)


class TestSgdStep:
    def test_plain_step(self):
        p = np.array([1.0, 2.0])
        g = np.array([0.25, -0.5])
        cfg = TrainConfig(lr=1.0, momentum=0.0)
        sgd_step([p], [g.copy()], cfg, init_velocity([p]))
        assert np.array_equal(p, np.array([0.75, 2.5]))

    def test_global_norm_clipping(self):
        p = np.zeros(4)
        g = np.full(4, 5.0)  # norm 10
        cfg = TrainConfig(lr=1.0, momentum=0.0, grad_clip_norm=1.0)
        sgd_step([p], [g], cfg, init_velocity([p]))
        assert abs(np.linalg.norm(p) - 1.0) <= 1e-12

    def test_two_step_momentum_recurrence(self):
        p = np.array([0.0])
        g1, g2 = np.array([1.0]), np.array([2.0])
        cfg = TrainConfig(lr=0.1, momentum=0.9)
        v = init_velocity([p])
        sgd_step([p], [g1], cfg, v)
        sgd_step([p], [g2], cfg, v)
        # v1 = g1; v2 = 0.9 v1 + g2; p = -lr (v1 + v2)
        assert p[0] == pytest.approx(-0.1 * (1.0 + 0.9 + 2.0), abs=1e-15)

    def test_velocity_shapes(self):
        net = init_network([2, 3, 2], "relu")
        params = trainable_arrays(net)
        vel = init_velocity(params)
        assert all(v.shape == p.shape for v, p in zip(vel, params))


def _train_once(method, lam, epochs=8, seed=21):
    x, y = _separable_data()
    rng = RngStream(seed)
    net = init_network([x.shape[1], 16, 2], "leaky_relu", "he",
                       rng.substream(0))
    bn_states = None
    if method == "bn":
        bn_states = [pr.BnState.create(16), None]
    cfg = TrainConfig(lr=0.05, momentum=0.9, epochs=epochs, batch_size=32,
                      reg=RegConfig(method=method, lam=lam, slices=32,
                                    seed=rng.substream(1)),
                      seed=rng.substream(2))
    velocity = init_velocity(trainable_arrays(net, bn_states))
    for epoch in range(epochs):
        train_epoch(net, x, y, cfg, velocity, bn_states, epoch)
    return net, bn_states


class TestTraining:
    def test_determinism_bitwise(self):
        net_a, _ = _train_once("per", 1e-4)
        net_b, _ = _train_once("per", 1e-4)
        for la, lb in zip(net_a.layers, net_b.layers):
            assert np.array_equal(la.weights, lb.weights)
            assert np.array_equal(la.bias, lb.bias)

    def test_loss_decreases_for_all_methods(self):
        x, y = _separable_data()
        for method in ("none", "per", "l1", "l2", "bn"):
            lam = 0.0 if method in ("none", "bn") else 3e-4
            rng = RngStream(33)
            net = init_network([x.shape[1], 16, 2], "leaky_relu", "he",
                               rng.substream(0))
            bn_states = [pr.BnState.create(16), None] if method == "bn" else None
            cfg = TrainConfig(lr=0.05, momentum=0.9, epochs=50, batch_size=32,
                              reg=RegConfig(method=method, lam=lam, slices=32,
                                            seed=rng.substream(1)),
                              seed=rng.substream(2))
            logits, _, _ = forward(net, x, bn_states, training=False)
            initial, _ = softmax_cross_entropy(logits, y)
            velocity = init_velocity(trainable_arrays(net, bn_states))
            for epoch in range(50):
                train_epoch(net, x, y, cfg, velocity, bn_states, epoch)
            logits, _, _ = forward(net, x, bn_states, training=False)
            final, _ = softmax_cross_entropy(logits, y)
            assert final < 0.1 * initial, (method, initial, final)

    def test_divergence_raises(self):
        x, y = _separable_data(n=64)
        net = init_network([x.shape[1], 8, 2], "relu", "he", RngStream(1))
        cfg = TrainConfig(lr=1e9, momentum=0.0, epochs=5, batch_size=16)
        velocity = init_velocity(trainable_arrays(net))
        with pytest.raises(TrainingDiverged):
            for epoch in range(5):
                train_epoch(net, x, y, cfg, velocity, None, epoch)

    def test_trailing_singleton_batch_skipped(self):
        x, y = _separable_data(n=33)
        net = init_network([x.shape[1], 8, 2], "relu", "he", RngStream(2))
        cfg = TrainConfig(lr=0.01, momentum=0.0, epochs=1, batch_size=16,
                          reg=RegConfig(method="bn"))
        bn_states = [pr.BnState.create(8), None]
        velocity = init_velocity(trainable_arrays(net, bn_states))
        train_epoch(net, x, y, cfg, velocity, bn_states, 0)  # must not raise
