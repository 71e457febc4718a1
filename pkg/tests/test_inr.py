import math

import numpy as np
import pytest

from sympower import transforms as tf
from sympower.dataio import SyntheticKind, SyntheticSpec, bundled_image, coord_grid, generate, signal_coords
from sympower.errors import CorruptHeader, DivergenceDetected, ShapeMismatch
from sympower.inr import (Activation, NetworkConfig, TrainConfig, backward, forward, init_network,
                          load_checkpoint, loss_and_grads, save_checkpoint, state_from_bytes,
                          state_to_bytes, train)
from sympower.tensor import Signal

SMALL = dict(in_dim=2, out_dim=1, hidden_layers=2, width=16)


def finite_difference_worst(state, X, Y, h=1e-5):
    _, gw, gb = loss_and_grads(state, X, Y)
    worst = 0.0
    for params, grads in ((state.weights, gw), (state.biases, gb)):
        for p, g in zip(params, grads):
            for idx in np.ndindex(p.shape):
                old = p[idx]
                p[idx] = old + h
                up = loss_and_grads(state, X, Y)[0]
                p[idx] = old - h
                down = loss_and_grads(state, X, Y)[0]
                p[idx] = old
                fd = (up - down) / (2 * h)
                scale = max(abs(fd), abs(g[idx]))
                if scale > 1e-7:
                    worst = max(worst, abs(fd - g[idx]) / scale)
                else:
                    assert abs(fd - g[idx]) < 1e-9
    return worst


class TestInit:
    def test_deterministic(self):
        a = init_network(NetworkConfig(seed=3))
        b = init_network(NetworkConfig(seed=3))
        for x, y in zip(a.parameters(), b.parameters()):
            assert np.array_equal(x, y)

    def test_bounds(self):
        s = init_network(NetworkConfig(width=256, omega0=30.0, seed=1))
        bound = math.sqrt(6 / 256) / 30
        assert bound == pytest.approx(0.00510, abs=1e-5)
        assert np.abs(s.weights[1]).max() <= bound
        assert np.abs(s.weights[1]).max() > 0.95 * bound
        assert np.abs(s.weights[0]).max() <= 1 / 2
        assert all(np.all(b == 0) for b in s.biases)

    def test_finer_first_bias(self):
        s = init_network(NetworkConfig(activation=Activation.FINER, finer_bias_k=0.7, seed=2))
        assert 0.5 < np.abs(s.biases[0]).max() <= 0.7
        assert all(np.all(b == 0) for b in s.biases[1:])

    def test_first_layer_preactivation_std(self):
        # U(-1/c,1/c) weights times U(-1,1) coords: var = c * (1/(3c^2)) * (1/3)
        c = 2
        s = init_network(NetworkConfig(in_dim=c, width=256, seed=4))
        X = np.random.default_rng(0).uniform(-1, 1, (4000, c))
        pre = X @ s.weights[0].T
        assert pre.std() == pytest.approx(math.sqrt(1 / (9 * c)), rel=0.05)

    def test_invalid(self):
        with pytest.raises(ValueError):
            NetworkConfig(omega0=0)


class TestForward:
    def test_zero_weights(self):
        s = init_network(NetworkConfig(**SMALL))
        for W in s.weights:
            W[:] = 0
        s.biases[-1][:] = 0.25
        out = forward(s, coord_grid((5, 5)))
        np.testing.assert_array_equal(out, 0.25)

    def test_single_unit_closed_form(self):
        s = init_network(NetworkConfig(in_dim=1, out_dim=1, hidden_layers=1, width=1, omega0=3.0))
        s.weights[0][:] = 0.4
        s.biases[0][:] = -0.1
        s.weights[1][:] = 1.5
        s.biases[1][:] = 0.2
        x = np.linspace(-1, 1, 7)
        expected = 1.5 * np.sin(3.0 * (0.4 * x - 0.1)) + 0.2
        np.testing.assert_allclose(forward(s, x[:, None])[:, 0], expected, rtol=1e-14)

    def test_finer_matches_sine_near_zero(self):
        sine = init_network(NetworkConfig(**SMALL, seed=5))
        finer = init_network(NetworkConfig(**SMALL, seed=5, activation=Activation.FINER))
        finer.weights = [W.copy() for W in sine.weights]
        finer.biases = [b.copy() for b in sine.biases]
        X = np.random.default_rng(0).uniform(-1e-6, 1e-6, (20, 2))
        # (|x|+1)x differs from x by x^2 <= 1e-12 at first layer pre-activations
        np.testing.assert_allclose(forward(finer, X), forward(sine, X), atol=1e-9)

    def test_hidden_activations_bounded(self):
        for act in Activation:
            s = init_network(NetworkConfig(**SMALL, activation=act, seed=6))
            for W in s.weights:
                W *= 50
            X = np.random.default_rng(1).uniform(-10, 10, (100, 2))
            _, cache = forward(s, X, cache=True)
            assert all(np.abs(h).max() <= 1.0 for h in cache.inputs[1:])

    def test_shape_mismatch(self):
        s = init_network(NetworkConfig(**SMALL))
        with pytest.raises(ShapeMismatch):
            forward(s, np.zeros((4, 3)))


class TestBackward:
    def test_zero_gradient_at_targets(self):
        s = init_network(NetworkConfig(**SMALL, seed=2))
        X = coord_grid((4, 4))
        out, cache = forward(s, X, cache=True)
        loss, gw, gb = backward(s, cache, out)
        assert loss == 0.0
        assert all(np.all(g == 0) for g in gw + gb)

    @pytest.mark.parametrize("act", list(Activation))
    def test_finite_differences(self, act):
        s = init_network(NetworkConfig(**SMALL, activation=act, seed=7))
        rng = np.random.default_rng(3)
        X = rng.uniform(-1, 1, (40, 2))
        Y = rng.uniform(-1, 1, (40, 1))
        assert finite_difference_worst(s, X, Y) < 1e-4

    def test_finer_subgradient_at_zero(self):
        s = init_network(NetworkConfig(in_dim=1, out_dim=1, hidden_layers=1, width=1,
                                       activation=Activation.FINER, omega0=1.0))
        s.weights[0][:] = 0.0
        s.biases[0][:] = 0.0
        _, cache = forward(s, np.zeros((1, 1)), cache=True)
        assert cache.dact[0][0, 0] == 1.0


class TestTrain:
    def test_constant_signal(self):
        # a constant signal sym-power transforms to the midpoint 0 of [-1, 1]
        with pytest.warns(Warning):
            t, _ = tf.sym_power_forward(Signal(np.full((16, 16), 0.7), (16, 16)))
        X, Y = signal_coords(t)
        s = init_network(NetworkConfig(seed=0))
        rep = train(s, X, Y, TrainConfig(lr=1e-3, iterations=200, eval_every=50))
        assert rep.trace[-1][1] < 1e-8

    def test_gradient_image_fits(self):
        g = generate(SyntheticSpec(SyntheticKind.GRADIENT, (64, 64)))
        X, Y = signal_coords(g)
        s = init_network(NetworkConfig(hidden_layers=2, width=64, seed=0))
        rep = train(s, X, Y, TrainConfig(iterations=500, eval_every=250))
        assert rep.trace[-1][2] > 40.0

    def test_deterministic_and_trace_ordered(self):
        img = bundled_image("camera")
        X, Y = signal_coords(img)
        cfg = TrainConfig(iterations=30, eval_every=10, checkpoints=(5,))
        r1 = train(init_network(NetworkConfig(width=16, seed=1)), X, Y, cfg)
        r2 = train(init_network(NetworkConfig(width=16, seed=1)), X, Y, cfg)
        assert r1.trace == r2.trace
        its = [t[0] for t in r1.trace]
        assert its == [5, 10, 20, 30]
        assert r1.to_csv().splitlines()[0] == "iteration,loss,psnr"

    def test_loss_decreases_in_median(self):
        img = bundled_image("coffee")
        X, Y = signal_coords(img)
        at_k, at_2k = [], []
        for seed in range(5):
            rep = train(init_network(NetworkConfig(width=32, seed=seed)), X, Y,
                        TrainConfig(iterations=100, eval_every=50))
            at_k.append(rep.trace[0][1])
            at_2k.append(rep.trace[1][1])
        assert np.median(at_2k) < np.median(at_k)

    def test_divergence_is_reported(self):
        X = coord_grid((8, 8))
        Y = np.full((64, 1), 1e200)
        s = init_network(NetworkConfig(width=8))
        rep = train(s, X, Y, TrainConfig(iterations=5, eval_every=1))
        assert rep.diverged and rep.trace == []
        with pytest.raises(DivergenceDetected) as info:
            train(init_network(NetworkConfig(width=8)), X, Y, TrainConfig(iterations=5),
                  raise_on_divergence=True)
        assert info.value.report.diverged

    def test_evaluate_hook_sees_raw_output(self):
        X = coord_grid((8, 8))
        seen = []

        def evaluate(pred):
            seen.append(pred.shape)
            from sympower.metrics import QualityReport
            return QualityReport(mse=1.0, psnr=0.0)

        train(init_network(NetworkConfig(width=8)), X, np.zeros((8, 8)),
              TrainConfig(iterations=4, eval_every=2), evaluate=evaluate)
        assert seen == [(8, 8), (8, 8)]


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        s = init_network(NetworkConfig(**SMALL, activation=Activation.FINER, seed=9))
        s.step = 17
        save_checkpoint(s, tmp_path / "n.sptn")
        back = load_checkpoint(tmp_path / "n.sptn")
        assert back.config == s.config and back.step == 17
        X = coord_grid((6, 6))
        np.testing.assert_array_equal(forward(back, X), forward(s, X))

    def test_layout(self):
        s = init_network(NetworkConfig(**SMALL))
        buf = state_to_bytes(s)
        assert buf[:4] == b"SPTN"
        n = sum(W.size + b.size for W, b in zip(s.weights, s.biases))
        assert len(buf) == 4 + 4 * 4 + 1 + 8 * 2 + 8 * 2 + 8 * n

    def test_corrupt(self):
        with pytest.raises(CorruptHeader):
            state_from_bytes(state_to_bytes(init_network(NetworkConfig(**SMALL)))[:-8])
