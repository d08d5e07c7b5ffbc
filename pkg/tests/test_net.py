import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from marginnet.dataset import Standardizer
from marginnet.errors import TrainingError
from marginnet.net import MLP, TrainConfig, init_params, loss, train

rng0 = np.random.default_rng(0)


def ref_forward(net, X):
    """Plain-numpy forward, written independently of the kernels."""
    z = np.atleast_2d(X)
    Ls = net.layers()
    for W, b in Ls[:-1]:
        z = np.maximum(z @ W.T + b, 0.0)
    W, b = Ls[-1]
    return (z @ W.T + b)[:, 0]


def relu_margin(net, X):
    """Smallest |pre-activation| over hidden neurons, per point."""
    z = np.atleast_2d(X)
    m = np.full(len(z), np.inf)
    for W, b in net.layers()[:-1]:
        zh = z @ W.T + b
        m = np.minimum(m, np.abs(zh).min(axis=1))
        z = np.maximum(zh, 0)
    return m


class TestForward:
    def test_identity_slice(self):
        net = MLP.from_layers([np.array([[1.0, 0, 0, 0]])], [np.zeros(1)])
        X = rng0.normal(size=(5, 4))
        assert np.allclose(net.forward(X), X[:, 0])

    def test_absolute_value(self):
        net = MLP.from_layers([np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]]), np.array([[1.0, 1.0]])],
                              [np.zeros(2), np.zeros(1)])
        X = rng0.normal(size=(20, 4))
        assert np.allclose(net.forward(X), np.abs(X[:, 0]))

    def test_matches_reference(self):
        net = MLP.create((16, 8, 4), seed=2)
        net.theta += 0.1 * rng0.normal(size=net.theta.size)  # non-zero biases
        X = rng0.normal(size=(100, 4))
        assert np.allclose(net.forward(X), ref_forward(net, X), atol=1e-13)
        assert net.forward(X[0]) == pytest.approx(ref_forward(net, X[0])[0])

    def test_non_finite_input(self):
        net = MLP.create((4,), seed=0)
        with pytest.raises(FloatingPointError):
            net.forward(np.array([np.nan, 0, 0, 0]))

    def test_piecewise_affine(self):
        net = MLP.create((16, 16), seed=4)
        net.theta += 0.05 * rng0.normal(size=net.theta.size)
        for _ in range(20):
            x = rng0.normal(size=4)
            d = rng0.normal(size=4) * 1e-6
            if relu_margin(net, x) < 1e-3:
                continue
            f0, f1, f2 = net.forward(np.array([x - d, x, x + d]))
            assert abs((f0 + f2) / 2 - f1) < 1e-12


class TestJacobian:
    def test_affine(self):
        w = np.array([[0.3, -1.2, 2.0, 0.5]])
        net = MLP.from_layers([w], [np.array([0.7])])
        assert np.allclose(net.input_jacobian(rng0.normal(size=(3, 4))), np.tile(w, (3, 1)))

    def test_dead_region(self):
        net = MLP.from_layers([-np.ones((3, 4)), np.ones((1, 3))], [-np.ones(3), np.zeros(1)])
        assert np.all(net.input_jacobian(np.ones((2, 4))) == 0)

    def test_fd(self):
        net = MLP.create((32, 32, 32), seed=1)
        net.theta += 0.05 * rng0.normal(size=net.theta.size)
        X = rng0.normal(size=(100, 4))
        J = net.input_jacobian(X)
        h = 1e-5
        checked = 0
        for x, j in zip(X, J):
            if relu_margin(net, x) < 1e-3:
                continue
            fd = np.array([(net.forward(x + h * e) - net.forward(x - h * e)) / (2 * h) for e in np.eye(4)])
            assert np.max(np.abs(fd - j)) <= 1e-5 * max(np.max(np.abs(fd)), 1e-3)
            checked += 1
        assert checked >= 80


class TestLoss:
    def test_perfect(self):
        net = MLP.from_layers([np.array([[1.0, 2.0, 0, 0]])], [np.zeros(1)])
        X = rng0.normal(size=(7, 4))
        G = np.tile([1.0, 2.0, 0, 0], (7, 1))
        assert loss(net, X, net.forward(X), G) == (0.0, 0.0)

    def test_single_sample(self):
        net = MLP.from_layers([np.array([[1.0, 0, 0, 0]])], [np.array([2.0])])
        X = np.zeros((1, 4))
        ly, lj = loss(net, X, np.zeros(1), np.array([[1.0, 0, 0, 0]]))
        assert (ly, lj) == (4.0, 0.0)

    def test_squared_jacobian_error(self):
        net = MLP.from_layers([np.array([[1.0, 0, 0, 0]])], [np.zeros(1)])
        X = np.zeros((2, 4))
        G = np.array([[1.0, 0, 0, 0], [1.0, 3.0, 0, 0]])
        assert loss(net, X, np.zeros(2), G)[1] == pytest.approx(4.5)

    def test_alpha_zero_is_ly(self):
        net = MLP.create((8,), seed=0)
        X, y, G = rng0.normal(size=(10, 4)), rng0.normal(size=10), rng0.normal(size=(10, 4))
        ly, _, _ = net.objective_terms(X, y, G, 0.0)
        ly2, _ = loss(net, X, y, G)
        assert ly == ly2

    def test_empty(self):
        with pytest.raises(ValueError):
            loss(MLP.create((4,), seed=0), np.empty((0, 4)), np.empty(0))

    @pytest.mark.parametrize("alpha_j", [0.0, 0.1])
    def test_parameter_gradient_fd(self, alpha_j):
        X, y, G = rng0.normal(size=(30, 4)), rng0.normal(size=30), rng0.normal(size=(30, 4))
        Gk = G if alpha_j else np.zeros((0, 4))
        for s in range(20):
            net = MLP.create((8, 8), seed=s)
            net.theta += 0.05 * np.random.default_rng(s).normal(size=net.theta.size)
            if relu_margin(net, X).min() < 1e-4:
                continue
            _, _, g = net.objective_terms(X, y, Gk, alpha_j, with_grad=True)

            def obj(theta):
                m = MLP(net.widths, theta)
                ly, lj, _ = m.objective_terms(X, y, Gk, alpha_j)
                return ly + alpha_j * lj

            h = 1e-6
            fd = np.empty_like(g)
            for i in range(g.size):
                e = np.zeros_like(g)
                e[i] = h
                fd[i] = (obj(net.theta + e) - obj(net.theta - e)) / (2 * h)
            assert np.max(np.abs(fd - g)) <= 1e-4 * max(np.max(np.abs(fd)), 1e-6)


class TestInit:
    def test_deterministic_and_zero_bias(self):
        a, b = init_params((4, 16, 1), 3), init_params((4, 16, 1), 3)
        assert np.array_equal(a, b)
        net = MLP((4, 16, 1), a)
        assert all(np.all(bias == 0) for _, bias in net.layers())

    def test_variance(self):
        net = MLP((64, 64, 1), init_params((64, 64, 1), 0))
        W, _ = net.layer(1)
        target = (2 * math.sqrt(6 / 128)) ** 2 / 12
        assert abs(W.var() / target - 1) < 0.1
        assert np.abs(W).max() <= math.sqrt(6 / 128)

    def test_bad_widths(self):
        with pytest.raises(ValueError):
            init_params((4,), 0)


class TestTrain:
    def test_schedule(self):
        cfg = TrainConfig(l0=0.02, gamma=0.99)
        assert cfg.learning_rate(0) == 0.02
        assert cfg.learning_rate(100) == pytest.approx(0.02 * 0.366, rel=1e-3)
        assert TrainConfig(gamma=1.0).learning_rate(2999) == 0.01

    @pytest.mark.parametrize("kw", [dict(l0=0), dict(gamma=0), dict(gamma=1.1), dict(alpha_j=-1)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)

    def test_checkpoint_and_determinism(self, grid_dataset):
        def run():
            net = MLP.create((16, 16), seed=1)
            return net, train(net, grid_dataset.view(), TrainConfig(epochs=300, seed=1))

        n1, r1 = run()
        n2, r2 = run()
        assert np.array_equal(r1.val_ly, r2.val_ly) and np.array_equal(r1.best_theta, r2.best_theta)
        assert r1.best_objective == r1.val_ly.min() <= r1.val_ly[-1]
        assert r1.val_ly[r1.best_epoch] == r1.best_objective
        assert np.all(np.isnan(r1.train_lj))  # alpha_J = 0 skips the Jacobian term
        assert np.array_equal(n1.theta, r1.final_theta)
        best = MLP(n1.widths, r1.best_theta)
        Xv, yv, _ = grid_dataset.view().standardized("val")
        assert loss(best, Xv, yv)[0] == pytest.approx(r1.best_objective, rel=1e-12)

    def test_jacobian_objective(self, grid_dataset):
        net = MLP.create((16,), seed=2)
        rep = train(net, grid_dataset.view(), TrainConfig(epochs=50, alpha_j=0.1))
        obj = rep.val_ly + 0.1 * rep.val_lj
        assert np.all(np.isfinite(rep.val_lj))
        assert rep.best_objective == pytest.approx(obj.min())

    def test_split_training(self, grid_dataset):
        net = MLP.create((8,), seed=0)
        cfg = TrainConfig(epochs=100)
        r1 = train(net, grid_dataset.view(), cfg, 0, 40)
        r2 = train(net, grid_dataset.view(), cfg, 40)
        assert len(r1.val_ly) == 40 and len(r2.val_ly) == 60 and r2.start_epoch == 40
        assert r2.best_epoch >= 40

    def test_divergence(self, grid_dataset):
        net = MLP.create((8,), seed=0)
        net.theta[:] = 1e200
        with pytest.raises(TrainingError) as exc:
            train(net, grid_dataset.view(), TrainConfig(epochs=5))
        assert exc.value.epoch == 0


class TestPersistence:
    def test_round_trip(self, tmp_path):
        std = Standardizer(np.arange(4.0), np.ones(4) * 2, 1.5, 3.0)
        net = MLP.create((5, 3), seed=0, standardizer=std)
        net.meta = {"seed": 0, "best_epoch": 7}
        net.save(tmp_path / "n.json")
        back = MLP.load(tmp_path / "n.json")
        assert np.array_equal(back.theta, net.theta) and back.widths == net.widths
        assert back.standardizer.to_dict() == std.to_dict() and back.meta == net.meta

    def test_predict_units(self):
        std = Standardizer(np.zeros(4), np.ones(4), 3.0, 2.0)
        net = MLP.from_layers([np.array([[1.0, 0, 0, 0]])], [np.zeros(1)], std)
        assert net.predict(np.array([[0.5, 0, 0, 0]]))[0] == pytest.approx(4.0)
        with pytest.raises(ValueError):
            MLP.create((2,), 0).predict(np.zeros((1, 4)))

    def test_shape_check(self):
        with pytest.raises(ValueError):
            MLP((4, 3, 1), np.zeros(5))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_forward_property(seed):
    net = MLP.create((6, 5), seed=seed)
    X = np.random.default_rng(seed).normal(size=(9, 4))
    assert np.allclose(net.forward(X), ref_forward(net, X), atol=1e-12)
