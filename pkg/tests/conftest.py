import numpy as np
import pytest

from marginnet.dataset import SplitDataset, Standardizer
from marginnet.net import MLP, TrainConfig, train
from marginnet.sampling import Hypercube, label, sample_grid


def affine_net(w, b, mu_y=0.0, sigma_y=1.0, hidden=None):
    """Net whose unit-box prediction is ``w . u + b`` percent (through ReLU pairs if ``hidden``).

    The standardizer maps physical x to u = (x - lower) / span so standardized
    inputs are unit-box coordinates.
    """
    cube = Hypercube()
    std = Standardizer(cube.lower.copy(), cube.span.copy(), mu_y, sigma_y)
    w = np.asarray(w, float) / sigma_y
    b = (b - mu_y) / sigma_y
    if hidden is None:
        return MLP.from_layers([w.reshape(1, 4)], [np.array([b])], std, cube)
    # z = relu(w.u + b) - relu(-(w.u + b)) reproduces the affine map
    W1 = np.vstack([w, -w])
    b1 = np.array([b, -b])
    return MLP.from_layers([W1, np.array([[1.0, -1.0]])], [b1, np.zeros(1)], std, cube)


def constant_net(value):
    return affine_net(np.zeros(4), value)


@pytest.fixture(scope="session")
def grid5():
    return label(sample_grid(Hypercube(), 5), "grid")


@pytest.fixture(scope="session")
def grid_dataset(grid5):
    return SplitDataset.create(grid5, 11)


@pytest.fixture(scope="session")
def trained_net(grid_dataset):
    """3x32 net trained for the full 3000 epochs on the 5^4 grid (about 2 s)."""
    net = MLP.create((32, 32, 32), seed=3)
    rep = train(net, grid_dataset.view(), TrainConfig(epochs=3000, seed=3))
    return MLP(net.widths, rep.best_theta, grid_dataset.standardizer, net.cube)


@pytest.fixture(scope="session")
def small_net(grid_dataset):
    """2x8 net, small enough for exhaustive activation-pattern enumeration."""
    net = MLP.create((8, 8), seed=5)
    rep = train(net, grid_dataset.view(), TrainConfig(epochs=1500, seed=5))
    return MLP(net.widths, rep.best_theta, grid_dataset.standardizer, net.cube)


# acceptance criteria report: one line per criterion at the end of the run
ACCEPTANCE = {}


def record_criterion(n, ok, detail):
    ACCEPTANCE[n] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
