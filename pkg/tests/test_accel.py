"""The numba kernels and their plain-numpy fallback give the same numbers."""
import json
import os
import subprocess
import sys

import pytest

SCRIPT = r"""
import json
import numpy as np
from marginnet import _accel
from marginnet.dataset import SplitDataset
from marginnet.milp import LP, solve_lp
from marginnet.net import MLP, TrainConfig, train
from marginnet.sampling import Hypercube, label, sample_grid

rng = np.random.default_rng(0)
net = MLP.create((16, 16), seed=1)
net.theta += 0.05 * rng.normal(size=net.theta.size)
X, y, G = rng.normal(size=(50, 4)), rng.normal(size=50), rng.normal(size=(50, 4))
ly, lj, g = net.objective_terms(X, y, G, 0.1, with_grad=True)
ds = SplitDataset.create(label(sample_grid(Hypercube(), 3)), 0)
m = MLP.create((8,), seed=2)
rep = train(m, ds.view(), TrainConfig(epochs=30))
A, b, c = rng.normal(size=(6, 4)), rng.normal(size=6) + 1, rng.normal(size=4)
r = solve_lp(LP(c, A, b, lb=-np.ones(4), ub=np.ones(4)))
print(json.dumps({"enabled": _accel.ENABLED, "fwd": net.forward(X).tolist(),
                  "jac": net.input_jacobian(X).ravel().tolist(), "ly": ly, "lj": lj, "grad": g.tolist(),
                  "val": rep.val_ly.tolist(), "lp": [r.status, r.fun, r.x.tolist()]}))
"""


def run(disable):
    env = dict(os.environ, MARGINNET_DISABLE_NUMBA=disable)
    out = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def test_paths_agree():
    fast, plain = run("0"), run("1")
    assert not plain["enabled"]
    if not fast["enabled"]:
        pytest.skip("numba not importable")
    for k in ("fwd", "jac", "grad", "val"):
        a, b = fast[k], plain[k]
        assert len(a) == len(b)
        assert max(abs(x - y) for x, y in zip(a, b)) <= 1e-10 * max(1.0, max(abs(v) for v in b)), k
    assert fast["ly"] == pytest.approx(plain["ly"], rel=1e-12)
    assert fast["lj"] == pytest.approx(plain["lj"], rel=1e-12)
    assert fast["lp"][0] == plain["lp"][0] and fast["lp"][1] == pytest.approx(plain["lp"][1], abs=1e-12)
