"""Feed-forward ReLU surrogate: parameters, training, persistence."""
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _netkernels as K
from .dataset import Standardizer
from .errors import TrainingError
from .sampling import Hypercube

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
_NO_GRAD = np.zeros((0, 4))


def init_params(widths, seed):
    """Glorot-uniform weights, zero biases."""
    widths = [int(w) for w in widths]
    if len(widths) < 2 or min(widths) < 1:
        raise ValueError(f"invalid widths {widths}")
    rng = np.random.default_rng(seed)
    parts = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        limit = math.sqrt(6.0 / (n_in + n_out))
        parts.append(rng.uniform(-limit, limit, size=n_out * n_in))
        parts.append(np.zeros(n_out))
    return np.concatenate(parts)


@dataclass
class MLP:
    widths: tuple
    theta: np.ndarray
    standardizer: Standardizer = None
    cube: Hypercube = field(default_factory=Hypercube)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        self._w = np.array(self.widths, dtype=np.int64)
        self._off = K.layer_offsets(self._w)
        self.theta = np.ascontiguousarray(self.theta, dtype=float)
        if self.theta.size != self._off[0]:
            raise ValueError(f"expected {self._off[0]} parameters, got {self.theta.size}")

    @classmethod
    def create(cls, hidden, seed, standardizer=None, cube=None, n_in=4):
        widths = (n_in, *hidden, 1)
        return cls(widths, init_params(widths, seed), standardizer, cube or Hypercube())

    @classmethod
    def from_layers(cls, weights, biases, standardizer=None, cube=None):
        widths = [np.asarray(weights[0]).shape[1]] + [np.asarray(W).shape[0] for W in weights]
        theta = np.concatenate([np.concatenate([np.asarray(W, float).ravel(), np.asarray(b, float).ravel()])
                                for W, b in zip(weights, biases)])
        return cls(tuple(widths), theta, standardizer, cube or Hypercube())

    @property
    def n_layers(self):
        return len(self.widths) - 1

    @property
    def n_params(self):
        return int(self._off[0])

    def layer(self, l):
        """(W_l, b_l) as views into ``theta``; ``l`` runs 1..n_layers."""
        return K._layer(self.theta, self._w, self._off, l)

    def layers(self):
        return [self.layer(l) for l in range(1, self.n_layers + 1)]

    def copy(self):
        return MLP(self.widths, self.theta.copy(), self.standardizer, self.cube, dict(self.meta))

    # standardized space

    def forward(self, Xs):
        Xs = np.asarray(Xs, dtype=float)
        single = Xs.ndim == 1
        Xs = np.atleast_2d(Xs)
        if not np.all(np.isfinite(Xs)):
            raise FloatingPointError("non-finite network input")
        y = K.forward_kernel(self.theta, self._w, self._off, np.ascontiguousarray(Xs))
        return float(y[0]) if single else y

    def input_jacobian(self, Xs):
        Xs = np.asarray(Xs, dtype=float)
        single = Xs.ndim == 1
        _, J = K.jacobian_kernel(self.theta, self._w, self._off, np.ascontiguousarray(np.atleast_2d(Xs)))
        return J[0] if single else J

    def objective_terms(self, Xs, ys, Gs=None, alpha_j=0.0, with_grad=False):
        Xs = np.ascontiguousarray(np.atleast_2d(Xs), dtype=float)
        if Xs.shape[0] == 0:
            raise ValueError("loss of an empty batch")
        G = _NO_GRAD if Gs is None else np.ascontiguousarray(Gs, dtype=float)
        return K.objective_kernel(self.theta, self._w, self._off, Xs,
                                  np.ascontiguousarray(ys, dtype=float), G, float(alpha_j), with_grad)

    # physical units

    def predict(self, X, chunk=200_000):
        """Denormalized prediction (percent) at physical operating points."""
        std = self._require_std()
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        for s in range(0, len(X), chunk):
            out[s:s + chunk] = self.forward(std.x_to_std(X[s:s + chunk]))
        return std.y_from_std(out)

    def predict_unit(self, U, chunk=200_000):
        return self.predict(self.cube.from_unit(np.atleast_2d(U)), chunk)

    def _require_std(self):
        if self.standardizer is None:
            raise ValueError("network has no standardizer attached")
        return self.standardizer

    # persistence

    def to_dict(self):
        return {
            "widths": list(self.widths),
            "weights": [W.tolist() for W, _ in self.layers()],
            "biases": [b.tolist() for _, b in self.layers()],
            "standardizer": self.standardizer.to_dict() if self.standardizer else None,
            "hypercube": {"lower": self.cube.lower.tolist(), "upper": self.cube.upper.tolist()},
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d):
        std = Standardizer.from_dict(d["standardizer"]) if d.get("standardizer") else None
        cube = Hypercube(np.array(d["hypercube"]["lower"]), np.array(d["hypercube"]["upper"]))
        net = cls.from_layers(d["weights"], d["biases"], std, cube)
        if tuple(d["widths"]) != net.widths:
            raise ValueError("widths disagree with weight shapes")
        net.meta = dict(d.get("meta", {}))
        return net

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def loss(net, Xs, ys, Gs=None):
    """(L_y, L_J) on a standardized batch; L_J is 0 without target gradients."""
    ly, lj, _ = net.objective_terms(Xs, ys, Gs, alpha_j=0.0)
    return float(ly), float(lj)


@dataclass(frozen=True)
class TrainConfig:
    l0: float = 0.01
    gamma: float = 0.999
    epochs: int = 3000
    alpha_j: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.l0 <= 0 or not 0 < self.gamma <= 1 or self.alpha_j < 0:
            raise ValueError(f"invalid training config {self}")

    def learning_rate(self, epoch):
        return self.l0 * self.gamma ** epoch


@dataclass
class TrainReport:
    train_ly: np.ndarray
    train_lj: np.ndarray
    val_ly: np.ndarray
    val_lj: np.ndarray
    start_epoch: int
    best_epoch: int
    best_objective: float
    best_theta: np.ndarray
    final_theta: np.ndarray
    alpha_j: float

    @property
    def val_objective(self):
        if self.alpha_j == 0.0:
            return self.val_ly.copy()
        return self.val_ly + self.alpha_j * self.val_lj

    def summary(self):
        return {"start_epoch": self.start_epoch, "best_epoch": self.best_epoch,
                "best_val_objective": self.best_objective,
                "final_val_objective": float(self.val_objective[-1]) if len(self.val_ly) else None}


def train(net, view, cfg, start_epoch=0, stop_epoch=None):
    """Full-batch Adam with an exponentially decaying rate.

    Runs epochs ``start_epoch .. stop_epoch-1`` (default ``cfg.epochs``) and
    updates ``net.theta`` in place to the last iterate.  The returned report
    carries the parameters with the lowest validation objective seen in
    this call; Adam moments start from zero on every call.
    """
    stop_epoch = cfg.epochs if stop_epoch is None else stop_epoch
    net.standardizer = view.standardizer
    Xt, yt, Gt = view.standardized("train")
    Xv, yv, Gv = view.standardized("val")
    Xt, yt, Gt, Xv, yv, Gv = (np.ascontiguousarray(a) for a in (Xt, yt, Gt, Xv, yv, Gv))
    aj = float(cfg.alpha_j)
    if aj == 0.0:  # Jacobian path skipped entirely; L_J recorded as NaN
        Gt = Gv = _NO_GRAD
    n = max(stop_epoch - start_epoch, 0)
    hist = {k: np.empty(n) for k in ("tly", "tlj", "vly", "vlj")}
    m = np.zeros_like(net.theta)
    v = np.zeros_like(net.theta)
    best = (math.inf, start_epoch, net.theta.copy())
    w, off = net._w, net._off
    for i, epoch in enumerate(range(start_epoch, stop_epoch)):
        ly, lj, g = K.objective_kernel(net.theta, w, off, Xt, yt, Gt, aj, True)
        if not (math.isfinite(ly) and math.isfinite(lj) and np.all(np.isfinite(g))):
            raise TrainingError(epoch)
        t = i + 1
        m = ADAM_BETA1 * m + (1 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1 - ADAM_BETA2) * g * g
        step = cfg.learning_rate(epoch) * (m / (1 - ADAM_BETA1 ** t)) / (np.sqrt(v / (1 - ADAM_BETA2 ** t)) + ADAM_EPS)
        net.theta -= step
        vly, vlj, _ = K.objective_kernel(net.theta, w, off, Xv, yv, Gv, aj, False)
        obj = vly + aj * vlj
        if not math.isfinite(obj):
            raise TrainingError(epoch, "non-finite validation loss")
        if aj == 0.0:
            lj = vlj = math.nan
        hist["tly"][i], hist["tlj"][i], hist["vly"][i], hist["vlj"][i] = ly, lj, vly, vlj
        if obj < best[0]:
            best = (obj, epoch, net.theta.copy())
    return TrainReport(hist["tly"], hist["tlj"], hist["vly"], hist["vlj"], start_epoch,
                       best[1], best[0], best[2], net.theta.copy(), aj)


def config_dict(cfg):
    return asdict(cfg)
