"""Base designs over the operating hypercube and stability classes."""
import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle

ORIGINS = ("grid", "uniform", "lhc", "dw", "ni", "vi", "test")


@dataclass(frozen=True)
class Hypercube:
    lower: np.ndarray = field(default_factory=lambda: oracle.LOWER.copy())
    upper: np.ndarray = field(default_factory=lambda: oracle.UPPER.copy())

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("hypercube needs lower < upper component-wise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self):
        return self.lower.size

    @property
    def span(self):
        return self.upper - self.lower

    def to_unit(self, X):
        return (np.asarray(X, dtype=float) - self.lower) / self.span

    def from_unit(self, U):
        return self.lower + np.asarray(U, dtype=float) * self.span

    def contains(self, X, tol=1e-12):
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=-1)

    def corners(self):
        """The 2^d corners in unit coordinates, binary-counting order (last dim fastest)."""
        d = self.dim
        idx = np.arange(2 ** d)
        return ((idx[:, None] >> np.arange(d - 1, -1, -1)) & 1).astype(float)


class StabilityClass(enum.IntEnum):
    STABLE = 0
    MSTABLE = 1
    MARGINAL = 2
    MUNSTABLE = 3
    UNSTABLE = 4

    @property
    def label(self):
        return _CLASS_LABELS[self]


_CLASS_LABELS = {
    StabilityClass.STABLE: "Stable",
    StabilityClass.MSTABLE: "MStable",
    StabilityClass.MARGINAL: "Marginal",
    StabilityClass.MUNSTABLE: "MUnstable",
    StabilityClass.UNSTABLE: "Unstable",
}
CLASS_BY_LABEL = {v: k for k, v in _CLASS_LABELS.items()}


def classify(zeta):
    """Stability class of a damping ratio in percent.

    Stable > 6, MStable (3.25, 6], Marginal [2.75, 3.25], MUnstable (0, 2.75),
    Unstable <= 0.
    """
    z = float(zeta)
    if math.isnan(z):
        raise ValueError("cannot classify NaN damping")
    return StabilityClass(int(classify_array(np.array([z]))[0]))


def classify_array(zeta):
    z = np.asarray(zeta, dtype=float)
    if np.any(np.isnan(z)):
        raise ValueError("cannot classify NaN damping")
    out = np.full(z.shape, int(StabilityClass.STABLE), dtype=np.int64)
    out[z <= 6.0] = StabilityClass.MSTABLE
    out[z <= 3.25] = StabilityClass.MARGINAL
    out[z < 2.75] = StabilityClass.MUNSTABLE
    out[z <= 0.0] = StabilityClass.UNSTABLE
    return out


def sample_grid(h, n_per_dim):
    if n_per_dim < 2:
        raise ValueError("grid needs at least 2 points per dimension")
    axes = [np.linspace(lo, hi, n_per_dim) for lo, hi in zip(h.lower, h.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def sample_uniform(h, n, seed):
    rng = np.random.default_rng(seed)
    return h.from_unit(rng.random((n, h.dim)))


def sample_lhc(h, n, seed):
    """Latin hypercube: one point per stratum per dimension, random within stratum."""
    rng = np.random.default_rng(seed)
    if n == 0:
        return np.empty((0, h.dim))
    u = np.empty((n, h.dim))
    for j in range(h.dim):
        strata = rng.permutation(n)
        u[:, j] = (strata + rng.random(n)) / n
    return h.from_unit(u)


SAMPLERS = {"grid": sample_grid, "uniform": sample_uniform, "lhc": sample_lhc}


@dataclass(frozen=True)
class LabeledSample:
    x: np.ndarray
    zeta: float
    grad: np.ndarray
    cls: StabilityClass
    origin: str


@dataclass
class SampleSet:
    """Struct-of-arrays for labeled samples."""

    X: np.ndarray
    zeta: np.ndarray
    grad: np.ndarray
    cls: np.ndarray
    origin: np.ndarray

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float).reshape(-1, 4)
        self.zeta = np.asarray(self.zeta, dtype=float).reshape(-1)
        self.grad = np.asarray(self.grad, dtype=float).reshape(-1, 4)
        self.cls = np.asarray(self.cls, dtype=np.int64).reshape(-1)
        self.origin = np.asarray(self.origin, dtype=object).reshape(-1)
        n = len(self.X)
        if not (len(self.zeta) == len(self.grad) == len(self.cls) == len(self.origin) == n):
            raise ValueError("sample arrays differ in length")

    @classmethod
    def empty(cls):
        return cls(np.empty((0, 4)), np.empty(0), np.empty((0, 4)), np.empty(0, np.int64),
                   np.empty(0, object))

    def __len__(self):
        return len(self.zeta)

    def __getitem__(self, i):
        return LabeledSample(self.X[i].copy(), float(self.zeta[i]), self.grad[i].copy(),
                             StabilityClass(int(self.cls[i])), str(self.origin[i]))

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def subset(self, idx):
        idx = np.asarray(idx)
        return SampleSet(self.X[idx], self.zeta[idx], self.grad[idx], self.cls[idx], self.origin[idx])

    def concat(self, other):
        return SampleSet(np.vstack([self.X, other.X]), np.concatenate([self.zeta, other.zeta]),
                         np.vstack([self.grad, other.grad]), np.concatenate([self.cls, other.cls]),
                         np.concatenate([self.origin, other.origin]))

    def equals(self, other):
        return (len(self) == len(other)
                and np.array_equal(self.X, other.X)
                and np.array_equal(self.zeta, other.zeta)
                and np.array_equal(self.grad, other.grad)
                and np.array_equal(self.cls, other.cls)
                and list(self.origin) == list(other.origin))


def label(points, origin="grid"):
    if origin not in ORIGINS:
        raise ValueError(f"unknown origin tag {origin!r}")
    points = np.asarray(points, dtype=float).reshape(-1, 4)
    if len(points) == 0:
        return SampleSet.empty()
    zeta, grad, _, _, _ = oracle.min_damping_batch(points)
    return SampleSet(points.copy(), zeta, grad, classify_array(zeta),
                     np.full(len(points), origin, dtype=object))
