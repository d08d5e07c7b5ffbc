"""Train/validation container, standardization and on-disk formats.

The test split lives in a :class:`Vault`; everything that trains, enriches
or selects models receives a :class:`TrainingView`, which has no handle on
the vault.
"""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateDataError
from .sampling import CLASS_BY_LABEL, Hypercube, SampleSet, StabilityClass
from .seeds import derive_seed

CSV_HEADER = ["x1", "x2", "x3", "x4", "zeta", "g1", "g2", "g3", "g4", "class", "origin"]
TRAIN_FRACTION = 0.8


@dataclass(frozen=True)
class Standardizer:
    mu_x: np.ndarray
    sigma_x: np.ndarray
    mu_y: float
    sigma_y: float

    def x_to_std(self, X):
        return (np.asarray(X, dtype=float) - self.mu_x) / self.sigma_x

    def x_from_std(self, Xs):
        return np.asarray(Xs, dtype=float) * self.sigma_x + self.mu_x

    def y_to_std(self, y):
        return (np.asarray(y, dtype=float) - self.mu_y) / self.sigma_y

    def y_from_std(self, ys):
        return np.asarray(ys, dtype=float) * self.sigma_y + self.mu_y

    def to_dict(self):
        return {"mu_x": [float(v) for v in self.mu_x], "sigma_x": [float(v) for v in self.sigma_x],
                "mu_y": float(self.mu_y), "sigma_y": float(self.sigma_y)}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mu_x"], dtype=float), np.array(d["sigma_x"], dtype=float),
                   float(d["mu_y"]), float(d["sigma_y"]))


def transform_gradient(grad_raw, std):
    """Chain rule for the standardized map: dy_std/dx_std = dy/dx * sigma_x / sigma_y."""
    return np.asarray(grad_raw, dtype=float) * std.sigma_x / std.sigma_y


def fit_standardizer(train):
    """Mean and population standard deviation of the training inputs and outputs."""
    X = train.X if isinstance(train, SampleSet) else np.asarray(train[0])
    y = train.zeta if isinstance(train, SampleSet) else np.asarray(train[1])
    if len(y) == 0:
        raise DegenerateDataError("cannot standardize an empty training set")
    sx = X.std(axis=0)
    sy = float(y.std())
    if np.any(sx <= 0) or sy <= 0:
        raise DegenerateDataError("a training coordinate has zero variance")
    return Standardizer(X.mean(axis=0), sx, float(y.mean()), sy)


def split(samples, seed):
    """Seeded shuffle; the first floor(80%) go to train. Returns index arrays."""
    n = len(samples)
    if n < 5:
        raise ValueError(f"need at least 5 samples to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(TRAIN_FRACTION * n))
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


def class_histogram(samples):
    """Counts and shares per stability class, keyed by class label."""
    cls = samples.cls if isinstance(samples, SampleSet) else np.asarray(samples, dtype=np.int64)
    counts = np.bincount(cls, minlength=len(StabilityClass)) if len(cls) else np.zeros(5, int)
    n = counts.sum()
    shares = counts / n if n else np.zeros(len(counts))
    return {c.label: (int(counts[c]), float(shares[c])) for c in StabilityClass}


class Vault:
    """Sealed test split. Only final assessment opens it."""

    def __init__(self, samples):
        self._samples = samples
        self.open_count = 0

    def __len__(self):
        return len(self._samples)

    def open_for_assessment(self):
        self.open_count += 1
        return self._samples


@dataclass(frozen=True)
class TrainingView:
    """What training, enrichment and model selection may see."""

    train: SampleSet
    val: SampleSet
    standardizer: Standardizer

    def standardized(self, part):
        s = self.train if part == "train" else self.val
        std = self.standardizer
        return std.x_to_std(s.X), std.y_to_std(s.zeta), transform_gradient(s.grad, std)


@dataclass
class SplitDataset:
    pool: SampleSet  # train + val, in insertion order
    train_idx: np.ndarray
    val_idx: np.ndarray
    split_seed: int
    standardizer: Standardizer
    vault: Vault = None
    meta: dict = field(default_factory=dict)
    n_enrichments: int = 0

    @classmethod
    def create(cls, samples, split_seed, vault=None, meta=None):
        tr, va = split(samples, split_seed)
        return cls(samples, tr, va, split_seed, fit_standardizer(samples.subset(tr)), vault,
                   dict(meta or {}))

    @property
    def train(self):
        return self.pool.subset(self.train_idx)

    @property
    def val(self):
        return self.pool.subset(self.val_idx)

    def __len__(self):
        return len(self.pool)

    def view(self):
        return TrainingView(self.train, self.val, self.standardizer)

    def enrich(self, new_samples):
        """Append labeled samples, split them 80/20, refit the standardizer."""
        k = self.n_enrichments + 1
        base = len(self.pool)
        pool = self.pool.concat(new_samples)
        tr, va = self.train_idx, self.val_idx
        n_new = len(new_samples)
        if n_new:
            perm = np.random.default_rng(derive_seed(self.split_seed, "enrich", k)).permutation(n_new)
            n_train = int(np.floor(TRAIN_FRACTION * n_new))
            tr = np.concatenate([tr, base + np.sort(perm[:n_train])])
            va = np.concatenate([va, base + np.sort(perm[n_train:])])
        std = fit_standardizer(pool.subset(tr))
        return SplitDataset(pool, tr, va, self.split_seed, std, self.vault, dict(self.meta), k)

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        write_samples_csv(os.path.join(directory, "samples.csv"), self.pool)
        side = {
            "split_seed": int(self.split_seed),
            "n_enrichments": int(self.n_enrichments),
            "train_idx": [int(i) for i in self.train_idx],
            "val_idx": [int(i) for i in self.val_idx],
            "standardizer": self.standardizer.to_dict(),
            **self.meta,
        }
        with open(os.path.join(directory, "dataset.json"), "w") as fh:
            json.dump(side, fh, indent=1, sort_keys=True)

    @classmethod
    def load(cls, directory, vault=None):
        pool = read_samples_csv(os.path.join(directory, "samples.csv"))
        with open(os.path.join(directory, "dataset.json")) as fh:
            side = json.load(fh)
        meta = {k: v for k, v in side.items()
                if k not in ("split_seed", "n_enrichments", "train_idx", "val_idx", "standardizer")}
        return cls(pool, np.array(side["train_idx"], dtype=np.int64), np.array(side["val_idx"], dtype=np.int64),
                   side["split_seed"], Standardizer.from_dict(side["standardizer"]), vault, meta,
                   side["n_enrichments"])


def hypercube_meta(cube):
    return {"lower": [float(v) for v in cube.lower], "upper": [float(v) for v in cube.upper]}


def cube_from_meta(meta):
    return Hypercube(np.array(meta["lower"]), np.array(meta["upper"]))


def write_samples_csv(path, samples):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_HEADER)
        for i in range(len(samples)):
            row = [repr(float(v)) for v in samples.X[i]]
            row.append(repr(float(samples.zeta[i])))
            row.extend(repr(float(v)) for v in samples.grad[i])
            row.append(StabilityClass(int(samples.cls[i])).label)
            row.append(str(samples.origin[i]))
            w.writerow(row)


def read_samples_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != CSV_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[:1]}")
    rows = rows[1:]
    if not rows:
        return SampleSet.empty()
    num = np.array([[float(v) for v in r[:9]] for r in rows])
    cls = [int(CLASS_BY_LABEL[r[9]]) for r in rows]
    origin = [r[10] for r in rows]
    return SampleSet(num[:, :4], num[:, 4], num[:, 5:9], cls, origin)
