"""Experiment configuration, variant training, model selection and assessment.

Seeds follow the path ``master -> stage -> run -> draw`` (see
:mod:`marginnet.seeds`):

    sample              base design (uniform / LHC)
    split               train/validation shuffle
    select/<cell>/<k>   k-th selection run of grid cell <cell>
    assess/<k>          k-th assessment run
    <run>/init          network initialization of a run
    <run>/ni, <run>/vi  enrichment pools of a run
"""
import configparser
import csv
import hashlib
import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import SplitDataset, Vault, class_histogram
from .errors import TrainingError
from .loops import EnrichConfig, ni_enrich, vi_enrich
from .net import MLP, TrainConfig, train
from .sampling import SAMPLERS, Hypercube, StabilityClass, label, sample_grid
from .seeds import derive_seed
from .walks import WalkConfig, enrich_dw

VARIANTS = ("base", "dw", "ni", "vi", "pr")
CLASS_LABELS = tuple(c.label for c in StabilityClass)

# Allowed hyper-parameter options; the desk-scale default grid is one cell of them.
FULL_GRID = {
    "hidden_layers": (2, 3, 4),
    "width": (16, 32, 64),
    "l0": (0.005, 0.01, 0.02, 0.05),
    "gamma": (0.99, 0.995, 0.999, 1.0),
    "alpha_j": (0.0, 0.001, 0.01, 0.1, 1.0),
    "delta": (0.25, 3.0),
}
DESK_GRID = {"hidden_layers": (3,), "width": (32,), "l0": (0.01,), "gamma": (0.999,),
             "alpha_j": (0.0,), "delta": (0.25,)}


@dataclass(frozen=True)
class HyperParams:
    hidden_layers: int = 3
    width: int = 32
    l0: float = 0.01
    gamma: float = 0.999
    alpha_j: float = 0.0
    delta: float = 0.25

    @property
    def hidden(self):
        return (self.width,) * self.hidden_layers

    def n_params(self, n_in=4):
        widths = (n_in, *self.hidden, 1)
        return sum(a * b + b for a, b in zip(widths[:-1], widths[1:]))

    def tie_key(self):
        """Fewer parameters first (smaller K, then smaller N_k), then lexicographic."""
        return (self.n_params(), self.hidden_layers, self.width, self.l0, self.gamma, self.alpha_j,
                self.delta)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    sampler: str = "grid"
    size: int = 5  # points per dimension for grid, point count otherwise
    variant: str = "base"
    test_grid_per_dim: int = 11
    selection_seeds: int = 10
    assessment_seeds: int = 100
    epochs: int = 3000
    grid: dict = field(default_factory=lambda: dict(DESK_GRID))
    enrich: EnrichConfig = field(default_factory=EnrichConfig)
    walk: WalkConfig = field(default_factory=WalkConfig)
    node_limit: int = 1_000_000
    verify_delta: float = 0.25
    embed_resolution: int = 41
    droop_query: tuple = ((1.0, 0.0), (37.5, 25.0))  # (fixed power pair, droop anchor)
    power_query: tuple = ((37.5, 25.0), (1.0, 0.0))  # (fixed droop pair, power anchor)
    compare_seeds: int = 100
    compare_n_max: int = 1_000_000
    compare_per_decade: int = 4

    def __post_init__(self):
        if self.sampler not in SAMPLERS:
            raise ValueError(f"unknown sampler {self.sampler!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        for k, vals in self.grid.items():
            if k not in FULL_GRID:
                raise ValueError(f"unknown grid key {k!r}")
            bad = [v for v in vals if v not in FULL_GRID[k]]
            if bad or not vals:
                raise ValueError(f"grid {k} values {bad or vals} are not allowed options")
        if self.selection_seeds < 1 or self.assessment_seeds < 1:
            raise ValueError("need at least one selection and one assessment seed")
        if self.test_grid_per_dim < 2:
            raise ValueError("test grid needs at least 2 points per dimension")

    def cells(self):
        """Grid cells in a fixed order; alpha_j is pinned to 0 unless the variant is pr,
        and delta only varies for NI/VI."""
        g = dict(self.grid)
        if self.variant != "pr":
            g["alpha_j"] = (0.0,)
        if self.variant not in ("ni", "vi"):
            g["delta"] = (g["delta"][0],)
        keys = list(FULL_GRID)
        return [HyperParams(*vals) for vals in itertools.product(*(g[k] for k in keys))]

    def to_dict(self):
        d = asdict(self)
        d["grid"] = {k: list(v) for k, v in self.grid.items()}
        return d

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, default=list).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _floats(text):
    return tuple(float(v) for v in text.replace(",", " ").split())


def _ints(text):
    return tuple(int(v) for v in text.replace(",", " ").split())


def load_config(path=None, seed=None, overrides=None):
    """Read an INI file (sections: experiment, grid, train, enrich, walk, verify,
    embed, compare).  Missing keys keep their defaults."""
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)

    def get(section, key, conv, default):
        if cp.has_option(section, key):
            return conv(cp.get(section, key))
        return default

    base = ExperimentConfig()
    scale = get("experiment", "scale", str.strip, "desk")
    if scale not in ("desk", "full"):
        raise ValueError("scale must be 'desk' or 'full'")
    grid = dict(FULL_GRID if scale == "full" else DESK_GRID)
    for k in FULL_GRID:
        conv = _ints if k in ("hidden_layers", "width") else _floats
        if cp.has_option("grid", k):
            grid[k] = conv(cp.get("grid", k))
    e = base.enrich
    enrich = EnrichConfig(
        pool_size=get("enrich", "pool_size", int, e.pool_size),
        n_samples=get("enrich", "n_samples", int, e.n_samples),
        delta=grid["delta"][0],
        interrupt_epoch=get("enrich", "interrupt_epoch", int, e.interrupt_epoch),
    )
    w = base.walk
    walk = WalkConfig(
        trigger_halfwidth=get("walk", "trigger_halfwidth", float, w.trigger_halfwidth),
        target_halfwidth=get("walk", "target_halfwidth", float, w.target_halfwidth),
        alpha0=get("walk", "alpha0", float, w.alpha0),
        max_iters=get("walk", "max_iters", int, w.max_iters),
    )

    def pair(section, key, default):
        return tuple(_floats(cp.get(section, key))) if cp.has_option(section, key) else default

    cfg = ExperimentConfig(
        seed=get("experiment", "seed", int, base.seed),
        sampler=get("experiment", "sampler", str.strip, base.sampler),
        size=get("experiment", "size", int, base.size),
        variant=get("experiment", "variant", str.strip, base.variant),
        test_grid_per_dim=get("experiment", "test_grid_per_dim", int, 21 if scale == "full" else 11),
        selection_seeds=get("experiment", "selection_seeds", int, base.selection_seeds),
        assessment_seeds=get("experiment", "assessment_seeds", int, base.assessment_seeds),
        epochs=get("train", "epochs", int, base.epochs),
        grid=grid,
        enrich=enrich,
        walk=walk,
        node_limit=get("verify", "node_limit", int, base.node_limit),
        verify_delta=get("verify", "delta", float, base.verify_delta),
        embed_resolution=get("embed", "resolution", int, base.embed_resolution),
        droop_query=(pair("embed", "droop_fixed", base.droop_query[0]),
                     pair("embed", "droop_anchor", base.droop_query[1])),
        power_query=(pair("embed", "power_fixed", base.power_query[0]),
                     pair("embed", "power_anchor", base.power_query[1])),
        compare_seeds=get("compare", "n_seeds", int, base.compare_seeds),
        compare_n_max=get("compare", "n_max", int, base.compare_n_max),
        compare_per_decade=get("compare", "per_decade", int, base.compare_per_decade),
    )
    if seed is not None:
        cfg = replace(cfg, seed=int(seed))
    if overrides:
        cfg = replace(cfg, **overrides)
    return cfg


# data


def base_samples(cfg, cube=None):
    cube = cube or Hypercube()
    if cfg.sampler == "grid":
        X = sample_grid(cube, cfg.size)
    else:
        X = SAMPLERS[cfg.sampler](cube, cfg.size, derive_seed(cfg.seed, "sample"))
    return label(X, origin=cfg.sampler)


def build_test_set(per_dim, cube=None):
    """Oracle-labeled ``per_dim**4`` grid, sealed in a vault."""
    if per_dim < 2:
        raise ValueError("test grid needs at least 2 points per dimension")
    return Vault(label(sample_grid(cube or Hypercube(), per_dim), origin="test"))


def base_dataset(cfg, vault=None, cube=None):
    """Split base design; the DW variant adds its walk termini before any training."""
    samples = base_samples(cfg, cube)
    ds = SplitDataset.create(samples, derive_seed(cfg.seed, "split"), vault,
                             meta={"sampler": cfg.sampler, "size": cfg.size})
    # assessment MSEs of every variant are scaled by this base-split sigma
    ds.meta["base_sigma_y"] = float(ds.standardizer.sigma_y)
    walk_info = None
    if cfg.variant == "dw":
        dw, results = enrich_dw(ds.pool, cfg.walk, cube)
        statuses = {}
        for r in results:
            statuses[r.status] = statuses.get(r.status, 0) + 1
        walk_info = {"n_walks": len(results), "statuses": dict(sorted(statuses.items())),
                     "n_added": len(dw), "results": results}
        ds = ds.enrich(dw)
    return ds, walk_info


# one training run


@dataclass
class RunResult:
    seed: int
    net: MLP  # best-validation parameters with the standardizer they were trained under
    val_objective: float
    reports: list
    dataset: SplitDataset
    enrichment: dict = None
    diverged: bool = False
    error: str = ""


def train_run(cfg, ds, hp, run_seed):
    """Train one network for the configured variant; NI/VI interrupt and enrich.

    After an enrichment the optimizer restarts and best-checkpoint tracking
    restarts too, since the refitted standardizer changes the loss scale.
    """
    tcfg = TrainConfig(l0=hp.l0, gamma=hp.gamma, epochs=cfg.epochs, alpha_j=hp.alpha_j, seed=run_seed)
    net = MLP.create(hp.hidden, derive_seed(run_seed, "init"), ds.standardizer)
    try:
        if cfg.variant in ("ni", "vi"):
            stop = min(cfg.enrich.interrupt_epoch, cfg.epochs)
            r1 = train(net, ds.view(), tcfg, 0, stop)
            ecfg = replace(cfg.enrich, delta=hp.delta, seed=derive_seed(run_seed, cfg.variant))
            if cfg.variant == "ni":
                batch = ni_enrich(net, ecfg)
            else:
                batch = vi_enrich(net, ecfg, node_limit=cfg.node_limit)
            ds = ds.enrich(batch.samples)
            r2 = train(net, ds.view(), tcfg, stop, cfg.epochs)
            reports = [r1, r2]
            enrichment = batch.summary()
        else:
            reports = [train(net, ds.view(), tcfg)]
            enrichment = None
    except TrainingError as exc:
        return RunResult(run_seed, net, math.inf, [], ds, None, True, str(exc))
    last = reports[-1]
    best = MLP(net.widths, last.best_theta, ds.standardizer, net.cube,
               {"seed": run_seed, "best_epoch": last.best_epoch, "epochs": cfg.epochs, **asdict(hp)})
    return RunResult(run_seed, best, last.best_objective, reports, ds, enrichment)


def _task(args):
    return train_run(*args)


def run_many(tasks, workers=1):
    """Run ``train_run`` over ``tasks``; results come back in task order whatever ``workers`` is."""
    if workers <= 1 or len(tasks) <= 1:
        return [_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(_task, tasks))


# selection


@dataclass
class TuneResult:
    selected: HyperParams
    table: list  # (HyperParams, mean objective, per-seed objectives)

    def to_rows(self):
        rows = []
        for hp, mean, per_seed in self.table:
            rows.append({**asdict(hp), "n_params": hp.n_params(), "mean_val_objective": mean,
                         **{f"seed{k}": v for k, v in enumerate(per_seed)}})
        return rows


def tune(cfg, ds, workers=1):
    """Every grid cell x ``selection_seeds`` runs; pick the lowest mean validation objective."""
    cells = cfg.cells()
    tasks = [(cfg, ds, hp, derive_seed(cfg.seed, "select", ci, k))
             for ci, hp in enumerate(cells) for k in range(cfg.selection_seeds)]
    objs = [r.val_objective for r in run_many(tasks, workers)]
    table = []
    for ci, hp in enumerate(cells):
        per = objs[ci * cfg.selection_seeds:(ci + 1) * cfg.selection_seeds]
        table.append((hp, float(np.mean(per)), per))
    best = min(table, key=lambda row: (row[1], row[0].tie_key()))
    return TuneResult(best[0], table)


def write_tune_csv(path, result):
    rows = result.to_rows()
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys)
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


# assessment


def class_mse(pred, zeta, cls, sigma_y):
    """Total and per-class MSE of standardized residuals; NaN for empty classes."""
    r2 = ((np.asarray(pred) - np.asarray(zeta)) / sigma_y) ** 2
    out = {"total": float(r2.mean())}
    for c in StabilityClass:
        m = cls == c
        out[c.label] = float(r2[m].mean()) if m.any() else math.nan
    return out


def distribution(values):
    """Quartiles, whisker ends and 1.5-IQR outliers of the finite values."""
    v = np.asarray([x for x in values if math.isfinite(x)], dtype=float)
    if v.size == 0:
        return {"n": 0}
    q1, med, q3 = np.percentile(v, [25, 50, 75])
    iqr = q3 - q1
    lo, hi = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = v[(v >= lo) & (v <= hi)]
    return {"n": int(v.size), "q1": float(q1), "median": float(med), "q3": float(q3),
            "whisker_low": float(inside.min()), "whisker_high": float(inside.max()),
            "outliers": sorted(float(x) for x in v[(v < lo) | (v > hi)])}


@dataclass
class AssessmentReport:
    runs: list  # dicts: seed, diverged, total, per-class MSE
    counts: dict  # test points per class
    sigma_y: float

    def summary(self):
        ok = [r for r in self.runs if not r["diverged"]]
        return {
            "n_runs": len(self.runs),
            "failures": len(self.runs) - len(ok),
            "sigma_y": self.sigma_y,
            "class_counts": self.counts,
            "mse": {k: distribution([r[k] for r in ok]) for k in ("total", *CLASS_LABELS)},
        }

    def median(self, key):
        return self.summary()["mse"][key].get("median", math.nan)


ASSESS_COLUMNS = ["seed", "diverged", "val_objective", "total", *CLASS_LABELS]


def assess(cfg, ds, hp, vault, sigma_y=None, workers=1):
    """``assessment_seeds`` runs of the selected cell, scored on the sealed test set.

    MSEs are in standardized units of ``sigma_y`` (default: the base training
    split's output scale, so variants share one yardstick).
    """
    if sigma_y is None:
        sigma_y = ds.meta.get("base_sigma_y", ds.standardizer.sigma_y)
    tasks = [(cfg, ds, hp, derive_seed(cfg.seed, "assess", k)) for k in range(cfg.assessment_seeds)]
    nets = run_many(tasks, workers)
    return score_runs(nets, vault, sigma_y), nets


def score_runs(nets, vault, sigma_y):
    """Score trained runs on the sealed test set; the only place the vault is opened."""
    runs = []
    test = vault.open_for_assessment()
    counts = {c.label: int((test.cls == c).sum()) for c in StabilityClass}
    for k, rr in enumerate(nets):
        row = {"seed": k, "diverged": rr.diverged, "val_objective": rr.val_objective}
        if rr.diverged:
            row.update({key: math.nan for key in ("total", *CLASS_LABELS)})
        else:
            pred = rr.net.predict(test.X)
            if not np.all(np.isfinite(pred)):
                row["diverged"] = True
                row.update({key: math.nan for key in ("total", *CLASS_LABELS)})
            else:
                row.update(class_mse(pred, test.zeta, test.cls, sigma_y))
        runs.append(row)
    return AssessmentReport(runs, counts, float(sigma_y))


def write_assessment_csv(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(ASSESS_COLUMNS)
        for r in report.runs:
            w.writerow([r["seed"], int(r["diverged"]), repr(float(r["val_objective"])),
                        *(repr(float(r[k])) for k in ("total", *CLASS_LABELS))])


def dataset_summary(ds):
    hist = class_histogram(ds.pool)
    origins = {}
    for o in ds.pool.origin:
        origins[str(o)] = origins.get(str(o), 0) + 1
    return {"n": len(ds), "n_train": len(ds.train_idx), "n_val": len(ds.val_idx),
            "classes": {k: {"count": c, "share": s} for k, (c, s) in hist.items()},
            "origins": dict(sorted(origins.items()))}
