"""Network-informed and verification-informed enrichment, and the
statistical-versus-verified distance comparison."""
import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .milp.model import Threshold, forward_layers, unit_layers
from .milp.verify import MARGIN, verify_corner
from .sampling import SampleSet, classify, label
from .seeds import derive_seed

PERCENTILES = (0, 10, 25, 50, 75, 90, 100)
POOL_CHUNK = 250_000


@dataclass(frozen=True)
class EnrichConfig:
    pool_size: int = 1_000_000
    n_samples: int = 200
    delta: float = 0.25
    interrupt_epoch: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0 or self.pool_size < 1 or self.n_samples > self.pool_size:
            raise ValueError("need 0 <= n_samples <= pool_size")
        if self.delta <= 0:
            raise ValueError("delta must be positive")


@dataclass
class EnrichmentBatch:
    samples: SampleSet
    status: str  # ok | empty | fallback
    n_candidates: int
    pool_size: int
    certificates: list = field(default_factory=list)
    excluded_fraction: float = 0.0

    def summary(self):
        out = {"status": self.status, "n_candidates": self.n_candidates, "pool_size": self.pool_size,
               "n_samples": len(self.samples)}
        if self.certificates:
            out["excluded_fraction"] = self.excluded_fraction
            out["certificates"] = [c.to_dict() for c in self.certificates]
        return out


def _pool(cfg, stage):
    rng = np.random.default_rng(derive_seed(cfg.seed, stage, "pool"))
    return rng.random((cfg.pool_size, 4))


def _predict_unit(layers, U):
    out = np.empty(len(U))
    for s in range(0, len(U), POOL_CHUNK):
        out[s:s + POOL_CHUNK] = forward_layers(layers, U[s:s + POOL_CHUNK])
    return out


def _subsample(keep, cfg, stage):
    idx = np.flatnonzero(keep)
    if len(idx) > cfg.n_samples:
        rng = np.random.default_rng(derive_seed(cfg.seed, stage, "subsample"))
        idx = np.sort(rng.choice(idx, size=cfg.n_samples, replace=False))
    return idx


def ni_enrich(net, cfg, cube=None, layers=None):
    """Label uniformly chosen pool points whose prediction lies in ``3 +/- delta`` percent."""
    cube = cube or net.cube
    layers = unit_layers(net) if layers is None else layers
    U = _pool(cfg, "ni")
    pred = _predict_unit(layers, U)
    keep = np.abs(pred - MARGIN) <= cfg.delta
    n_cand = int(keep.sum())
    if n_cand == 0:
        warnings.warn("NI enrichment: no pool point predicted inside the target band", RuntimeWarning)
        return EnrichmentBatch(SampleSet.empty(), "empty", 0, cfg.pool_size)
    idx = _subsample(keep, cfg, "ni")
    return EnrichmentBatch(label(cube.from_unit(U[idx]), "ni"), "ok", n_cand, cfg.pool_size)


def certify_corners(net, delta, cube=None, layers=None, node_limit=1_000_000):
    """One certificate per unit-box corner, in binary-counting corner order."""
    cube = cube or net.cube
    layers = unit_layers(net) if layers is None else layers
    return [verify_corner(net, c, delta=delta, node_limit=node_limit, layers=layers)
            for c in cube.corners()]


def inside_regions(U, certificates):
    """Mask of points strictly inside some certified ball."""
    inside = np.zeros(len(U), dtype=bool)
    for cert in certificates:
        r = cert.region_radius
        if r > 0:
            inside |= np.abs(U - cert.anchor).max(axis=1) < r
    return inside


def vi_enrich(net, cfg, cube=None, layers=None, certificates=None, node_limit=1_000_000):
    """Label uniformly chosen pool points outside every certified corner region."""
    cube = cube or net.cube
    layers = unit_layers(net) if layers is None else layers
    if certificates is None:
        certificates = certify_corners(net, cfg.delta, cube, layers, node_limit)
    U = _pool(cfg, "vi")
    attempted = [c for c in certificates if c.status != "skipped_marginal"]
    status = "ok"
    if attempted and all(c.status == "solver_limit" for c in attempted):
        warnings.warn("VI enrichment: every corner hit the solver limit; sampling unfiltered",
                      RuntimeWarning)
        keep = np.ones(len(U), dtype=bool)
        status = "fallback"
    else:
        keep = ~inside_regions(U, certificates)
    excluded = 1.0 - float(keep.mean())
    n_cand = int(keep.sum())
    if n_cand == 0:
        warnings.warn("VI enrichment: certified regions cover the whole pool", RuntimeWarning)
        return EnrichmentBatch(SampleSet.empty(), "empty", 0, cfg.pool_size, certificates, excluded)
    idx = _subsample(keep, cfg, "vi")
    return EnrichmentBatch(label(cube.from_unit(U[idx]), "vi"), status, n_cand, cfg.pool_size,
                           certificates, excluded)


def _stream_minima(layers, anchors, thresholds, schedule, seed, chunk=POOL_CHUNK):
    """Running min distance to a crossing, read at each ``n`` of ``schedule``.

    One uniform stream per seed is shared by every anchor; the first ``n``
    draws are the same whatever the schedule.
    """
    schedule = np.asarray(schedule, dtype=np.int64)
    rng = np.random.default_rng(seed)
    best = np.full(len(anchors), np.inf)
    out = np.empty((len(anchors), len(schedule)))
    done, k = 0, 0
    n_max = int(schedule.max()) if len(schedule) else 0
    while k < len(schedule):
        m = min(chunk, n_max - done)
        U = rng.random((m, 4))
        pred = forward_layers(layers, U)
        for a, (x0, thr) in enumerate(zip(anchors, thresholds)):
            hit = thr.crossed(pred)
            dist = np.where(hit, np.abs(U - x0).max(axis=1), np.inf)
            # prefix minima, so schedule points falling inside this chunk are exact
            pref = np.minimum.accumulate(dist)
            for kk in range(k, len(schedule)):
                n = schedule[kk]
                if n > done + m:
                    break
                out[a, kk] = min(best[a], pref[n - done - 1])
            best[a] = min(best[a], pref[-1])
        done += m
        while k < len(schedule) and schedule[k] <= done:
            k += 1
    return out


def epsilon_statistical(layers, anchor, threshold, n, seed):
    """Closest crossing among the first ``n`` seeded uniform points; inf if none cross."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return float(_stream_minima(layers, [np.asarray(anchor, float)], [threshold], [n], seed)[0, 0])


def log_schedule(n_max=1_000_000, per_decade=4, n_min=10):
    """Log-spaced sample counts from ``n_min`` to ``n_max``, both included."""
    k = int(round(np.log10(n_max / n_min) * per_decade))
    return np.unique(np.round(np.logspace(np.log10(n_min), np.log10(n_max), k + 1)).astype(np.int64))


def compare_stat_vs_verified(net, certificates, schedule=None, n_seeds=100, seed=0, layers=None):
    """Percentiles over seeds of eps_stat(n) / eps_verified for each certified corner.

    Returns rows ``(corner, n, p0, p10, p25, p50, p75, p90, p100)``; corners
    without a certified finite distance are omitted.  Ratios are inf when no
    sampled point crosses.
    """
    layers = unit_layers(net) if layers is None else layers
    schedule = log_schedule() if schedule is None else np.asarray(schedule, dtype=np.int64)
    use = [(i, c) for i, c in enumerate(certificates) if c.status == "certified" and c.epsilon_star > 0]
    if not use:
        return []
    anchors = [c.anchor for _, c in use]
    thresholds = [Threshold(c.sense, c.threshold) for _, c in use]
    ratios = np.empty((n_seeds, len(use), len(schedule)))
    for s in range(n_seeds):
        eps = _stream_minima(layers, anchors, thresholds, schedule, derive_seed(seed, "compare", s))
        ratios[s] = eps / np.array([c.epsilon_star for _, c in use])[:, None]
    rows = []
    for a, (i, _) in enumerate(use):
        for k, n in enumerate(schedule):
            pct = np.percentile(ratios[:, a, k], PERCENTILES, method="nearest")
            rows.append((i, int(n), *map(float, pct)))
    return rows


def write_comparison_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["corner", "n", *(f"p{p}" for p in PERCENTILES)])
        for r in rows:
            w.writerow([r[0], r[1], *(repr(v) for v in r[2:])])


def corner_class_at(net, corner, layers=None):
    """Class of the network prediction at a unit-box corner."""
    layers = unit_layers(net) if layers is None else layers
    return classify(forward_layers(layers, corner)[0])

