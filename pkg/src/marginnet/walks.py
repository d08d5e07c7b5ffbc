"""Directed walks toward the 3% damping boundary.

Each walk runs twice from the same start: first with the droop gains held
and only the power set points moving, then with the set points held and the
gains moving.  Steps are taken in unit-hypercube coordinates along the
normalized binding-mode gradient.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .sampling import Hypercube, label

TARGET = 3.0
PHASE_DIMS = {"power": (0, 1), "control": (2, 3)}


@dataclass(frozen=True)
class WalkConfig:
    trigger_halfwidth: float = 6.0
    target_halfwidth: float = 0.25
    alpha0: float = 0.05
    max_iters: int = 50
    min_grad_norm: float = 1e-8

    def __post_init__(self):
        if self.alpha0 <= 0:
            raise ValueError("alpha0 must be positive")
        if not 0 < self.target_halfwidth < self.trigger_halfwidth:
            raise ValueError("target band must sit inside the trigger band")

    def in_trigger(self, zeta):
        return abs(zeta - TARGET) <= self.trigger_halfwidth

    def in_target(self, zeta):
        return abs(zeta - TARGET) <= self.target_halfwidth


@dataclass
class WalkResult:
    phase: str
    path: list = field(default_factory=list)  # (x, zeta) pairs
    status: str = "not_triggered"

    @property
    def terminal(self):
        return self.path[-1] if self.path else None


class StalledStep(Exception):
    pass


def step_size(zeta, alpha0):
    gap = zeta - TARGET
    return -np.sign(gap) * alpha0 * min(1.0, abs(gap) / TARGET)


def walk_step(x, grad, zeta, phase, cfg=WalkConfig(), cube=None):
    """One steepest-descent move; returns ``(x_next, clipped)``.

    Raises StalledStep when the phase-masked gradient is below
    ``cfg.min_grad_norm``.
    """
    cube = cube or Hypercube()
    x = np.asarray(x, dtype=float)
    mask = np.zeros(4)
    mask[list(PHASE_DIMS[phase])] = 1.0
    g_unit = np.asarray(grad, dtype=float) * cube.span * mask
    norm = np.linalg.norm(g_unit)
    if norm < cfg.min_grad_norm:
        raise StalledStep(f"gradient norm {norm:.3e} below threshold")
    alpha = step_size(zeta, cfg.alpha0)
    if alpha == 0.0:
        return x.copy(), False
    u = cube.to_unit(x) + alpha * g_unit / norm
    clipped = bool(np.any((u < 0.0) | (u > 1.0)))
    x_next = cube.from_unit(np.clip(u, 0.0, 1.0))
    # Exact copy of held coordinates; unit round-trip may perturb them by an ulp.
    x_next[mask == 0.0] = x[mask == 0.0]
    return np.clip(x_next, cube.lower, cube.upper), clipped


def _walk_phase(x0, res0, phase, cfg, cube):
    result = WalkResult(phase, [(np.array(x0, dtype=float), res0.zeta_c)])
    x, res = np.array(x0, dtype=float), res0
    if cfg.in_target(res.zeta_c):
        result.status = "converged"
        return result
    clipped_run = 0
    for _ in range(cfg.max_iters):
        if res.degenerate:
            result.status = "stalled"
            return result
        try:
            x, clipped = walk_step(x, res.gradient, res.zeta_c, phase, cfg, cube)
        except StalledStep:
            result.status = "stalled"
            return result
        res = oracle.min_damping(x)
        result.path.append((x.copy(), res.zeta_c))
        if cfg.in_target(res.zeta_c):
            result.status = "converged"
            return result
        clipped_run = clipped_run + 1 if clipped else 0
        if clipped_run >= 2:
            result.status = "left_box"
            return result
    result.status = "iter_cap"
    return result


def directed_walk(x0, cfg=WalkConfig(), cube=None, zeta0=None):
    """Run the power phase then the control phase, both starting at ``x0``."""
    cube = cube or Hypercube()
    x0 = np.asarray(x0, dtype=float)
    if zeta0 is not None and not cfg.in_trigger(zeta0):
        return WalkResult("power"), WalkResult("control")
    res0 = oracle.min_damping(x0)
    if not cfg.in_trigger(res0.zeta_c):
        return WalkResult("power"), WalkResult("control")
    return (_walk_phase(x0, res0, "power", cfg, cube),
            _walk_phase(x0, res0, "control", cfg, cube))


def converged_termini(results):
    pts = [r.terminal[0] for r in results if r.status == "converged"]
    return np.array(pts).reshape(-1, 4)


def enrich_dw(samples, cfg=WalkConfig(), cube=None):
    """Walk from every trigger-band sample; label the converged termini (origin ``dw``)."""
    results = []
    for x, z in zip(samples.X, samples.zeta):
        if cfg.in_trigger(z):
            results.extend(directed_walk(x, cfg, cube, zeta0=z))
    batch = label(converged_termini(results), origin="dw")
    keep = np.abs(batch.zeta - TARGET) <= cfg.target_halfwidth
    return batch.subset(np.flatnonzero(keep)), results


def write_paths_csv(path, results):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["walk", "phase", "status", "step", "x1", "x2", "x3", "x4", "zeta"])
        for wi, r in enumerate(results):
            for step, (x, z) in enumerate(r.path):
                w.writerow([wi, r.phase, r.status, step, *map(repr, map(float, x)), repr(float(z))])
