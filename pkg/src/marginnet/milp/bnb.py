"""Best-first branch-and-bound over ReLU activation binaries and the input box."""
import heapq
import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .bounds import ACTIVE, FREE, INACTIVE
from .model import activation_pattern
from .simplex import solve_lp

PRUNE_TOL = 1e-6
INTEGRAL_TOL = 1e-6
BINARY_BRANCH_MAX = 8  # above this many unstable neurons, distance searches split the input box
MIN_SPLIT_WIDTH = 1e-6


@dataclass
class Certificate:
    epsilon_star: float
    witness: np.ndarray
    status: str  # certified | skipped_marginal | infeasible_in_box | solver_limit | infeasible_anchor
    lower_bound: float = float("nan")
    nodes: int = 0
    wall_time: float = 0.0
    anchor: np.ndarray = None
    threshold: float = None
    sense: str = None
    delta: float = None
    extra: dict = field(default_factory=dict)

    @property
    def region_radius(self):
        """Radius of the proven crossing-free ball; 1 covers the whole unit box.

        Uses the proven lower bound, so a solver-limited search still yields
        a (smaller) sound region.
        """
        if self.status == "infeasible_in_box":
            return 1.0
        if self.status in ("certified", "solver_limit") and np.isfinite(self.lower_bound):
            return max(float(self.lower_bound), 0.0)
        return 0.0

    def to_dict(self):
        def arr(a):
            return None if a is None else [float(v) for v in a]

        return {
            "status": self.status,
            "epsilon_star": float(self.epsilon_star),
            "lower_bound": float(self.lower_bound),
            "witness": arr(self.witness),
            "anchor": arr(self.anchor),
            "threshold": self.threshold,
            "sense": self.sense,
            "delta": self.delta,
            "nodes": int(self.nodes),
            "wall_time": float(self.wall_time),
            **self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        known = ("status", "epsilon_star", "lower_bound", "witness", "anchor", "threshold", "sense",
                 "delta", "nodes", "wall_time")
        return cls(d["epsilon_star"], None if d["witness"] is None else np.array(d["witness"]),
                   d["status"], d["lower_bound"], d["nodes"], d["wall_time"],
                   None if d["anchor"] is None else np.array(d["anchor"]), d["threshold"], d["sense"],
                   d["delta"], {k: v for k, v in d.items() if k not in known})


@dataclass
class BnBResult:
    value: float
    x: np.ndarray  # full unit-coordinate point of the incumbent
    lower_bound: float
    nodes: int
    status: str  # optimal | infeasible | node_limit | lp_limit
    lp_solves: int = 0


def _copy_fix(fixings):
    return [f.copy() for f in fixings]


def _fractional_neuron(build, x, layer_first=False):
    best, best_key = None, None
    for (l, j), (_, bc) in build.neuron_cols.items():
        frac = abs(x[bc] - 0.5)
        if frac < 0.5 - INTEGRAL_TOL:
            key = (l, j) if layer_first else (frac, l, j)
            if best_key is None or key < best_key:
                best, best_key = (l, j), key
    return best


class _Search:
    def __init__(self, model, node_limit, refine, bounds):
        self.model = model
        self.node_limit = node_limit
        self.refine = refine
        self.fixed_bounds = bounds
        self.incumbent = np.inf
        self.inc_x = None
        self.nodes = 0
        self.lp_solves = 0
        self.unresolved = np.inf  # best bound of nodes whose LP neither solved nor proved infeasible

    @property
    def radius(self):
        if not self.refine or self.model.objective != "epsilon" or not np.isfinite(self.incumbent):
            return None
        return self.incumbent

    def solve(self, fixings, box=None, node=False, r_lo=0.0):
        """LP relaxation at a node; returns (value, x, build) or None if infeasible.

        An LP that stops short (iteration limit) does not prune: the node is
        recorded as unresolved with bound ``r_lo`` and the search reports
        ``lp_limit``.

        For distance objectives at tree nodes the LP also gets ``eps >=`` the
        larger of the box distance and the radius that bound propagation
        clears, searched upward from ``r_lo`` (a bound inherited from the
        parent).
        """
        self.lp_solves += 1
        self.nodes += node
        m = self.model
        if not self.refine:
            build = m.build(fixings, bounds=self.fixed_bounds)
        else:
            eps_min = 0.0
            if m.objective == "epsilon" and m.threshold is not None:
                r_hi = self.incumbent if np.isfinite(self.incumbent) else 1.0
                eps_min = max(r_lo, m.box_distance(box))
                if node:
                    eps_min = m.proof_radius(fixings, min(eps_min, r_hi), r_hi, box)
                if eps_min >= r_hi - PRUNE_TOL and np.isfinite(self.incumbent):
                    return None
            build = m.build(fixings, radius=self.radius, eps_min=eps_min, box=box)
        if build is None:
            return None
        res = solve_lp(build.lp)
        if not res.ok:
            if res.status_name != "infeasible" and node:
                self.unresolved = min(self.unresolved, r_lo)
            return None
        return res.fun + build.offset, res.x, build

    def offer(self, val, x, build):
        if val < self.incumbent:
            self.incumbent = val
            self.inc_x = build.unit_point(x, self.model.anchor)

    def try_pattern(self, pattern):
        fix = [p.astype(np.int8).copy() for p in pattern]
        out = self.solve(fix)
        if out is not None:
            self.offer(*out)
        return out

    def descend(self, u, rounds=8):
        """Pattern LPs walked toward the anchor from a crossing point ``u``."""
        a = self.model.anchor
        seen = set()
        for _ in range(rounds):
            pattern = activation_pattern(self.model.layers, u)
            key = b"".join(p.tobytes() for p in pattern)
            if key in seen:
                return
            seen.add(key)
            before = self.incumbent
            self.try_pattern(pattern)
            if not self.incumbent < before:
                return
            u = a + (1.0 - 1e-3) * (self.inc_x - a)

    def heuristic(self, build, x, fixings):
        u = build.unit_point(x, self.model.anchor)
        induced = activation_pattern(self.model.layers, u)
        self.try_pattern(induced)
        rounded = _copy_fix(fixings)
        for (l, j), (_, bc) in build.neuron_cols.items():
            rounded[l][j] = ACTIVE if x[bc] >= 0.5 else INACTIVE
        # stable neurons take whatever the relaxation point induces
        for l in range(len(rounded)):
            free = rounded[l] == FREE
            rounded[l][free] = induced[l][free]
        if any(not np.array_equal(a, b) for a, b in zip(rounded, induced)):
            self.try_pattern(rounded)

    def split_dim(self, box):
        """Widest free input side of the node box cut to the incumbent ball, or None."""
        m = self.model
        if m.objective != "epsilon" or not m.free_dims or not self.refine:
            return None
        lo, hi = m.input_box(self.radius, box)
        f = m.free_dims
        width = hi[f] - lo[f]
        k = int(np.argmax(width))
        if width[k] <= MIN_SPLIT_WIDTH:
            return None
        return f[k], 0.5 * (lo[f[k]] + hi[f[k]])


def branch_and_bound(model, node_limit=1_000_000, refine_bounds=True, bounds=None, gap=PRUNE_TOL,
                     heuristic_seed=0, binary_branch_max=BINARY_BRANCH_MAX, layer_first=False):
    """Minimize the model objective exactly over the ReLU binaries.

    Nodes are explored best-bound first (ties by creation order).  With
    ``refine_bounds`` each node re-derives bounds from its fixings, its
    input box and, for distance objectives, the ball of the current
    incumbent.  Distance searches are seeded with incumbents from pattern
    LPs at sampled crossing points.

    A node with more than ``binary_branch_max`` unstable neurons in a
    distance search is split on its widest input side; otherwise it
    branches on the most fractional binary (ties: lowest layer, then
    index), or with ``layer_first`` on the fractional binary of lowest
    layer and index.
    """
    search = _Search(model, node_limit, refine_bounds, bounds)
    counter = itertools.count()
    if model.objective == "epsilon":
        for u in model.crossing_candidates(seed=heuristic_seed):
            search.descend(u)
    root_fix = model.empty_fixings()
    root_box = (model.domain_lo.copy(), model.domain_hi.copy())
    root = search.solve(root_fix, root_box, node=True)
    if root is None and np.isfinite(search.unresolved):
        return BnBResult(search.incumbent, search.inc_x, min(search.unresolved, search.incumbent), search.nodes,
                         "lp_limit", search.lp_solves)
    if root is None:
        if np.isfinite(search.incumbent):
            # no point of the incumbent ball beats the incumbent
            return BnBResult(search.incumbent, search.inc_x, search.incumbent, search.nodes, "optimal",
                             search.lp_solves)
        return BnBResult(np.inf, None, np.inf, search.nodes, "infeasible", search.lp_solves)
    heap = [(root[0], next(counter), root_fix, root_box, root)]
    status = "optimal"
    closed_at = None  # bound of the first node that could not improve the incumbent
    while heap:
        bound, _, fix, box, (val, x, build) = heapq.heappop(heap)
        if bound >= search.incumbent - gap:
            closed_at = bound
            heap.clear()
            break
        if search.nodes >= node_limit:
            heapq.heappush(heap, (bound, next(counter), fix, box, (val, x, build)))
            status = "node_limit"
            break
        if not build.neuron_cols:
            # every neuron stable or fixed: the relaxation is the exact node problem
            search.offer(val, x, build)
            continue
        search.heuristic(build, x, fix)
        children = []
        cut = search.split_dim(box) if len(build.neuron_cols) > binary_branch_max else None
        if cut is not None:
            dim, mid = cut
            lo, hi = search.model.input_box(search.radius, box)
            left = (lo.copy(), hi.copy())
            left[1][dim] = mid
            right = (lo.copy(), hi.copy())
            right[0][dim] = mid
            children = [(fix, left), (fix, right)]
        else:
            nj = _fractional_neuron(build, x, layer_first)
            if nj is None:
                # integral relaxation: the node optimum is attained by its own pattern
                out = search.try_pattern(_integral_pattern(build, x, fix, model))
                if out is not None and out[0] <= val + 1e-7:
                    continue
                nj = next(iter(build.neuron_cols))
            l, j = nj
            for v in (INACTIVE, ACTIVE):
                child = _copy_fix(fix)
                child[l][j] = v
                children.append((child, box))
        for cfix, cbox in children:
            out = search.solve(cfix, cbox, node=True, r_lo=val)
            if out is None or out[0] >= search.incumbent - gap:
                continue
            heapq.heappush(heap, (out[0], next(counter), cfix, cbox, out))
    inc = search.incumbent
    if status == "node_limit":
        lower = min(min(item[0] for item in heap), inc)
    elif np.isfinite(search.unresolved):
        status = "lp_limit"
        lower = inc if closed_at is None else min(closed_at, inc)
    elif not np.isfinite(inc):
        return BnBResult(np.inf, None, np.inf, search.nodes, "infeasible", search.lp_solves)
    else:
        lower = inc if closed_at is None else min(closed_at, inc)
    lower = min(lower, search.unresolved)
    return BnBResult(inc, search.inc_x, lower, search.nodes, status, search.lp_solves)


def _integral_pattern(build, x, fix, model):
    u = build.unit_point(x, model.anchor)
    pattern = activation_pattern(model.layers, u)
    out = _copy_fix(fix)
    for l in range(len(out)):
        free = out[l] == FREE
        out[l][free] = pattern[l][free]
    for (l, j), (_, bc) in build.neuron_cols.items():
        out[l][j] = ACTIVE if x[bc] >= 0.5 else INACTIVE
    return out


def timed(fn, *args, **kwargs):
    t0 = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - t0
