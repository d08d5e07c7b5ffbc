"""Big-M MILP encoding of a ReLU network in unit-hypercube coordinates.

The network is re-expressed so that its inputs are unit-box coordinates
and its output is the denormalized prediction in percent; both affine maps
are folded into the first and last layers.  Stable neurons are eliminated
symbolically: an always-active neuron is carried as an affine expression of
the LP variables, an always-inactive one as zero.  Only unstable neurons
get a ``(z, b)`` variable pair and the three big-M rows

    z >= zhat,   z <= zhat - zhat_min (1 - b),   z <= zhat_max b

with ``0 <= z <= zhat_max`` and ``0 <= b <= 1`` kept as variable bounds.
"""
from dataclasses import dataclass, field

import numpy as np

from .bounds import ACTIVE, FREE, INACTIVE, NeuronBounds, linear_bounds, propagate_bounds
from .simplex import LP


def unit_layers(net):
    """(W, b) list mapping unit-box inputs to the percent-valued prediction."""
    std = net.standardizer
    if std is None:
        raise ValueError("network needs a standardizer to be encoded")
    layers = [(W.copy(), b.copy()) for W, b in net.layers()]
    scale = net.cube.span / std.sigma_x
    shift = (net.cube.lower - std.mu_x) / std.sigma_x
    W1, b1 = layers[0]
    layers[0] = (W1 * scale, b1 + W1 @ shift)
    WL, bL = layers[-1]
    layers[-1] = (WL * std.sigma_y, bL * std.sigma_y + std.mu_y)
    return layers


def forward_layers(layers, U):
    a = np.atleast_2d(U).T
    for W, b in layers[:-1]:
        a = np.maximum(W @ a + b[:, None], 0.0)
    W, b = layers[-1]
    return (W @ a + b[:, None])[0]


def activation_pattern(layers, u):
    a = np.asarray(u, dtype=float)
    pattern = []
    for W, b in layers[:-1]:
        h = W @ a + b
        pattern.append(np.where(h > 0.0, ACTIVE, INACTIVE).astype(np.int8))
        a = np.maximum(h, 0.0)
    return pattern


@dataclass
class Threshold:
    """Crossing condition on the prediction: ``pred <= value`` or ``pred >= value``."""

    sense: str
    value: float

    def __post_init__(self):
        if self.sense not in ("le", "ge"):
            raise ValueError("sense must be 'le' or 'ge'")

    def crossed(self, pred, tol=0.0):
        pred = np.asarray(pred)
        return pred <= self.value + tol if self.sense == "le" else pred >= self.value - tol


@dataclass
class LPBuild:
    lp: LP
    free_dims: list
    n_x: int
    eps_col: int
    neuron_cols: dict  # (layer, j) -> (z_col, b_col)
    rows: list = field(default_factory=list)  # constraint labels, for dumps
    offset: float = 0.0  # constant added to the LP objective
    output_expr: tuple = None

    def unit_point(self, x, fixed_values):
        u = np.array(fixed_values, dtype=float)
        u[self.free_dims] = x[:self.n_x]
        return u


class MilpModel:
    """Distance-to-crossing MILP around an anchor point.

    Parameters
    ----------
    layers : network in unit coordinates (see :func:`unit_layers`).
    anchor : full unit-coordinate anchor; fixed dimensions keep its value.
    free_dims : dimensions allowed to move.
    threshold : crossing condition, or None for a plain encoding.
    objective : ``"epsilon"`` (minimize infinity-norm distance) or
        ``("output", +1|-1)`` to minimize/maximize the prediction.
    bound_method : ``"linear"`` (interval tightened by linear envelopes) or
        ``"interval"``.
    """

    def __init__(self, layers, anchor, free_dims=(0, 1, 2, 3), threshold=None,
                 objective="epsilon", domain=None, bound_method="linear"):
        self.layers = layers
        self.anchor = np.asarray(anchor, dtype=float)
        self.free_dims = list(free_dims)
        self.threshold = threshold
        self.objective = objective
        d = self.anchor.size
        lo, hi = (np.zeros(d), np.ones(d)) if domain is None else (np.asarray(domain[0], float),
                                                                     np.asarray(domain[1], float))
        self.domain_lo = lo
        self.domain_hi = hi
        self.hidden_sizes = [W.shape[0] for W, _ in layers[:-1]]
        if bound_method not in ("linear", "interval"):
            raise ValueError(f"unknown bound method {bound_method!r}")
        self.bound_method = bound_method

    def empty_fixings(self):
        return [np.full(n, FREE, dtype=np.int8) for n in self.hidden_sizes]

    def input_box(self, radius=None, box=None):
        """Admissible input box, optionally cut to a sub-box and to the ball of ``radius``."""
        lo = self.anchor.copy()
        hi = self.anchor.copy()
        f = self.free_dims
        blo, bhi = (self.domain_lo, self.domain_hi) if box is None else box
        lo[f] = blo[f]
        hi[f] = bhi[f]
        if radius is not None and self.objective == "epsilon":
            lo[f] = np.maximum(lo[f], self.anchor[f] - radius)
            hi[f] = np.minimum(hi[f], self.anchor[f] + radius)
        return lo, hi

    def box_distance(self, box):
        """Infinity-norm distance from the anchor to a sub-box."""
        if box is None or not self.free_dims:
            return 0.0
        f = self.free_dims
        gap = np.maximum(box[0][f] - self.anchor[f], self.anchor[f] - box[1][f])
        return float(max(gap.max(), 0.0))

    def bounds(self, radius=None, fixings=None, box=None):
        lo, hi = self.input_box(radius, box)
        if np.any(lo > hi):
            return NeuronBounds([], [], feasible=False)
        fn = linear_bounds if self.bound_method == "linear" else propagate_bounds
        return fn(self.layers, lo, hi, fixings)

    def excludes_crossing(self, bounds):
        """True when the output interval shows the threshold cannot be crossed."""
        t = self.threshold
        if t is None or bounds.out_min is None:
            return False
        if t.sense == "le":
            return bool(bounds.out_min[0] > t.value)
        return bool(bounds.out_max[0] < t.value)

    def proof_radius(self, fixings, r_lo, r_hi, box=None, tol=1e-4):
        """Largest radius in ``[r_lo, r_hi]`` whose ball provably has no crossing.

        Found by bisection on the bound-propagation test; ``r_lo`` is
        returned when even that ball cannot be cleared.
        """
        def clear(r):
            b = self.bounds(r, fixings, box)
            return not b.feasible or self.excludes_crossing(b)

        if clear(r_hi):
            return r_hi
        if r_lo > 0 and not clear(r_lo):
            return r_lo
        lo, hi = r_lo, r_hi
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if clear(mid):
                lo = mid
            else:
                hi = mid
        return lo

    def crossing_candidates(self, n=4096, seed=0, keep=4):
        """Closest sampled points (in the free box) whose prediction crosses the threshold."""
        if self.threshold is None:
            return []
        rng = np.random.default_rng(seed)
        lo, hi = self.input_box()
        U = np.tile(self.anchor, (n, 1))
        f = self.free_dims
        U[:, f] = lo[f] + rng.random((n, len(f))) * (hi[f] - lo[f])
        hit = self.threshold.crossed(forward_layers(self.layers, U))
        if not hit.any():
            return []
        U = U[hit]
        dist = np.abs(U - self.anchor).max(axis=1)
        return [U[i] for i in np.argsort(dist, kind="stable")[:keep]]

    def build(self, fixings=None, bounds=None, radius=None, eps_min=0.0, box=None, pin=None):
        """Assemble the LP relaxation; returns None if the fixings are infeasible.

        ``pin`` (a full activation pattern) fixes the binaries of encoded
        neurons through their variable bounds, keeping the big-M rows.
        """
        fixings = self.empty_fixings() if fixings is None else fixings
        if bounds is None:
            bounds = self.bounds(radius, fixings, box)
        if not bounds.feasible or self.excludes_crossing(bounds):
            return None
        box_lo, box_hi = self.input_box(radius, box)
        free = self.free_dims
        n_x = len(free)
        use_eps = self.objective == "epsilon"
        eps_col = n_x if use_eps else -1
        n_unstable = 0
        for l, (lo, hi) in enumerate(zip(bounds.zhat_min, bounds.zhat_max)):
            n_unstable += int(np.sum((lo < 0) & (hi > 0) & (fixings[l] == FREE)))
        nvar = n_x + (1 if use_eps else 0) + 2 * n_unstable

        lb = np.zeros(nvar)
        ub = np.zeros(nvar)
        lb[:n_x] = box_lo[free]
        ub[:n_x] = box_hi[free]
        if use_eps:
            lb[eps_col] = eps_min
            ub[eps_col] = 1.0 if radius is None else max(radius, eps_min)

        rows, rhs, labels = [], [], []

        def add(row, b, lab):
            rows.append(row)
            rhs.append(b)
            labels.append(lab)

        # Affine expressions E @ v + c for the current layer's post-activations.
        d = self.anchor.size
        E = np.zeros((d, nvar))
        c = self.anchor.copy()
        for k, dim in enumerate(free):
            E[dim, k] = 1.0
            c[dim] = 0.0
        col = n_x + (1 if use_eps else 0)
        neuron_cols = {}
        for l, (W, b) in enumerate(self.layers[:-1]):
            Eh = W @ E
            ch = W @ c + b
            lo, hi = bounds.zhat_min[l], bounds.zhat_max[l]
            fx = fixings[l]
            En = np.zeros_like(Eh)
            cn = np.zeros_like(ch)
            for j in range(W.shape[0]):
                if fx[j] == INACTIVE or (fx[j] == FREE and hi[j] <= 0):
                    if fx[j] == INACTIVE and hi[j] > 0:
                        add(Eh[j].copy(), -ch[j], f"L{l}N{j} inactive: zhat <= 0")
                    continue
                if fx[j] == ACTIVE or lo[j] >= 0:
                    if fx[j] == ACTIVE and lo[j] < 0:
                        add(-Eh[j], ch[j], f"L{l}N{j} active: zhat >= 0")
                    En[j] = Eh[j]
                    cn[j] = ch[j]
                    continue
                zc, bc = col, col + 1
                col += 2
                neuron_cols[(l, j)] = (zc, bc)
                lb[zc], ub[zc] = 0.0, hi[j]
                lb[bc], ub[bc] = (0.0, 1.0) if pin is None else (float(pin[l][j]),) * 2
                r = Eh[j].copy()
                r[zc] -= 1.0
                add(r, -ch[j], f"L{l}N{j} z >= zhat")
                r = -Eh[j].copy()
                r[zc] += 1.0
                r[bc] -= lo[j]
                add(r, ch[j] - lo[j], f"L{l}N{j} z <= zhat - zmin(1-b)")
                r = np.zeros(nvar)
                r[zc] = 1.0
                r[bc] = -hi[j]
                add(r, 0.0, f"L{l}N{j} z <= zmax b")
                En[j, zc] = 1.0
            E, c = En, cn
        W, b = self.layers[-1]
        Eo = (W @ E)[0]
        co = float((W @ c + b)[0])

        if self.threshold is not None:
            if self.threshold.sense == "le":
                add(Eo.copy(), self.threshold.value - co, f"pred <= {self.threshold.value}")
            else:
                add(-Eo, co - self.threshold.value, f"pred >= {self.threshold.value}")
        cost = np.zeros(nvar)
        if use_eps:
            for k, dim in enumerate(free):
                r = np.zeros(nvar)
                r[k], r[eps_col] = 1.0, -1.0
                add(r, self.anchor[dim], f"x{dim} - eps <= x0")
                r = np.zeros(nvar)
                r[k], r[eps_col] = -1.0, -1.0
                add(r, -self.anchor[dim], f"x0 - x{dim} <= eps")
            cost[eps_col] = 1.0
        else:
            cost = Eo * float(self.objective[1])
        A = np.array(rows, dtype=float).reshape(len(rows), nvar)
        lp = LP(cost, A, np.array(rhs, dtype=float), lb=lb, ub=ub)
        build = LPBuild(lp, free, n_x, eps_col, neuron_cols, labels)
        build.output_expr = (Eo, co)
        build.offset = 0.0 if use_eps else co * float(self.objective[1])
        return build

    def dump(self, build=None):
        """Human-readable constraint listing."""
        build = build or self.build()
        lp = build.lp
        names = [f"x{d}" for d in build.free_dims]
        if build.eps_col >= 0:
            names.append("eps")
        for (l, j), (zc, bc) in sorted(build.neuron_cols.items(), key=lambda kv: kv[1]):
            names += [f"z[{l},{j}]", f"b[{l},{j}]"]

        def term(coef, name):
            return f"{coef:+.6g}*{name}"

        lines = ["minimize " + " ".join(term(v, names[i]) for i, v in enumerate(lp.c) if v != 0)]
        for row, b, lab in zip(lp.A_ub, lp.b_ub, build.rows):
            expr = " ".join(term(v, names[i]) for i, v in enumerate(row) if v != 0) or "0"
            lines.append(f"  [{lab}] {expr} <= {b:.6g}")
        for i, name in enumerate(names):
            lines.append(f"  {lp.lb[i]:.6g} <= {name} <= {lp.ub[i]:.6g}")
        return "\n".join(lines)
