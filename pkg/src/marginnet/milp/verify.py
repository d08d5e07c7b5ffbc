"""Distance-to-threshold certificates and encoding self-checks."""
import time

import numpy as np

from ..errors import EncodingError
from ..sampling import StabilityClass, classify
from .bnb import Certificate, branch_and_bound
from .bounds import propagate_bounds
from .model import MilpModel, Threshold, activation_pattern, forward_layers, unit_layers
from .simplex import solve_lp

MARGIN = 3.0


def corner_threshold(corner_class, delta):
    """Crossing condition for a corner of the given predicted class, or None to skip."""
    cls = StabilityClass(corner_class)
    if cls == StabilityClass.STABLE:
        return Threshold("le", MARGIN + delta)
    if cls == StabilityClass.UNSTABLE:
        return Threshold("ge", MARGIN - delta)
    return None


def verify_point(layers, anchor, threshold, free_dims=(0, 1, 2, 3), node_limit=1_000_000):
    """Smallest infinity-norm distance from ``anchor`` to a threshold crossing."""
    t0 = time.perf_counter()
    model = MilpModel(layers, anchor, free_dims, threshold)
    res = branch_and_bound(model, node_limit=node_limit)
    wall = time.perf_counter() - t0
    common = dict(anchor=np.asarray(anchor, float), threshold=threshold.value, sense=threshold.sense,
                  nodes=res.nodes, wall_time=wall)
    if res.status == "infeasible":
        return Certificate(1.0, None, "infeasible_in_box", lower_bound=1.0, **common)
    if res.status in ("node_limit", "lp_limit"):
        return Certificate(res.value, res.x, "solver_limit", lower_bound=res.lower_bound, **common)
    return Certificate(res.value, res.x, "certified", lower_bound=res.lower_bound, **common)


def verify_corner(net, corner, corner_class=None, delta=0.25, node_limit=1_000_000, layers=None):
    """Certified distance from a unit-box corner to the (3 +/- delta)% crossing.

    ``corner_class`` defaults to the class of the network's prediction at
    the corner.  Corners predicted MStable, Marginal or MUnstable are
    skipped.
    """
    layers = unit_layers(net) if layers is None else layers
    corner = np.asarray(corner, dtype=float)
    if corner_class is None:
        corner_class = classify(forward_layers(layers, corner)[0])
    thr = corner_threshold(corner_class, delta)
    if thr is None:
        return Certificate(0.0, None, "skipped_marginal", anchor=corner, delta=delta,
                           extra={"corner_class": StabilityClass(corner_class).label})
    cert = verify_point(layers, corner, thr, node_limit=node_limit)
    cert.delta = delta
    cert.extra["corner_class"] = StabilityClass(corner_class).label
    return cert


def check_forward_consistency(net, u, bounds=None, layers=None, exhaustive=False):
    """Max |MILP output - forward output| with the input pinned at ``u``.

    The encoding uses interval bounds over the whole unit box (or the
    supplied ``bounds``), i.e. the big-M constants verification relies on.
    The output is minimized and maximized over the feasible set.  By
    default the binaries are pinned to the forward activation pattern
    through their variable bounds, so each big-M row is still checked
    against the true pre-activations; ``exhaustive`` leaves them free and
    runs branch-and-bound, which also proves no other pattern is feasible.
    Returns the deviation in standardized output units.
    """
    layers = unit_layers(net) if layers is None else layers
    u = np.asarray(u, dtype=float)
    if bounds is None:
        bounds = propagate_bounds(layers, np.zeros(u.size), np.ones(u.size))
    ref = forward_layers(layers, u)[0]
    pattern = activation_pattern(layers, u)
    dev = 0.0
    for sign in (1.0, -1.0):
        model = MilpModel(layers, u, free_dims=(), objective=("output", sign))
        if exhaustive:
            res = branch_and_bound(model, refine_bounds=False, bounds=bounds, layer_first=True)
            status, value = res.status, res.value
        else:
            build = model.build(bounds=bounds, pin=pattern)
            lp = solve_lp(build.lp) if build is not None else None
            status = "optimal" if lp is not None and lp.ok else "infeasible"
            value = lp.fun + build.offset if status == "optimal" else np.nan
        if status != "optimal":
            raise EncodingError(f"MILP with input fixed at {u} is {status}")
        dev = max(dev, abs(sign * value - ref))
    return dev / net.standardizer.sigma_y
