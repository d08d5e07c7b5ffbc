"""Certified regions in one coordinate pair with the other pair held fixed.

A droop query fixes the power set points and certifies a ball of droop
gains around an anchor; a power query does the reverse.  Distances are in
unit-hypercube coordinates of the free pair.
"""
import csv
import json
from dataclasses import dataclass

import numpy as np

from .milp.bnb import Certificate
from .milp.model import Threshold, forward_layers, unit_layers
from .milp.verify import MARGIN, verify_point
from .sampling import Hypercube

PAIRS = {"power": (0, 1), "droop": (2, 3)}


@dataclass(frozen=True)
class EmbeddingQuery:
    """``free`` names the pair being certified ("droop" or "power").

    ``fixed`` holds the physical values of the other pair, ``anchor`` the
    physical center of the free pair.
    """

    free: str
    fixed: tuple
    anchor: tuple
    delta: float = 0.25

    def __post_init__(self):
        if self.free not in PAIRS:
            raise ValueError(f"free pair must be one of {sorted(PAIRS)}")
        if len(self.fixed) != 2 or len(self.anchor) != 2:
            raise ValueError("fixed and anchor take two values each")
        if self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def free_dims(self):
        return PAIRS[self.free]

    @property
    def fixed_dims(self):
        return PAIRS["power" if self.free == "droop" else "droop"]

    def point(self):
        x = np.empty(4)
        x[list(self.free_dims)] = self.anchor
        x[list(self.fixed_dims)] = self.fixed
        return x

    def unit_anchor(self, cube):
        x = self.point()
        if not cube.contains(x):
            raise ValueError(f"query point {x} lies outside the operating box")
        return cube.to_unit(x)

    @property
    def threshold(self):
        return Threshold("le", MARGIN + self.delta)


def verify_region(net, q, node_limit=1_000_000, layers=None):
    """Distance from the anchor to the nearest predicted ``<= 3 + delta`` point in the free plane."""
    layers = unit_layers(net) if layers is None else layers
    u0 = q.unit_anchor(net.cube)
    thr = q.threshold
    pred = float(forward_layers(layers, u0)[0])
    if pred < thr.value:
        cert = Certificate(0.0, None, "infeasible_anchor", anchor=u0, threshold=thr.value, sense=thr.sense)
    else:
        cert = verify_point(layers, u0, thr, free_dims=q.free_dims, node_limit=node_limit)
    cert.delta = q.delta
    cert.extra.update(free=q.free, anchor_prediction=pred,
                      fixed=[float(v) for v in q.fixed], anchor_physical=[float(v) for v in q.anchor])
    return cert


def verify_droop_region(net, q, **kw):
    if q.free != "droop":
        raise ValueError("droop region query must leave the droop pair free")
    return verify_region(net, q, **kw)


def verify_power_region(net, q, **kw):
    if q.free != "power":
        raise ValueError("power region query must leave the power pair free")
    return verify_region(net, q, **kw)


def contour_grid(net, q, resolution, layers=None):
    """``resolution**2`` predictions over the free unit square; rows ``(u, v, zeta_hat, acceptable)``."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    layers = unit_layers(net) if layers is None else layers
    u0 = q.unit_anchor(net.cube)
    axis = np.linspace(0.0, 1.0, resolution)
    uu, vv = np.meshgrid(axis, axis, indexing="ij")
    U = np.tile(u0, (resolution * resolution, 1))
    i, j = q.free_dims
    U[:, i] = uu.ravel()
    U[:, j] = vv.ravel()
    pred = forward_layers(layers, U)
    acceptable = pred > q.threshold.value
    return uu.ravel(), vv.ravel(), pred, acceptable


def export_contour_grid(net, q, resolution, csv_path, cert=None, json_path=None, layers=None):
    """Write the grid CSV and, when given, the certificate (its witness marks the class change)."""
    u, v, pred, ok = contour_grid(net, q, resolution, layers)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["u", "v", "zeta_hat", "acceptable"])
        for row in zip(u, v, pred, ok):
            w.writerow([repr(float(row[0])), repr(float(row[1])), repr(float(row[2])), int(row[3])])
    if cert is not None and json_path is not None:
        d = cert.to_dict()
        if cert.witness is not None:
            i, j = q.free_dims
            d["change_point"] = {"u": float(cert.witness[i]), "v": float(cert.witness[j]),
                                 "physical": [float(x) for x in net.cube.from_unit(cert.witness)]}
        with open(json_path, "w") as fh:
            json.dump(d, fh, indent=1, sort_keys=True)
    return u, v, pred, ok


def default_query(free, delta=0.25, cube=None):
    """Query anchored at the box center of both pairs."""
    cube = cube or Hypercube()
    mid = 0.5 * (cube.lower + cube.upper)
    other = "power" if free == "droop" else "droop"
    return EmbeddingQuery(free, tuple(mid[list(PAIRS[other])]), tuple(mid[list(PAIRS[free])]), delta)
