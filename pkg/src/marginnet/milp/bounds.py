"""Interval bounds on pre-activations over an input box."""
from dataclasses import dataclass

import numpy as np

FREE, INACTIVE, ACTIVE = -1, 0, 1


@dataclass
class NeuronBounds:
    """Per hidden layer pre-activation intervals, plus the output interval."""

    zhat_min: list
    zhat_max: list
    out_min: np.ndarray = None
    out_max: np.ndarray = None
    feasible: bool = True

    def n_unstable(self, fixings=None):
        total = 0
        for l, (lo, hi) in enumerate(zip(self.zhat_min, self.zhat_max)):
            free = (lo < 0) & (hi > 0)
            if fixings is not None:
                free &= fixings[l] == FREE
            total += int(free.sum())
        return total

    def copy(self):
        return NeuronBounds([a.copy() for a in self.zhat_min], [a.copy() for a in self.zhat_max],
                            None if self.out_min is None else self.out_min.copy(),
                            None if self.out_max is None else self.out_max.copy(), self.feasible)


def affine_interval(W, b, lo, hi):
    """Exact range of ``W x + b`` over the box ``[lo, hi]`` (sign-split weights)."""
    Wp = np.maximum(W, 0.0)
    Wn = np.minimum(W, 0.0)
    return Wp @ lo + Wn @ hi + b, Wp @ hi + Wn @ lo + b


def propagate_bounds(layers, lo, hi, fixings=None):
    """Layer-by-layer interval arithmetic through ReLU hidden layers.

    ``layers`` is a list of ``(W, b)``; the last entry is the affine output.
    ``fixings[l][j]`` may force hidden neuron ``j`` of layer ``l`` inactive
    (0) or active (1); a fixing that contradicts the interval marks the
    result infeasible.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    zmin, zmax = [], []
    feasible = True
    for l, (W, b) in enumerate(layers[:-1]):
        zl, zh = affine_interval(W, b, lo, hi)
        zmin.append(zl)
        zmax.append(zh)
        lo = np.maximum(zl, 0.0)
        hi = np.maximum(zh, 0.0)
        if fixings is not None:
            fx = fixings[l]
            off = fx == INACTIVE
            on = fx == ACTIVE
            if np.any(zl[off] > 0.0) or np.any(zh[on] < 0.0):
                feasible = False
            lo = np.where(off, 0.0, lo)
            hi = np.where(off, 0.0, hi)
    W, b = layers[-1]
    ol, oh = affine_interval(W, b, lo, hi)
    return NeuronBounds(zmin, zmax, ol, oh, feasible)


def _relaxation(zl, zh, fx):
    """Slopes of linear lower/upper envelopes of ReLU on [zl, zh].

    Returns (a_lo, a_up, c_up) with ``a_lo*zhat <= relu(zhat) <= a_up*zhat + c_up``.
    """
    a_lo = np.zeros_like(zl)
    a_up = np.zeros_like(zl)
    c_up = np.zeros_like(zl)
    on = ((zl >= 0.0) & (fx != INACTIVE)) | (fx == ACTIVE)
    amb = (zl < 0.0) & (zh > 0.0) & (fx == FREE)
    a_lo[on] = a_up[on] = 1.0
    s = zh[amb] / (zh[amb] - zl[amb])
    a_up[amb] = s
    c_up[amb] = -s * zl[amb]
    a_lo[amb] = (zh[amb] >= -zl[amb]).astype(float)
    return a_lo, a_up, c_up


def _back_substitute(A, c, relax, layers, k, lo, hi):
    """Lower and upper bounds of ``A z + c`` where ``z`` is the input of layer ``k``."""
    Au, cu, Al, cl = A, c.copy(), A, c.copy()
    for j in range(k - 1, -1, -1):
        a_lo, a_up, c_up = relax[j]
        W, b = layers[j]
        P, N = np.maximum(Au, 0.0), np.minimum(Au, 0.0)
        cu = cu + P @ c_up
        Au = P * a_up + N * a_lo
        cu = cu + Au @ b
        Au = Au @ W
        P, N = np.maximum(Al, 0.0), np.minimum(Al, 0.0)
        cl = cl + N @ c_up
        Al = P * a_lo + N * a_up
        cl = cl + Al @ b
        Al = Al @ W
    low = np.maximum(Al, 0.0) @ lo + np.minimum(Al, 0.0) @ hi + cl
    up = np.maximum(Au, 0.0) @ hi + np.minimum(Au, 0.0) @ lo + cu
    return low, up


def linear_bounds(layers, lo, hi, fixings=None):
    """Interval bounds tightened by back-substituted linear ReLU envelopes.

    Each pre-activation is bounded by both interval arithmetic and a linear
    function of the input (from triangle/zero-or-identity envelopes of the
    earlier ReLUs), and the tighter of the two is kept.  Fixed neurons use
    their phase: identity when active, zero when inactive.
    """
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n_hidden = len(layers) - 1
    fixings = fixings if fixings is not None else [np.full(W.shape[0], FREE, np.int8) for W, _ in layers[:-1]]
    zmin, zmax, relax = [], [], []
    feasible = True
    a_lo_prev, a_hi_prev = lo, hi  # interval of the current layer input
    for l, (W, b) in enumerate(layers):
        il, ih = affine_interval(W, b, a_lo_prev, a_hi_prev)
        if l > 0:
            sl, sh = _back_substitute(W, b, relax, layers, l, lo, hi)
            il, ih = np.maximum(il, sl), np.minimum(ih, sh)
        if l == n_hidden:
            return NeuronBounds(zmin, zmax, il, ih, feasible)
        fx = fixings[l]
        if np.any(il[fx == INACTIVE] > 0.0) or np.any(ih[fx == ACTIVE] < 0.0) or np.any(il > ih + 1e-9):
            feasible = False
        zmin.append(il)
        zmax.append(ih)
        # the node's phase constraints restrict the effective range
        el = np.where(fx == ACTIVE, np.maximum(il, 0.0), il)
        eh = np.where(fx == INACTIVE, np.minimum(ih, 0.0), ih)
        relax.append(_relaxation(el, eh, fx))
        a_lo_prev = np.where(fx == INACTIVE, 0.0, np.maximum(el, 0.0))
        a_hi_prev = np.where(fx == INACTIVE, 0.0, np.maximum(eh, 0.0))
