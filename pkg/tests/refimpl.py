"""Independent reference solvers for the MILP tests (scipy HiGHS based)."""
import itertools

import numpy as np
from scipy.optimize import linprog


def region_rows(layers, pattern_prefix, n_in=4):
    """Rows ``A [u, eps] <= b`` forcing the activation signs in ``pattern_prefix``.

    ``pattern_prefix`` is a flat tuple of 0/1 in layer order, possibly partial.
    Also returns the affine output map ``(e, c)`` when the prefix is complete.
    """
    E = np.hstack([np.eye(n_in), np.zeros((n_in, 1))])
    c = np.zeros(n_in)
    A, b = [], []
    k = 0
    for W, bb in layers[:-1]:
        Eh, ch = W @ E, W @ c + bb
        act = np.zeros(W.shape[0])
        for j in range(W.shape[0]):
            if k == len(pattern_prefix):
                return A, b, None
            if pattern_prefix[k]:
                A.append(-Eh[j])
                b.append(ch[j])
                act[j] = 1
            else:
                A.append(Eh[j])
                b.append(-ch[j])
            k += 1
        E, c = Eh * act[:, None], ch * act
    W, bb = layers[-1]
    return A, b, ((W @ E)[0], (W @ c + bb)[0])


def _lp(cost, A, b, n_in=4):
    bounds = [(0, 1)] * n_in + [(0, 1)]
    res = linprog(cost, A_ub=np.array(A) if A else None, b_ub=np.array(b) if b else None,
                  bounds=bounds, method="highs")
    return res


def feasible_patterns(layers, n_in=4):
    """Every activation pattern realised by some u in the unit box.

    Depth-first over neurons; a prefix whose sign constraints are already
    infeasible is dropped together with all its completions.
    """
    n_hidden = sum(W.shape[0] for W, _ in layers[:-1])
    out = []
    cost = np.zeros(n_in + 1)

    def dfs(prefix):
        A, b, _ = region_rows(layers, prefix, n_in)
        if A and _lp(cost, A, b, n_in).status != 0:
            return
        if len(prefix) == n_hidden:
            out.append(prefix)
            return
        dfs(prefix + (0,))
        dfs(prefix + (1,))

    dfs(())
    return out


def min_distance(layers, anchor, sense, value, free_dims=(0, 1, 2, 3), patterns=None, n_in=4):
    """Exact min infinity-norm distance to ``out <= value`` (le) / ``>= value`` (ge); inf if none."""
    patterns = feasible_patterns(layers, n_in) if patterns is None else patterns
    best = np.inf
    for p in patterns:
        A, b, (e, c) = region_rows(layers, p, n_in)
        if sense == "le":
            A = A + [e]
            b = b + [value - c]
        else:
            A = A + [-e]
            b = b + [c - value]
        for k in range(n_in):
            up, down = np.zeros(n_in + 1), np.zeros(n_in + 1)
            up[k], down[k] = 1.0, -1.0
            if k in free_dims:  # |u_k - a_k| <= eps
                up[n_in] = down[n_in] = -1.0
            A, b = A + [up, down], b + [anchor[k], -anchor[k]]
        res = _lp(np.r_[np.zeros(n_in), 1.0], A, b, n_in)
        if res.status == 0:
            best = min(best, res.fun)
    return best


def all_patterns(sizes):
    return [sum(p, ()) for p in itertools.product(*(itertools.product((0, 1), repeat=k) for k in sizes))]
