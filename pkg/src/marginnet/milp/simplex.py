"""Dense bounded-variable primal simplex.

Entering columns are priced by largest reduced cost; after a run of
degenerate pivots the solve switches to Bland's rule for the rest of the
phase, which rules out cycling.

Solves ``min c.x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lb <= x <= ub``
with finite lower bounds.  Upper bounds are handled implicitly (nonbasic
variables sit at either bound), so box constraints never become rows.
"""
from dataclasses import dataclass

import numpy as np

from .._accel import njit

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = 0, 1, 2, 3
STATUS_NAMES = {OPTIMAL: "optimal", INFEASIBLE: "infeasible", UNBOUNDED: "unbounded",
                ITERATION_LIMIT: "iteration_limit"}

FEAS_TOL = 1e-7
OPT_TOL = 1e-9
PIVOT_TOL = 1e-9
STALL_LIMIT = 50  # degenerate pivots in a row before switching to Bland's rule


def _matrix(A, n):
    if A is None:
        return np.zeros((0, n))
    A = np.asarray(A, dtype=float)
    return A if A.ndim == 2 else A.reshape(-1, n)


@dataclass
class LP:
    c: np.ndarray
    A_ub: np.ndarray = None
    b_ub: np.ndarray = None
    A_eq: np.ndarray = None
    b_eq: np.ndarray = None
    lb: np.ndarray = None
    ub: np.ndarray = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.A_ub = _matrix(self.A_ub, n)
        self.b_ub = np.zeros(0) if self.b_ub is None else np.asarray(self.b_ub, dtype=float).ravel()
        self.A_eq = _matrix(self.A_eq, n)
        self.b_eq = np.zeros(0) if self.b_eq is None else np.asarray(self.b_eq, dtype=float).ravel()
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if np.any(~np.isfinite(self.lb)):
            raise ValueError("every variable needs a finite lower bound")

    @property
    def n(self):
        return self.c.size


@dataclass
class LPResult:
    status: int
    x: np.ndarray
    fun: float
    iterations: int

    @property
    def status_name(self):
        return STATUS_NAMES[self.status]

    @property
    def ok(self):
        return self.status == OPTIMAL


@njit(cache=True)
def _pivot(T, r, q):
    m, w = T.shape
    inv = 1.0 / T[r, q]
    for k in range(w):
        T[r, k] *= inv
    T[r, q] = 1.0
    for i in range(m):
        if i == r:
            continue
        f = T[i, q]
        if f != 0.0:
            for k in range(w):
                T[i, k] -= f * T[r, k]
            T[i, q] = 0.0


@njit(cache=True)
def _basic_values(T, u, at_upper, is_basic, n_cols):
    beta = T[:, n_cols].copy()
    for j in range(n_cols):
        if at_upper[j] and not is_basic[j]:
            beta -= u[j] * T[:, j]
    return beta


@njit(cache=True)
def _iterate(T, d, basis, is_basic, at_upper, u, beta, max_iter, it0, art0=-1, art_tol=0.0):
    """Primal simplex iterations on tableau ``T`` (last column = B^-1 b).

    In phase 1 (``art0 >= 0``, artificials are columns ``art0..``) the loop
    stops as soon as the basic artificials sum to at most ``art_tol``.
    """
    m = T.shape[0]
    n_cols = T.shape[1] - 1
    it = it0
    bland = False
    stall = 0
    while True:
        if art0 >= 0:
            infeas = 0.0
            for i in range(m):
                if basis[i] >= art0:
                    infeas += abs(beta[i])
            if infeas <= art_tol:
                return OPTIMAL, it
        if it >= max_iter:
            return ITERATION_LIMIT, it
        q = -1
        best = 0.0
        for j in range(n_cols):
            if is_basic[j] or u[j] <= 0.0:
                continue
            if not at_upper[j] and d[j] < -OPT_TOL:
                score = -d[j]
            elif at_upper[j] and d[j] > OPT_TOL:
                score = d[j]
            else:
                continue
            if bland:
                q = j
                break
            if score > best:
                best = score
                q = j
        if q < 0:
            return OPTIMAL, it
        direction = 1.0 if not at_upper[q] else -1.0
        t_best = u[q]
        r = -1
        r_to_upper = False
        r_var = n_cols + 1
        r_piv = 0.0
        for i in range(m):
            a = direction * T[i, q]
            if a > PIVOT_TOL:
                t = max(beta[i], 0.0) / a
                to_upper = False
            elif a < -PIVOT_TOL and u[basis[i]] < np.inf:
                t = max(u[basis[i]] - beta[i], 0.0) / (-a)
                to_upper = True
            else:
                continue
            # ties: smallest variable index under Bland, else the largest pivot
            tie = r >= 0 and abs(t - t_best) <= 1e-12
            if t < t_best - 1e-12 or (tie and (basis[i] < r_var if bland else abs(a) > r_piv)):
                t_best = t
                r = i
                r_to_upper = to_upper
                r_var = basis[i]
                r_piv = abs(a)
        if r < 0 and t_best == np.inf:
            return UNBOUNDED, it
        if t_best <= 1e-12:
            stall += 1
            if stall > STALL_LIMIT:
                bland = True
        else:
            stall = 0
        step = direction * t_best
        for i in range(m):
            beta[i] -= step * T[i, q]
        if r < 0:
            at_upper[q] = not at_upper[q]
        else:
            enter_val = t_best if direction > 0 else u[q] - t_best
            leave = basis[r]
            _pivot(T, r, q)
            dq = d[q]
            if dq != 0.0:
                for k in range(n_cols):
                    d[k] -= dq * T[r, k]
            d[q] = 0.0
            is_basic[leave] = False
            at_upper[leave] = r_to_upper
            is_basic[q] = True
            at_upper[q] = False
            basis[r] = q
            beta[r] = enter_val
        it += 1
        if it % 64 == 0:
            beta[:] = _basic_values(T, u, at_upper, is_basic, n_cols)


@njit(cache=True)
def _reduced_costs(T, cost, basis):
    n_cols = T.shape[1] - 1
    cb = np.empty(T.shape[0])
    for i in range(T.shape[0]):
        cb[i] = cost[basis[i]]
    return cost[:n_cols] - cb @ np.ascontiguousarray(T[:, :n_cols])


@njit(cache=True)
def simplex_standard(A, b, c, u, basis0, max_iter):
    """``min c.x, A x = b (b >= 0), 0 <= x <= u``.

    ``basis0[i]`` names a column equal to the i-th unit vector, or -1 when
    row ``i`` needs an artificial.  Returns (status, x, objective, iterations).
    """
    m, n = A.shape
    n_art = 0
    for i in range(m):
        if basis0[i] < 0:
            n_art += 1
    nt = n + n_art
    T = np.zeros((m, nt + 1))
    T[:, :n] = A
    T[:, nt] = b
    uu = np.empty(nt)
    uu[:n] = u
    uu[n:] = np.inf
    basis = np.empty(m, dtype=np.int64)
    is_basic = np.zeros(nt, dtype=np.bool_)
    at_upper = np.zeros(nt, dtype=np.bool_)
    k = n
    for i in range(m):
        if basis0[i] >= 0:
            basis[i] = basis0[i]
        else:
            T[i, k] = 1.0
            basis[i] = k
            k += 1
        is_basic[basis[i]] = True
    beta = b.copy()
    it = 0
    if n_art > 0:
        c1 = np.zeros(nt)
        c1[n:] = 1.0
        d = _reduced_costs(T, c1, basis)
        tol = FEAS_TOL * max(1.0, np.abs(b).max())
        status, it = _iterate(T, d, basis, is_basic, at_upper, uu, beta, max_iter, it, n, 0.1 * tol)
        if status == ITERATION_LIMIT:
            return status, np.zeros(n), np.nan, it
        beta = _basic_values(T, uu, at_upper, is_basic, nt)
        infeas = 0.0
        for i in range(m):
            if basis[i] >= n:
                infeas += abs(beta[i])
        if infeas > tol:
            return INFEASIBLE, np.zeros(n), np.nan, it
        for r in range(m):
            if basis[r] < n:
                continue
            best = -1
            best_abs = PIVOT_TOL
            for j in range(n):
                if not is_basic[j] and abs(T[r, j]) > best_abs:
                    best = j
                    best_abs = abs(T[r, j])
            if best >= 0:
                val = uu[best] if at_upper[best] else 0.0
                leave = basis[r]
                _pivot(T, r, best)
                is_basic[leave] = False
                at_upper[leave] = False
                is_basic[best] = True
                at_upper[best] = False
                basis[r] = best
                beta[r] = val
        uu[n:] = 0.0
        beta = _basic_values(T, uu, at_upper, is_basic, nt)
    c2 = np.zeros(nt)
    c2[:n] = c
    d = _reduced_costs(T, c2, basis)
    status, it = _iterate(T, d, basis, is_basic, at_upper, uu, beta, max_iter, it)
    beta = _basic_values(T, uu, at_upper, is_basic, nt)
    x = np.zeros(nt)
    for j in range(nt):
        if at_upper[j] and not is_basic[j]:
            x[j] = uu[j]
    for i in range(m):
        x[basis[i]] = beta[i]
    xs = x[:n].copy()
    if status != OPTIMAL:
        return status, xs, np.nan, it
    return OPTIMAL, xs, float(c @ xs), it


def to_standard_form(lp):
    """Shift to zero lower bounds, add slacks, flip rows to non-negative rhs."""
    n = lp.n
    shift = lp.lb
    u = lp.ub - lp.lb
    if np.any(u < -FEAS_TOL):
        return None
    u = np.maximum(u, 0.0)
    m_ub, m_eq = lp.A_ub.shape[0], lp.A_eq.shape[0]
    m = m_ub + m_eq
    A = np.zeros((m, n + m_ub))
    b = np.zeros(m)
    basis0 = np.full(m, -1, dtype=np.int64)
    A[:m_ub, :n] = lp.A_ub
    A[:m_ub, n:] = np.eye(m_ub)
    b[:m_ub] = lp.b_ub - lp.A_ub @ shift
    A[m_ub:, :n] = lp.A_eq
    b[m_ub:] = lp.b_eq - lp.A_eq @ shift
    for i in range(m):
        if b[i] < 0:
            A[i] *= -1.0
            b[i] *= -1.0
        elif i < m_ub:
            basis0[i] = n + i
    c = np.concatenate([lp.c, np.zeros(m_ub)])
    uu = np.concatenate([u, np.full(m_ub, np.inf)])
    return A, b, c, uu, basis0, shift


def solve_lp(lp, max_iter=100_000):
    std = to_standard_form(lp)
    if std is None:
        return LPResult(INFEASIBLE, np.full(lp.n, np.nan), np.nan, 0)
    A, b, c, u, basis0, shift = std
    status, x, _, it = simplex_standard(np.ascontiguousarray(A), b, c, u, basis0, max_iter)
    xs = x[:lp.n] + shift
    fun = float(lp.c @ xs) if status == OPTIMAL else np.nan
    return LPResult(int(status), xs, fun, int(it))
