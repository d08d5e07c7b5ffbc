"""Dense ReLU MLP kernels on a flat parameter vector.

Layer ``l`` (1-based) stores ``W_l`` (``widths[l] x widths[l-1]``, row-major)
followed by ``b_l``.  Activations are kept feature-major, shape
``(width, N)``.  Input tangents are kept as ``(width, 4N)`` with column
``i*N + n`` holding d(unit)/d(input i) for sample ``n``.
"""
import numpy as np

from ._accel import njit


def layer_offsets(widths):
    widths = np.asarray(widths, dtype=np.int64)
    off = np.zeros(len(widths), dtype=np.int64)
    pos = 0
    for l in range(1, len(widths)):
        off[l] = pos
        pos += widths[l] * widths[l - 1] + widths[l]
    off[0] = pos  # total parameter count
    return off


@njit(cache=True)
def _layer(theta, widths, offsets, l):
    n_out = widths[l]
    n_in = widths[l - 1]
    s = offsets[l]
    W = theta[s:s + n_out * n_in].reshape((n_out, n_in))
    b = theta[s + n_out * n_in:s + n_out * n_in + n_out]
    return W, b


@njit(cache=True)
def _tile(m, reps):
    n = m.shape[1]
    out = np.empty((m.shape[0], n * reps))
    for r in range(reps):
        out[:, r * n:(r + 1) * n] = m
    return out


@njit(cache=True)
def forward_kernel(theta, widths, offsets, X):
    L = widths.shape[0] - 1
    a = np.ascontiguousarray(X.T)
    for l in range(1, L + 1):
        W, b = _layer(theta, widths, offsets, l)
        h = W @ a + b.reshape((-1, 1))
        if l < L:
            a = np.maximum(h, 0.0)
        else:
            a = h
    return a[0].copy()


@njit(cache=True)
def jacobian_kernel(theta, widths, offsets, X):
    """Returns (prediction (N,), input Jacobian (N, d))."""
    L = widths.shape[0] - 1
    N = X.shape[0]
    d = X.shape[1]
    a = np.ascontiguousarray(X.T)
    T = np.zeros((d, d * N))
    for i in range(d):
        T[i, i * N:(i + 1) * N] = 1.0
    for l in range(1, L + 1):
        W, b = _layer(theta, widths, offsets, l)
        h = W @ a + b.reshape((-1, 1))
        U = W @ T
        if l < L:
            m = (h > 0.0).astype(np.float64)
            a = h * m
            T = U * _tile(m, d)
        else:
            a = h
            T = U
    return a[0].copy(), np.ascontiguousarray(T[0].reshape((d, N)).T)


@njit(cache=True)
def objective_kernel(theta, widths, offsets, X, y, G, alpha_j, with_grad):
    """Value loss, Jacobian loss and (optionally) d(Ly + alpha_j*LJ)/d(theta).

    Ly = mean (pred - y)^2, LJ = mean ||J - G||^2.  The Jacobian path is
    only evaluated when ``alpha_j > 0`` or ``G`` is non-empty and gradients
    are not requested.
    """
    L = widths.shape[0] - 1
    N = X.shape[0]
    d = X.shape[1]
    need_t = G.shape[0] == N
    a = np.ascontiguousarray(X.T)
    acts = [a]
    masks = [a]
    tans = [a]
    if need_t:
        T = np.zeros((d, d * N))
        for i in range(d):
            T[i, i * N:(i + 1) * N] = 1.0
    else:
        T = np.zeros((1, 1))
    tans[0] = T
    for l in range(1, L + 1):
        W, b = _layer(theta, widths, offsets, l)
        h = W @ a + b.reshape((-1, 1))
        if l < L:
            m = (h > 0.0).astype(np.float64)
            a = h * m
            if need_t:
                T = (W @ T) * _tile(m, d)
        else:
            m = np.ones_like(h)
            a = h
            if need_t:
                T = W @ T
        acts.append(a)
        masks.append(m)
        tans.append(T)
    r = a[0] - y
    ly = np.sum(r * r) / N
    lj = 0.0
    Ejac = np.zeros((1, 1))
    if need_t:
        Gt = np.ascontiguousarray(G.T).reshape((1, d * N))
        dj = T - Gt
        lj = np.sum(dj * dj) / N
        Ejac = alpha_j * 2.0 * dj / N
    grad = np.zeros_like(theta)
    if not with_grad:
        return ly, lj, grad
    delta = (2.0 * r / N).reshape((1, N))
    use_t = need_t and alpha_j > 0.0
    Th = Ejac
    for l in range(L, 0, -1):
        W, b = _layer(theta, widths, offsets, l)
        n_out = widths[l]
        n_in = widths[l - 1]
        gW = delta @ np.ascontiguousarray(acts[l - 1].T)
        if use_t:
            gW += Th @ np.ascontiguousarray(tans[l - 1].T)
        s = offsets[l]
        grad[s:s + n_out * n_in] = gW.ravel()
        grad[s + n_out * n_in:s + n_out * n_in + n_out] = delta.sum(axis=1)
        if l > 1:
            Wt = np.ascontiguousarray(W.T)
            delta = (Wt @ delta) * masks[l - 1]
            if use_t:
                Th = (Wt @ Th) * _tile(masks[l - 1], d)
    return ly, lj, grad
