"""Analytic N-1 damping oracle.

Each of the five turbine-loss contingencies yields a 4x4 block-diagonal
state matrix made of two companion blocks (modes A and B)::

    B_m = [[0, 1], [-k_m, -d_m]]

The eigenvalues of a block are ``-d/2 +/- j*sqrt(k - d^2/4)``, so for the
complex pair ``sigma^2 + omega^2 = k`` and the damping ratio is
``50 d / sqrt(k)`` percent.  The security margin is the minimum over all
contingencies and both modes.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateModeError, DomainError

LOWER = np.array([0.0, -0.5, 0.0, 0.0])
UPPER = np.array([2.0, 0.5, 75.0, 50.0])
INPUT_NAMES = ("p_ref", "q_ref", "k_pf", "k_v")

N_CONTINGENCIES = 5
MODES = ("A", "B")
DEGENERATE_TOL = 1e-9
_BOUND_SLACK = 1e-12


@dataclass(frozen=True)
class OperatingPoint:
    p_ref: float
    q_ref: float
    k_pf: float
    k_v: float

    def as_array(self):
        return np.array([self.p_ref, self.q_ref, self.k_pf, self.k_v], dtype=float)

    @classmethod
    def from_array(cls, x):
        return cls(*(float(v) for v in x))


@dataclass(frozen=True)
class Contingency:
    index: int

    def __post_init__(self):
        if not 1 <= self.index <= N_CONTINGENCIES:
            raise DomainError(f"contingency index {self.index} not in 1..{N_CONTINGENCIES}")

    @property
    def severity(self):
        return 1.0 + 0.05 * self.index


CONTINGENCIES = tuple(Contingency(i) for i in range(1, N_CONTINGENCIES + 1))


@dataclass(frozen=True)
class EigenPair:
    sigma: float
    omega: float


@dataclass(frozen=True)
class DampingResult:
    zeta_c: float
    binding_contingency: int
    binding_mode: str
    gradient: np.ndarray
    degenerate: bool = False


def _as_point(x):
    if isinstance(x, OperatingPoint):
        x = x.as_array()
    x = np.asarray(x, dtype=float)
    if x.shape != (4,):
        raise DomainError(f"operating point must have 4 entries, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise DomainError("operating point has non-finite entries")
    if np.any(x < LOWER - _BOUND_SLACK) or np.any(x > UPPER + _BOUND_SLACK):
        raise DomainError(f"operating point {x} outside the hypercube")
    return x


def _as_contingency(c):
    return c if isinstance(c, Contingency) else Contingency(int(c))


def block_coefficients(x, c):
    """(d_A, k_A, d_B, k_B) for point ``x`` under contingency ``c``."""
    x = _as_point(x)
    rho = _as_contingency(c).severity
    p = rho * x[0]
    q = x[1]
    k_pf, k_v = x[2], x[3]
    d_a = 0.20 + 0.012 * k_pf - 0.12 * p * p - 0.08 * p * q - 0.03 * q
    k_a = 1.0 + 0.02 * k_v + 0.05 * q - 0.002 * p * k_v
    d_b = 0.5 + 0.004 * k_v - 0.02 * p * q
    k_b = 25.0 + 0.1 * k_pf
    return d_a, k_a, d_b, k_b


def block_coefficient_derivatives(x, c):
    """Rows are d(d_A), d(k_A), d(d_B), d(k_B); columns the four inputs."""
    x = _as_point(x)
    rho = _as_contingency(c).severity
    p = rho * x[0]
    q = x[1]
    k_v = x[3]
    return np.array([
        [rho * (-0.24 * p - 0.08 * q), -0.08 * p - 0.03, 0.012, 0.0],
        [-0.002 * rho * k_v, 0.05, 0.0, 0.02 - 0.002 * p],
        [-0.02 * rho * q, -0.02 * p, 0.0, 0.004],
        [0.0, 0.0, 0.1, 0.0],
    ])


def _companion(d, k):
    return np.array([[0.0, 1.0], [-k, -d]])


def state_matrix(x, c):
    d_a, k_a, d_b, k_b = block_coefficients(x, c)
    a = np.zeros((4, 4))
    a[:2, :2] = _companion(d_a, k_a)
    a[2:, 2:] = _companion(d_b, k_b)
    return a


def state_matrix_derivative(x, c, i):
    """Analytic dA/dx_i."""
    deriv = block_coefficient_derivatives(x, c)[:, i]
    da = np.zeros((4, 4))
    da[1, 0], da[1, 1] = -deriv[1], -deriv[0]
    da[3, 2], da[3, 3] = -deriv[3], -deriv[2]
    return da


def damping_ratio(lam):
    if not isinstance(lam, EigenPair):
        lam = EigenPair(float(np.real(lam)), float(np.imag(lam)))
    mag = np.hypot(lam.sigma, lam.omega)
    if mag == 0.0:
        raise DomainError("damping ratio undefined at the origin")
    return -100.0 * lam.sigma / mag


def _mode_index(mode):
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    return MODES.index(mode)


def _mode_coefficients(x, c, mode):
    coeffs = block_coefficients(x, c)
    m = _mode_index(mode)
    return coeffs[2 * m], coeffs[2 * m + 1]


def _zeta_from_block(d, k):
    root = np.sqrt(k)
    if d >= 2.0 * root:
        return 100.0
    if d <= -2.0 * root:
        return -100.0
    return 50.0 * d / root


def mode_damping(x, c, mode):
    d, k = _mode_coefficients(x, c, mode)
    return float(_zeta_from_block(d, k))


def mode_eigenpair(x, c, mode):
    """Eigenvalue of the block with omega >= 0 (the larger real root if overdamped)."""
    d, k = _mode_coefficients(x, c, mode)
    disc = d * d / 4.0 - k
    if disc < 0.0:
        return EigenPair(-d / 2.0, float(np.sqrt(-disc)))
    return EigenPair(-d / 2.0 + float(np.sqrt(disc)), 0.0)


def eig_sensitivity(x, c, mode, i):
    """d(lambda)/dx_i of the omega >= 0 eigenvalue via left/right eigenvectors."""
    x = _as_point(x)
    d, k = _mode_coefficients(x, c, mode)
    if abs(d * d - 4.0 * k) < DEGENERATE_TOL:
        raise DegenerateModeError(f"repeated eigenvalue in mode {mode} (d^2 = 4k)")
    block = _companion(d, k)
    vals, right = np.linalg.eig(block.astype(complex))
    n = int(np.argmax(vals.imag)) if np.any(vals.imag != 0) else int(np.argmax(vals.real))
    left = np.linalg.inv(right)  # rows satisfy psi_n^T phi_m = delta_nm
    m = _mode_index(mode)
    dblock = state_matrix_derivative(x, c, i)[2 * m:2 * m + 2, 2 * m:2 * m + 2]
    return complex(left[n] @ dblock @ right[:, n])


def damping_sensitivity(x, c, mode):
    """Gradient of the mode's damping ratio (percent per input unit).

    Returns ``(grad, degenerate)``; overdamped or unstable-real blocks give a
    zero gradient with ``degenerate=True``.
    """
    lam = mode_eigenpair(x, c, mode)
    d, k = _mode_coefficients(x, c, mode)
    if lam.omega == 0.0 or abs(d * d - 4.0 * k) < DEGENERATE_TOL:
        return np.zeros(4), True
    sigma, omega = lam.sigma, lam.omega
    scale = omega / (sigma * sigma + omega * omega) ** 1.5
    grad = np.empty(4)
    for i in range(4):
        dl = eig_sensitivity(x, c, mode, i)
        grad[i] = 100.0 * scale * (sigma * dl.imag - omega * dl.real)
    return grad, False


def min_damping(x):
    x = _as_point(x)
    best = None
    for c in CONTINGENCIES:
        for mode in MODES:
            z = mode_damping(x, c, mode)
            if best is None or z < best[0]:
                best = (z, c.index, mode)
    zeta, c_idx, mode = best
    grad, degenerate = damping_sensitivity(x, c_idx, mode)
    return DampingResult(zeta, c_idx, mode, grad, degenerate)


def min_damping_batch(X):
    """Vectorized ``min_damping`` over rows of ``X``.

    Gradients use the closed form d/dx (50 d / sqrt k) of the binding mode,
    which coincides with the eigenvector route at non-degenerate points.
    Returns ``(zeta, grad, contingency, mode_index, degenerate)``.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n = X.shape[0]
    if n and (np.any(X < LOWER - _BOUND_SLACK) or np.any(X > UPPER + _BOUND_SLACK)
              or not np.all(np.isfinite(X))):
        raise DomainError("batch contains points outside the hypercube")
    P, Q, KF, KV = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
    zeta = np.full(n, np.inf)
    grad = np.zeros((n, 4))
    cont = np.zeros(n, dtype=np.int64)
    mode = np.zeros(n, dtype=np.int64)
    degen = np.zeros(n, dtype=bool)
    zero = np.zeros(n)
    for c in CONTINGENCIES:
        rho = c.severity
        p = rho * P
        d_a = 0.20 + 0.012 * KF - 0.12 * p * p - 0.08 * p * Q - 0.03 * Q
        k_a = 1.0 + 0.02 * KV + 0.05 * Q - 0.002 * p * KV
        d_b = 0.5 + 0.004 * KV - 0.02 * p * Q
        k_b = 25.0 + 0.1 * KF
        dd_a = np.stack([rho * (-0.24 * p - 0.08 * Q), -0.08 * p - 0.03, zero + 0.012, zero], axis=1)
        dk_a = np.stack([-0.002 * rho * KV, zero + 0.05, zero, 0.02 - 0.002 * p], axis=1)
        dd_b = np.stack([-0.02 * rho * Q, -0.02 * p, zero, zero + 0.004], axis=1)
        dk_b = np.stack([zero, zero, zero + 0.1, zero], axis=1)
        for m, (d, k, dd, dk) in enumerate(((d_a, k_a, dd_a, dk_a), (d_b, k_b, dd_b, dk_b))):
            root = np.sqrt(k)
            over = d >= 2.0 * root
            under = d <= -2.0 * root
            z = np.where(over, 100.0, np.where(under, -100.0, 50.0 * d / root))
            g = 50.0 * (dd / root[:, None] - (d / (2.0 * k * root))[:, None] * dk)
            deg = over | under | (np.abs(d * d - 4.0 * k) < DEGENERATE_TOL)
            g[deg] = 0.0
            better = z < zeta
            zeta = np.where(better, z, zeta)
            grad[better] = g[better]
            cont[better] = c.index
            mode[better] = m
            degen[better] = deg[better]
    return zeta, grad, cont, mode, degen
