"""Projected gradient method for the condensed box-constrained QP.

One iteration maps nu to the projection of nu - alpha * grad onto the
input box, with the classical optimal fixed step alpha = 2 / (l + L)
expressed through the extreme curvatures of the full Hessian 2H as
alpha = 1 / (lam_max(H) + lam_min(H)).  The iteration contracts to the
minimizer mu*(x) at rate eta = (lam_max - lam_min) / (lam_max + lam_min)
per step, uniformly in x.
"""

import numpy as np

from .condensed import _batched, grad
from .numerics import NumericsError, sym_eig


class BenchmarkSolveError(Exception):
    """Raised when the benchmark solve hits its iteration cap."""

    def __init__(self, message, iterations, residual):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PgmConfig:
    """Step size, contraction factor and benchmark stopping parameters."""

    def __init__(self, alpha, eta, tol_benchmark, iter_cap):
        self.alpha = alpha
        self.eta = eta
        self.tol_benchmark = tol_benchmark
        self.iter_cap = iter_cap


def pgm_config(qp, tol_benchmark=1e-12, iter_cap=10**6):
    """Derive the step size and contraction factor from the Hessian spectrum."""
    e = sym_eig(qp.H, "H")
    lam_min, lam_max = e.min, e.max
    if lam_min <= 0.0:
        raise NumericsError(f"H must be positive definite, min eigenvalue {lam_min:.3e}")
    alpha = 1.0 / (lam_max + lam_min)
    eta = (lam_max - lam_min) / (lam_max + lam_min)
    if tol_benchmark <= 0.0:
        raise NumericsError(f"benchmark tolerance must be positive, got {tol_benchmark}")
    if iter_cap < 1:
        raise NumericsError(f"iteration cap must be >= 1, got {iter_cap}")
    return PgmConfig(alpha, eta, float(tol_benchmark), int(iter_cap))


def project_box(nu, box):
    """Euclidean projection onto the box."""
    return box.project(nu)


def pgm_step(qp, cfg, x, nu):
    """One projected gradient step on nu at parameter x; batched like cost/grad."""
    X, sx = _batched(x, qp.W.shape[0], "x")
    V, sv = _batched(nu, qp.H.shape[0], "nu")
    if X.shape[1] != V.shape[1]:
        raise NumericsError("x and nu have mismatched batch sizes")
    out = qp.nu_box.project(V - cfg.alpha * 2.0 * (qp.H @ V + qp.G @ X))
    return out[:, 0] if (sx and sv) else out


def pgm_iterate(qp, cfg, x, nu, ell):
    """Apply ell projected gradient steps; ell = 0 returns nu unchanged."""
    if ell < 0:
        raise NumericsError(f"iteration count must be >= 0, got {ell}")
    nu = np.asarray(nu, dtype=float).copy()
    for _ in range(int(ell)):
        nu = pgm_step(qp, cfg, x, nu)
    return nu


def solve_benchmark(qp, cfg, x, nu0=None):
    """Iterate to numerical convergence; the reference minimizer mu*(x).

    Stops when the successive difference satisfies
    ||nu_{j+1} - nu_j|| <= tol * (1 + ||nu_{j+1}||), which under the
    contraction of the iteration bounds the fixed-point residual by
    eta * tol * (1 + ||nu||).  Accepts batched x (n, batch) and solves
    all columns simultaneously; extra iterations on already-converged
    columns are harmless because the map contracts toward mu*.
    """
    X, sx = _batched(x, qp.W.shape[0], "x")
    nNu = qp.H.shape[0]
    if nu0 is None:
        V = np.zeros((nNu, X.shape[1]))
    else:
        V, sv = _batched(nu0, nNu, "nu0")
        if V.shape[1] != X.shape[1]:
            raise NumericsError("x and nu0 have mismatched batch sizes")
        V = qp.nu_box.project(V.copy())
    tol = cfg.tol_benchmark
    residual = np.inf
    for it in range(1, cfg.iter_cap + 1):
        V_next = pgm_step(qp, cfg, X, V)
        diff = np.linalg.norm(V_next - V, axis=0)
        size = 1.0 + np.linalg.norm(V_next, axis=0)
        V = V_next
        residual = float(np.max(diff / size))
        if np.all(diff <= tol * size):
            return V[:, 0] if sx else V
    raise BenchmarkSolveError(
        f"benchmark solve hit the iteration cap {cfg.iter_cap} "
        f"(worst scaled residual {residual:.3e})",
        cfg.iter_cap,
        residual,
    )
