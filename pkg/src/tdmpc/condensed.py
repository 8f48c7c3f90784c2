"""Condensed finite-horizon quadratic program for linear MPC.

The horizon-N optimal control problem with stage cost x'Qx + u'Ru,
terminal cost x'Px and box input constraints is condensed by eliminating
the states through X = F x + L nu, where nu stacks the N input blocks.
The result is

    J_N(x, nu) = x'Wx + 2 nu'Gx + nu'H nu,    nu in the replicated box,

and the closed-loop input applied to the plant is the first block S nu.
"""

import numpy as np

from .numerics import NumericsError, _as_matrix, sym_eig
from .plant import step


class CondensedQp:
    """Condensed quadratic program data for one (model, Q, R, P, N, box) tuple."""

    def __init__(self, N, H, G, W, S, B_bar, u_box, nu_box, Q, R, P):
        self.N = N
        self.H = H
        self.G = G
        self.W = W
        self.S = S
        self.B_bar = B_bar
        self.u_box = u_box
        self.nu_box = nu_box
        self.Q = Q
        self.R = R
        self.P = P

    @property
    def M(self):
        """Full quadratic form [[W, G'], [G, H]] of (x, nu) -> J_N(x, nu)."""
        top = np.hstack([self.W, self.G.T])
        bot = np.hstack([self.G, self.H])
        return np.vstack([top, bot])


def build_condensed(model, Q, R, P, N, u_box):
    """Condense the horizon-N problem into a CondensedQp.

    Q and R must be positive definite (Q also bounds the decay certificate
    from below, R makes H positive definite); P is the terminal weight.
    """
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    P = _as_matrix(P, "P")
    if N < 1:
        raise NumericsError(f"horizon must be >= 1, got {N}")
    N = int(N)
    n, m = model.n, model.m
    if Q.shape != (n, n):
        raise NumericsError(f"Q has shape {Q.shape}, expected {(n, n)}")
    if R.shape != (m, m):
        raise NumericsError(f"R has shape {R.shape}, expected {(m, m)}")
    if P.shape != (n, n):
        raise NumericsError(f"P has shape {P.shape}, expected {(n, n)}")
    if sym_eig(Q, "Q").min <= 0.0:
        raise NumericsError("Q must be positive definite")
    if sym_eig(R, "R").min <= 0.0:
        raise NumericsError("R must be positive definite")
    if u_box.dim != m:
        raise NumericsError(f"input box has dimension {u_box.dim}, expected {m}")

    A, B = model.A, model.B
    # prediction matrices: row block i (i = 1..N) gives x_i = A^i x + sum_j A^{i-1-j} B u_j
    F = np.zeros((N * n, n))
    L = np.zeros((N * n, N * m))
    Apow = np.eye(n)
    for i in range(N):
        Apow = A @ Apow
        F[i * n:(i + 1) * n, :] = Apow
    for i in range(N):
        blk = B
        for j in range(i, -1, -1):
            L[i * n:(i + 1) * n, j * m:(j + 1) * m] = blk
            blk = A @ blk
    Qbar = np.zeros((N * n, N * n))
    for i in range(N - 1):
        Qbar[i * n:(i + 1) * n, i * n:(i + 1) * n] = Q
    Qbar[(N - 1) * n:, (N - 1) * n:] = P
    Rbar = np.kron(np.eye(N), R)

    H = L.T @ Qbar @ L + Rbar
    H = 0.5 * (H + H.T)
    G = L.T @ Qbar @ F
    W = Q + F.T @ Qbar @ F
    W = 0.5 * (W + W.T)

    S = np.zeros((m, N * m))
    S[:, :m] = np.eye(m)
    B_bar = B @ S
    return CondensedQp(N, H, G, W, S, B_bar, u_box, u_box.replicate(N), Q, R, P)


def _batched(v, dim, name):
    v = np.asarray(v, dtype=float)
    if v.shape[0] != dim:
        raise NumericsError(f"{name} has leading dimension {v.shape[0]}, expected {dim}")
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    return v, squeeze


def cost(qp, x, nu):
    """J_N(x, nu); x may be (n,) or (n, batch) with nu shaped to match."""
    X, sx = _batched(x, qp.W.shape[0], "x")
    V, sv = _batched(nu, qp.H.shape[0], "nu")
    if X.shape[1] != V.shape[1]:
        raise NumericsError("x and nu have mismatched batch sizes")
    J = (X * (qp.W @ X)).sum(axis=0) + 2.0 * (V * (qp.G @ X)).sum(axis=0) + (
        V * (qp.H @ V)
    ).sum(axis=0)
    return float(J[0]) if (sx and sv) else J


def grad(qp, x, nu):
    """Gradient of J_N with respect to nu: 2 (H nu + G x)."""
    X, sx = _batched(x, qp.W.shape[0], "x")
    V, sv = _batched(nu, qp.H.shape[0], "nu")
    if X.shape[1] != V.shape[1]:
        raise NumericsError("x and nu have mismatched batch sizes")
    g = 2.0 * (qp.H @ V + qp.G @ X)
    return g[:, 0] if (sx and sv) else g


def rollout_cost(model, Q, R, P, x, nu):
    """Horizon cost evaluated by explicit simulation of the input sequence.

    Steps the plant through the N input blocks of nu and accumulates
    stage costs plus the terminal cost; serves as an independent check of
    the condensed quadratic form.
    """
    x = np.asarray(x, dtype=float).ravel()
    nu = np.asarray(nu, dtype=float).ravel()
    m = model.m
    if nu.size % m != 0:
        raise NumericsError(f"input sequence length {nu.size} is not a multiple of {m}")
    N = nu.size // m
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    P = np.asarray(P, dtype=float)
    total = 0.0
    xi = x
    for i in range(N):
        ui = nu[i * m:(i + 1) * m]
        total += float(xi @ Q @ xi + ui @ R @ ui)
        xi = step(model, xi, ui)
    total += float(xi @ P @ xi)
    return total
