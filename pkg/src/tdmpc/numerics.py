"""Dense linear-algebra helpers shared by the rest of the package.

Everything here works on plain numpy arrays.  Matrices that are
mathematically symmetric are symmetrized before factorization so that
round-off in the caller cannot leak into eigenvalue routines.
"""

import numpy as np


class NumericsError(Exception):
    """Raised when a numerical routine cannot certify its own result."""


def _as_matrix(X, name="matrix"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise NumericsError(f"{name} must be 2-dimensional, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericsError(f"{name} contains non-finite entries")
    return X


class SymEig:
    """Eigendecomposition of a symmetric matrix.

    eigenvalues are sorted ascending, eigenvectors[:, i] is the unit
    eigenvector for eigenvalues[i].
    """

    def __init__(self, eigenvalues, eigenvectors):
        self.eigenvalues = eigenvalues
        self.eigenvectors = eigenvectors

    @property
    def min(self):
        return float(self.eigenvalues[0])

    @property
    def max(self):
        return float(self.eigenvalues[-1])


def sym_eig(S, name="matrix"):
    """Eigendecomposition of a symmetric matrix with a symmetry guard.

    Rejects inputs whose relative asymmetry ||S - S^T|| / max(1, ||S||)
    exceeds 1e-12; the guard catches calls that pass a matrix which is
    not symmetric by construction.
    """
    S = _as_matrix(S, name)
    if S.shape[0] != S.shape[1]:
        raise NumericsError(f"{name} must be square, got shape {S.shape}")
    asym = np.linalg.norm(S - S.T)
    scale = max(1.0, np.linalg.norm(S))
    if asym / scale > 1e-12:
        raise NumericsError(
            f"{name} is not symmetric: relative asymmetry {asym / scale:.3e}"
        )
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return SymEig(w, V)


def spectral_norm(X):
    """Largest singular value of a (possibly non-square) matrix."""
    X = _as_matrix(X)
    return float(np.linalg.norm(X, 2))


def spectral_radius(X):
    """Largest absolute eigenvalue of a square matrix."""
    X = _as_matrix(X)
    if X.shape[0] != X.shape[1]:
        raise NumericsError(f"spectral radius needs a square matrix, got {X.shape}")
    return float(np.max(np.abs(np.linalg.eigvals(X))))


def mat_sqrt(S, name="matrix"):
    """Symmetric square root of a symmetric positive definite matrix."""
    e = sym_eig(S, name)
    if e.min <= 0.0:
        raise NumericsError(
            f"{name} is not positive definite: min eigenvalue {e.min:.3e}"
        )
    V = e.eigenvectors
    return (V * np.sqrt(e.eigenvalues)) @ V.T


def mat_inv_sqrt(S, name="matrix"):
    """Inverse symmetric square root of a symmetric positive definite matrix."""
    e = sym_eig(S, name)
    if e.min <= 0.0:
        raise NumericsError(
            f"{name} is not positive definite: min eigenvalue {e.min:.3e}"
        )
    V = e.eigenvectors
    return (V / np.sqrt(e.eigenvalues)) @ V.T


def weighted_extremes(S, M, s_name="matrix", m_name="weight"):
    """Extreme generalized eigenvalues of S with respect to the metric M.

    Returns (lam_min, lam_max) of M^{-1/2} S M^{-1/2}.  Both matrices must
    be symmetric and M positive definite; S must be positive semidefinite
    for the result to be a pair of nonnegative curvature bounds, and we
    require S positive definite here because every caller uses it that way.
    """
    Em = mat_inv_sqrt(M, m_name)
    eS = sym_eig(S, s_name)
    if eS.min <= 0.0:
        raise NumericsError(
            f"{s_name} is not positive definite: min eigenvalue {eS.min:.3e}"
        )
    e = sym_eig(Em @ np.asarray(S, dtype=float) @ Em, s_name)
    return e.min, e.max


def solve_dare(A, B, Q, R, tol=1e-12, max_iter=10**6):
    """Stabilizing solution of the discrete-time algebraic Riccati equation.

    Iterates the Riccati map P <- Q + A'PA - A'PB (R + B'PB)^{-1} B'PA
    from P = Q until the relative change drops below tol.  Returns (P, K)
    with the state feedback gain K = (R + B'PB)^{-1} B'PA, after verifying
    the fixed-point residual is below 1e-9 * ||P|| and that A - BK is
    Schur stable.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    Q = _as_matrix(Q, "Q")
    R = _as_matrix(R, "R")
    n = A.shape[0]
    if A.shape != (n, n):
        raise NumericsError(f"A must be square, got {A.shape}")
    if B.shape[0] != n:
        raise NumericsError(f"B has {B.shape[0]} rows, expected {n}")
    if sym_eig(Q, "Q").min < 0.0:
        raise NumericsError("Q must be positive semidefinite")
    if sym_eig(R, "R").min <= 0.0:
        raise NumericsError("R must be positive definite")

    def riccati_map(P):
        BPA = B.T @ P @ A
        return Q + A.T @ P @ A - BPA.T @ np.linalg.solve(R + B.T @ P @ B, BPA)

    P = Q.copy()
    history = []
    for _ in range(max_iter):
        P_next = riccati_map(P)
        P_next = 0.5 * (P_next + P_next.T)
        change = np.linalg.norm(P_next - P)
        P = P_next
        history.append(change)
        if not np.all(np.isfinite(P)):
            raise NumericsError("Riccati iteration diverged (non-finite iterate)")
        if change <= tol * max(1.0, np.linalg.norm(P)):
            break
    else:
        raise NumericsError(
            "Riccati iteration did not converge within "
            f"{max_iter} steps (last changes {[f'{c:.3e}' for c in history[-5:]]})"
        )

    K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
    A_cl = A - B @ K
    residual = np.linalg.norm(Q + K.T @ R @ K + A_cl.T @ P @ A_cl - P)
    if residual > 1e-9 * max(1.0, np.linalg.norm(P)):
        raise NumericsError(
            f"Riccati fixed-point residual {residual:.3e} exceeds tolerance"
        )
    rho = spectral_radius(A_cl)
    if rho >= 1.0:
        raise NumericsError(f"closed-loop matrix A - BK is not Schur stable (rho={rho:.6f})")
    return P, K


def _expm(M):
    # scaling and squaring with a 30-term Taylor series on the scaled matrix
    norm = np.linalg.norm(M, np.inf)
    s = 0
    if norm > 0.5:
        s = int(np.ceil(np.log2(norm / 0.5)))
    Ms = M / (2.0 ** s)
    E = np.eye(M.shape[0])
    term = np.eye(M.shape[0])
    for k in range(1, 30):
        term = term @ Ms / k
        E = E + term
    for _ in range(s):
        E = E @ E
    return E


def discretize_zoh(A_c, B_c, T_s):
    """Zero-order-hold discretization of a continuous-time linear system.

    Computes the matrix exponential of the augmented matrix
    [[A_c, B_c], [0, 0]] * T_s and reads off A = exp(A_c T_s) and
    B = int_0^{T_s} exp(A_c s) ds B_c from its blocks.
    """
    A_c = _as_matrix(A_c, "A_c")
    B_c = _as_matrix(B_c, "B_c")
    if T_s <= 0.0:
        raise NumericsError(f"sampling time must be positive, got {T_s}")
    n = A_c.shape[0]
    if A_c.shape != (n, n):
        raise NumericsError(f"A_c must be square, got {A_c.shape}")
    if B_c.shape[0] != n:
        raise NumericsError(f"B_c has {B_c.shape[0]} rows, expected {n}")
    m = B_c.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = A_c
    M[:n, n:] = B_c
    E = _expm(M * T_s)
    return E[:n, :n].copy(), E[:n, n:].copy()
