"""Finite-time suboptimality-gap machinery for the truncated loop.

The per-step optimizer errors d_k accumulate through the closed loop
according to compounded contraction rates.  With per-step rates
rho_k = eta^{ell_k} the compounded weights follow the backward recursion
eta_tilde_{T-1} = rho_{T-1}, eta_tilde_k = rho_k (1 + eta_tilde_{k+1}),
and the cumulative policy error is bounded by

    sum_k ||d_k|| <= eta_tilde_0 ||delta u_0||
                     + sum_{k=1}^{T-1} (a_k + L * Delta_k) eta_tilde_k

where Delta_k = ||x_k - x_{k-1}|| is the realized state motion and a_k
an optional exogenous drift term.  Multiplying by the cost Lipschitz
constant M_bar turns this into a bound on the cost gap
R_T = J_T(truncated) - J_T(benchmark).
"""

import numpy as np

from .closed_loop import cost_JT, path_vectors
from .numerics import NumericsError


class RateVector:
    """Per-step rates, their compounded backward weights, and the tail 2-norm."""

    def __init__(self, rates, tilde, bar):
        self.rates = rates
        self.tilde = tilde
        self.bar = bar

    @property
    def T(self):
        return self.rates.size


def eta_tilde(rates):
    """Compounded contraction weights for a sequence of per-step rates.

    Every rate must lie in [0, 1); the recursion runs backward from the
    final step.  The bar field is the 2-norm of the weights with index
    1 and above (zero for a single-step horizon).
    """
    rates = np.asarray(rates, dtype=float).ravel()
    if rates.size < 1:
        raise NumericsError("rate sequence must have at least one entry")
    if np.any(rates < 0.0) or np.any(rates >= 1.0):
        raise NumericsError("rates must lie in [0, 1) for the recursion to contract")
    T = rates.size
    tilde = np.zeros(T)
    tilde[T - 1] = rates[T - 1]
    for k in range(T - 2, -1, -1):
        tilde[k] = rates[k] * (1.0 + tilde[k + 1])
    bar = float(np.linalg.norm(tilde[1:])) if T > 1 else 0.0
    return RateVector(rates, tilde, bar)


def eta_tilde_mpc(eta, ell_schedule):
    """Compounded weights when step k runs ell_k optimizer iterations."""
    ells = np.asarray(ell_schedule, dtype=int).ravel()
    if np.any(ells < 1):
        raise NumericsError("iteration schedule entries must be >= 1")
    return eta_tilde(float(eta) ** ells)


def empirical_gap(run_sub, run_bench, Q, R, P):
    """Realized cost gap between a truncated run and the benchmark run.

    Both runs must start from the same state and cover the same number of
    applied inputs; the gap is the difference of their accumulated costs.
    """
    if run_sub.T != run_bench.T:
        raise NumericsError(
            f"runs cover different horizons: {run_sub.T} vs {run_bench.T}"
        )
    x0_diff = float(np.linalg.norm(run_sub.states[0] - run_bench.states[0]))
    if x0_diff > 1e-12:
        raise NumericsError(
            f"runs start from different states (distance {x0_diff:.3e})"
        )
    return cost_JT(run_sub, Q, R, P) - cost_JT(run_bench, Q, R, P)


def chain_bound(rv, L, deltas, delta_u0_norm, a=None):
    """Cumulative policy-error bound implied by the compounded rates.

    deltas carries the realized per-step state motion of the same run
    (at least T-1 entries); a is the optional exogenous drift sequence of
    length T-1.  The bound holds for any trajectory of the loop, stable
    or not, because it only uses the per-step contraction of the
    optimizer and the Lipschitz dependence of the minimizer on the state.
    """
    T = rv.T
    deltas = np.asarray(deltas, dtype=float).ravel()
    if deltas.size < T - 1:
        raise NumericsError(
            f"need at least {T - 1} state-motion entries, got {deltas.size}"
        )
    if a is None:
        a = np.zeros(max(T - 1, 0))
    else:
        a = np.asarray(a, dtype=float).ravel()
        if a.size != T - 1:
            raise NumericsError(f"drift sequence has length {a.size}, expected {T - 1}")
    total = rv.tilde[0] * float(delta_u0_norm)
    if T > 1:
        total += float(np.sum((a + L * deltas[:T - 1]) * rv.tilde[1:]))
    return total


def gap_bound(M_bar, L, rv, deltas, delta_u0_norm, a=None):
    """Cost-gap bound: M_bar times the cumulative policy-error bound."""
    return M_bar * chain_bound(rv, L, deltas, delta_u0_norm, a)


def complexity_term(rate, S_T, a_l1=0.0):
    """Pathlength complexity rate/(1-rate) * (S_T + ||a||_1) for a constant rate."""
    if not 0.0 <= rate < 1.0:
        raise NumericsError(f"rate must lie in [0, 1), got {rate}")
    return rate / (1.0 - rate) * (S_T + a_l1)


def gap_bound_mpc(M_bar, L, eta, ell_schedule, deltas, delta_u0_norm):
    """Cost-gap bound for the truncated MPC loop (no exogenous drift)."""
    rv = eta_tilde_mpc(eta, ell_schedule)
    return gap_bound(M_bar, L, rv, deltas, delta_u0_norm)


class GapReport:
    """Empirical gap and its certified bounds for one truncated run."""

    def __init__(self, T, R_T, S_T, S_T2, delta_u0_norm, rate_max, chain,
                 bound, complexity, M_bar, L, eta):
        self.T = T
        self.R_T = R_T
        self.S_T = S_T
        self.S_T2 = S_T2
        self.delta_u0_norm = delta_u0_norm
        self.rate_max = rate_max
        self.chain = chain
        self.bound = bound
        self.complexity = complexity
        self.M_bar = M_bar
        self.L = L
        self.eta = eta

    def to_lines(self):
        pairs = [
            ("T", self.T),
            ("R_T", self.R_T),
            ("S_T", self.S_T),
            ("S_T2", self.S_T2),
            ("delta_u0", self.delta_u0_norm),
            ("rate_max", self.rate_max),
            ("chain", self.chain),
            ("bound", self.bound),
            ("complexity", self.complexity),
            ("M_bar", self.M_bar),
            ("L", self.L),
            ("eta", self.eta),
        ]
        lines = []
        for key, val in pairs:
            if val is None:
                lines.append(f"{key} = none")
            elif isinstance(val, int):
                lines.append(f"{key} = {val}")
            else:
                lines.append(f"{key} = {float(val)!r}")
        return lines


def build_gap_report(run_sub, qp, certs, run_bench=None):
    """Assemble the gap report for a truncated run.

    Needs the run's iteration schedule for the compounded rates; the
    benchmark run is optional and enables the realized gap R_T.  The
    certified bound requires M_bar (None without an incremental-stability
    fit, in which case only the complexity term is reported).
    """
    if run_sub.ell_schedule is None:
        raise NumericsError("gap report needs a truncated run with an iteration schedule")
    deltas, S_T, S_T2 = path_vectors(run_sub)
    rv = eta_tilde_mpc(certs.eta, run_sub.ell_schedule)
    rate_max = float(np.max(rv.rates))
    chain = chain_bound(rv, certs.L, deltas, run_sub.delta_u0_norm)
    bound = None if certs.M_bar is None else certs.M_bar * chain
    complexity = complexity_term(rate_max, S_T)
    R_T = None
    if run_bench is not None:
        R_T = empirical_gap(run_sub, run_bench, qp.Q, qp.R, qp.P)
    return GapReport(run_sub.T, R_T, S_T, S_T2, run_sub.delta_u0_norm, rate_max,
                     chain, bound, complexity, certs.M_bar, certs.L, certs.eta)
