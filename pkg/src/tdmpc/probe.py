"""Empirical probes backing the assumptions behind the gap bounds.

Three checks run against sampled trajectories of the benchmark loop:
an incremental-stability fit (geometric convergence of trajectory pairs
plus a disturbance gain), a contraction audit of the optimizer iteration
against its certified rate, and a finite-horizon Lyapunov construction
whose sandwich and decrease inequalities are verified on samples.
"""

import math

import numpy as np

from .numerics import NumericsError
from .pgm import pgm_step, solve_benchmark


class ProbeError(Exception):
    """Raised when an empirical probe refutes the property it checks."""


class EdissFitError(ProbeError):
    pass


class ContractionError(ProbeError):
    def __init__(self, message, x=None, nu0=None, ell=None, ratio=None):
        super().__init__(message)
        self.x = x
        self.nu0 = nu0
        self.ell = ell
        self.ratio = ratio


class LyapunovError(ProbeError):
    pass


def make_benchmark_evaluator(model, qp, cfg):
    """Batched closed-loop evaluator of the benchmark policy.

    The returned callable maps an (n, batch) array of initial states to a
    (horizon+1, n, batch) array of trajectories, optionally adding a
    per-step additive disturbance of shape (horizon, n, batch).  Solves
    are warm-started across steps.
    """

    def evaluator(X0, horizon, disturbances=None):
        X = np.atleast_2d(np.asarray(X0, dtype=float))
        if X.shape[0] != model.n:
            raise NumericsError(
                f"initial states have leading dimension {X.shape[0]}, expected {model.n}"
            )
        batch = X.shape[1]
        states = np.zeros((horizon + 1, model.n, batch))
        states[0] = X
        warm = np.zeros((qp.H.shape[0], batch))
        for k in range(horizon):
            mu = solve_benchmark(qp, cfg, states[k], warm)
            warm = mu
            nxt = model.A @ states[k] + model.B @ (qp.S @ mu)
            if disturbances is not None:
                nxt = nxt + disturbances[k]
            states[k + 1] = nxt
        return states

    return evaluator


class EdissFit:
    """Fitted incremental-stability constants of the benchmark loop."""

    def __init__(self, c0, c_w, rho, r_w, pairs, horizon, worst_slack):
        self.c0 = c0
        self.c_w = c_w
        self.rho = rho
        self.r_w = r_w
        self.pairs = pairs
        self.horizon = horizon
        self.worst_slack = worst_slack

    def to_lines(self):
        return [
            f"c0 = {float(self.c0)!r}",
            f"c_w = {float(self.c_w)!r}",
            f"rho = {float(self.rho)!r}",
            f"r_w = {float(self.r_w)!r}",
            f"pairs = {int(self.pairs)}",
            f"horizon = {int(self.horizon)}",
            f"worst_slack = {float(self.worst_slack)!r}",
        ]


def _pair_deviations(evaluator, Xa, Xb, horizon, disturbances=None):
    Sa = evaluator(Xa, horizon)
    Sb = evaluator(Xb, horizon, disturbances)
    return np.linalg.norm(Sa - Sb, axis=1)  # (horizon+1, pairs)


def fit_ediss(evaluator, sampler, rng, r_w, pairs=200, horizon=60,
              holdout_pairs=100):
    """Fit exponential incremental-stability constants (c0, c_w, rho).

    Phase one runs undisturbed trajectory pairs from sampled starts: the
    decay rate rho is the worst per-step rate observed over the second
    half of the horizon (the asymptotic regime), and c0 absorbs the
    transient as the supremum of deviation over rho^k times the initial
    deviation.  Phase two injects a single disturbance pulse of size up
    to r_w and reads off the gain c_w.  Phase three validates the fitted
    envelope on held-out pairs driven by full random disturbance
    sequences; a violated envelope is inflated once and rechecked, and a
    second failure raises.
    """
    if r_w <= 0.0:
        raise EdissFitError(f"disturbance radius must be positive, got {r_w}")
    if pairs < 2 or horizon < 4:
        raise EdissFitError("need at least 2 pairs and a horizon of at least 4")

    # phase one: undisturbed pairs, rate from the tail, c0 over everything
    Xa = sampler(rng, pairs)
    Xb = sampler(rng, pairs)
    dev = _pair_deviations(evaluator, Xa, Xb, horizon)
    d0 = dev[0]
    keep = d0 > 1e-12
    if not np.any(keep):
        raise EdissFitError("sampled trajectory pairs all coincide at the start")
    dev = dev[:, keep]
    d0 = d0[keep]
    tail_start = max(horizon // 2, 1)
    rho = 0.0
    for k in range(tail_start, horizon + 1):
        ratios = dev[k] / d0
        pos = ratios > 0.0
        if np.any(pos):
            rho = max(rho, float(np.max(ratios[pos] ** (1.0 / k))))
    if rho >= 1.0:
        raise EdissFitError(
            f"benchmark loop is not incrementally contracting: fitted rate {rho:.6f}"
        )
    rho = min(max(rho, 1e-6), 1.0 - 1e-6)
    pows = rho ** np.arange(horizon + 1)
    c0 = float(np.max(dev / (pows[:, None] * d0[None, :])))

    # phase two: single pulse per pair, gain from the post-pulse response
    Xc = sampler(rng, pairs)
    pulse_steps = rng.integers(0, max(horizon // 2, 1), size=pairs)
    dirs = rng.standard_normal((Xc.shape[0], pairs))
    dirs /= np.linalg.norm(dirs, axis=0, keepdims=True)
    mags = r_w * rng.uniform(0.5, 1.0, size=pairs)
    W = np.zeros((horizon, Xc.shape[0], pairs))
    W[pulse_steps, :, np.arange(pairs)] = (dirs * mags).T
    devw = _pair_deviations(evaluator, Xc, Xc, horizon, W)
    c_w = 0.0
    for j in range(pairs):
        i = int(pulse_steps[j])
        for k in range(i + 1, horizon + 1):
            c_w = max(c_w, float(devw[k, j] / (rho ** (k - i - 1) * mags[j])))
    if c_w <= 0.0:
        raise EdissFitError("disturbance pulses produced no measurable response")

    # phase three: held-out pairs under full disturbance sequences
    def holdout_violation(c0_try, cw_try):
        Xh = sampler(rng, holdout_pairs)
        Yh = sampler(rng, holdout_pairs)
        mags_h = rng.uniform(0.0, r_w, size=(horizon, holdout_pairs))
        dirs_h = rng.standard_normal((horizon, Xh.shape[0], holdout_pairs))
        dirs_h /= np.linalg.norm(dirs_h, axis=1, keepdims=True)
        Wh = dirs_h * mags_h[:, None, :]
        devh = _pair_deviations(evaluator, Xh, Yh, horizon, Wh)
        wnorms = np.linalg.norm(Wh, axis=1)  # (horizon, holdout)
        d0h = devh[0]
        worst_factor = 0.0
        worst_slack = math.inf
        for k in range(horizon + 1):
            conv = np.zeros(holdout_pairs)
            for i in range(k):
                conv += rho ** (k - i - 1) * wnorms[i]
            rhs = c0_try * rho ** k * d0h + cw_try * conv
            bad = devh[k] > rhs * (1.0 + 1e-9)
            if np.any(bad):
                worst_factor = max(
                    worst_factor, float(np.max(devh[k][bad] / rhs[bad]))
                )
            good = rhs > 0.0
            if np.any(good):
                worst_slack = min(
                    worst_slack,
                    float(np.min((rhs[good] - devh[k][good]) / rhs[good])),
                )
        return worst_factor, worst_slack

    factor, slack = holdout_violation(c0, c_w)
    if factor > 0.0:
        c0 *= factor * 1.01
        c_w *= factor * 1.01
        factor, slack = holdout_violation(c0, c_w)
        if factor > 0.0:
            raise EdissFitError(
                f"held-out trajectories violate the inflated envelope by {factor:.3e}"
            )
    return EdissFit(c0, c_w, rho, r_w, pairs, horizon, slack)


def audit_contraction(qp, cfg, sampler, rng, samples=1000, ell_max=50):
    """Audit the optimizer contraction against its certified rate.

    Draws random states, feasible warm starts and iteration counts in
    1..ell_max, and verifies ||T^ell(x, nu) - mu*(x)|| <=
    eta^ell ||nu - mu*(x)|| on every sample.  Returns the worst observed
    ratio; a ratio beyond round-off raises with the offending sample
    attached.  The denominator carries a 1e-300 floor so an exact warm
    start (a 0/0 ratio) audits as 0.  The reference minimizer is only
    accurate to about tol/(1 - eta) (the stopping-criterion error bound
    for an eta-contraction), so that resolution is subtracted from the
    numerator before forming the ratio: once eta^ell norm0 falls to the
    solver's own error floor -- including the eta = 0 case, where the
    claim is exact one-step convergence -- the audit reads 0 instead of
    reporting unmeasurable noise as a violation.
    """
    if not 1 <= ell_max:
        raise NumericsError(f"ell_max must be >= 1, got {ell_max}")
    X = sampler(rng, samples)
    NU0 = qp.nu_box.sample(rng, samples)
    ells = rng.integers(1, ell_max + 1, size=samples)
    MU = solve_benchmark(qp, cfg, X, NU0)
    norm0 = np.linalg.norm(NU0 - MU, axis=0)
    resolution = (
        cfg.tol_benchmark * (1.0 + np.linalg.norm(MU, axis=0)) / (1.0 - cfg.eta)
    )
    ratios = np.zeros(samples)
    V = NU0.copy()
    for k in range(1, ell_max + 1):
        V = pgm_step(qp, cfg, X, V)
        mask = ells == k
        if np.any(mask):
            num = np.linalg.norm(V[:, mask] - MU[:, mask], axis=0)
            den = cfg.eta ** k * norm0[mask] + 1e-300
            ratios[mask] = np.maximum(num - resolution[mask], 0.0) / den
    worst_idx = int(np.argmax(ratios))
    worst = float(ratios[worst_idx])
    if worst > 1.0 + 1e-9:
        raise ContractionError(
            f"contraction audit failed: ratio {worst:.12f} at ell = {ells[worst_idx]}",
            x=X[:, worst_idx].copy(),
            nu0=NU0[:, worst_idx].copy(),
            ell=int(ells[worst_idx]),
            ratio=worst,
        )
    return worst


class LyapunovReport:
    """Finite-horizon Lyapunov certificate checked on samples."""

    def __init__(self, N_V, c1, c2, beta_sq, d, lam, lower_margin,
                 upper_margin, decrease_margin, samples, passed):
        self.N_V = N_V
        self.c1 = c1
        self.c2 = c2
        self.beta_sq = beta_sq
        self.d = d
        self.lam = lam
        self.lower_margin = lower_margin
        self.upper_margin = upper_margin
        self.decrease_margin = decrease_margin
        self.samples = samples
        self.passed = passed

    def to_lines(self):
        return [
            f"N_V = {int(self.N_V)}",
            f"c1 = {float(self.c1)!r}",
            f"c2 = {float(self.c2)!r}",
            f"beta_sq = {float(self.beta_sq)!r}",
            f"d = {float(self.d)!r}",
            f"lam = {float(self.lam)!r}",
            f"lower_margin = {float(self.lower_margin)!r}",
            f"upper_margin = {float(self.upper_margin)!r}",
            f"decrease_margin = {float(self.decrease_margin)!r}",
            f"samples = {int(self.samples)}",
            f"passed = {int(self.passed)}",
        ]


def lyapunov_finite_horizon(evaluator, sampler, rng, N_V, samples=200,
                            fit_horizon=60):
    """Finite-horizon Lyapunov function V(x) = sum of squared state norms.

    Fits a geometric decay envelope ||x_k|| <= d * lam^k ||x_0|| on sampled
    trajectories (rate from the tail half, d absorbing the transient),
    requires d^2 lam^(2 N_V) < 1 for the window length N_V, and then
    verifies the sandwich ||x||^2 <= V(x) <= c2 ||x||^2 and the decrease
    V(x+) <= beta_sq V(x) on the samples.  Margins are relative; the
    report's passed flag is the conjunction of all three.
    """
    if N_V < 1:
        raise LyapunovError(f"window length must be >= 1, got {N_V}")
    fit_horizon = max(fit_horizon, N_V + 1)
    X0 = sampler(rng, samples)
    states = evaluator(X0, fit_horizon)
    norms = np.linalg.norm(states, axis=1)  # (fit_horizon+1, samples)
    base = norms[0]
    keep = base > 1e-12
    if not np.any(keep):
        raise LyapunovError("all sampled initial states are numerically zero")
    norms = norms[:, keep]
    base = base[keep]

    tail_start = max(fit_horizon // 2, 1)
    lam = 0.0
    for k in range(tail_start, fit_horizon + 1):
        ratios = norms[k] / base
        pos = ratios > 0.0
        if np.any(pos):
            lam = max(lam, float(np.max(ratios[pos] ** (1.0 / k))))
    if lam >= 1.0:
        raise LyapunovError(
            f"trajectories do not decay geometrically: fitted rate {lam:.6f}"
        )
    lam = max(lam, 1e-6)
    pows = lam ** np.arange(fit_horizon + 1)
    d = float(np.max(norms / (pows[:, None] * base[None, :])))

    shrink = d * d * lam ** (2 * N_V)
    if shrink >= 1.0:
        required = math.ceil(math.log(d * d) / (2.0 * math.log(1.0 / lam))) + 1
        raise LyapunovError(
            f"window length {N_V} is too short for the fitted envelope "
            f"(d = {d:.4f}, rate = {lam:.6f}); need N_V >= {required}"
        )
    c2 = d * d / (1.0 - lam * lam)
    beta_sq = 1.0 - (1.0 - shrink) / c2

    sq = norms ** 2
    V0 = sq[:N_V].sum(axis=0)
    V1 = sq[1:N_V + 1].sum(axis=0)
    base_sq = base ** 2
    lower = float(np.min((V0 - base_sq) / base_sq))
    upper = float(np.min((c2 * base_sq - V0) / base_sq))
    decrease = float(np.min((beta_sq * V0 - V1) / V0))
    passed = lower >= -1e-9 and upper >= -1e-9 and decrease >= -1e-9
    return LyapunovReport(N_V, 1.0, c2, beta_sq, d, lam, lower, upper,
                          decrease, int(keep.sum()), passed)
