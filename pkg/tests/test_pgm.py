"""Projected-gradient solver: step size, contraction, fixed points, benchmark stop."""

import numpy as np
import pytest

import tdmpc as T


@pytest.fixture(scope="module")
def scalar_qp():
    # One-dimensional instance with H = 4, G = 2 over the box [-1, 1]:
    # mu*(x) = clip(-x/2, -1, 1).
    box = T.BoxSet([-1.0], [1.0])
    qp = T.CondensedQp(
        N=1,
        H=np.array([[4.0]]),
        G=np.array([[2.0]]),
        W=np.array([[2.0]]),
        S=np.array([[1.0]]),
        B_bar=np.array([[0.0]]),
        u_box=box,
        nu_box=box,
        Q=np.array([[1.0]]),
        R=np.array([[1.0]]),
        P=np.array([[1.0]]),
    )
    return qp, T.pgm_config(qp)


def test_config_step_size_and_contraction_factor(pend):
    cfg = pend.cfg
    ev = T.sym_eig(pend.qp.H)
    assert cfg.alpha == pytest.approx(1.0 / (ev.min + ev.max), rel=1e-12)
    assert cfg.eta == pytest.approx((ev.max - ev.min) / (ev.max + ev.min), rel=1e-12)
    assert 0.0 <= cfg.eta < 1.0
    # the chosen step size minimizes the linear contraction factor
    assert T.spectral_norm(np.eye(pend.qp.H.shape[0]) - 2.0 * cfg.alpha * pend.qp.H) \
        == pytest.approx(cfg.eta, abs=1e-12)


def test_config_conditioned_identity_hessian():
    box = T.BoxSet([-1.0, -1.0], [1.0, 1.0])
    qp = T.CondensedQp(
        N=2, H=2.0 * np.eye(2), G=np.zeros((2, 1)), W=np.eye(1),
        S=np.array([[1.0, 0.0]]), B_bar=np.zeros((1, 1)),
        u_box=T.BoxSet([-1.0], [1.0]), nu_box=box,
        Q=np.eye(1), R=np.eye(1), P=np.eye(1),
    )
    cfg = T.pgm_config(qp)
    assert cfg.eta == pytest.approx(0.0, abs=1e-15)
    assert cfg.alpha == pytest.approx(0.25, rel=1e-15)


def test_scalar_interior_solution(scalar_qp):
    qp, cfg = scalar_qp
    mu = T.solve_benchmark(qp, cfg, np.array([1.0]))
    assert mu[0] == pytest.approx(-0.5, abs=1e-12)


def test_scalar_boundary_solution(scalar_qp):
    qp, cfg = scalar_qp
    mu = T.solve_benchmark(qp, cfg, np.array([10.0]))
    assert mu[0] == pytest.approx(-1.0, abs=1e-14)
    # a single step from the fixed point stays put
    assert T.pgm_step(qp, cfg, np.array([10.0]), mu)[0] == pytest.approx(-1.0, abs=1e-14)


def test_identity_hessian_solves_in_one_step():
    # with H = c I the operator reaches the constrained minimizer in one step
    box = T.BoxSet([-1.0, -1.0], [1.0, 1.0])
    qp = T.CondensedQp(
        N=2, H=2.0 * np.eye(2), G=np.array([[1.0], [3.0]]), W=np.eye(1),
        S=np.array([[1.0, 0.0]]), B_bar=np.zeros((1, 1)),
        u_box=T.BoxSet([-1.0], [1.0]), nu_box=box,
        Q=np.eye(1), R=np.eye(1), P=np.eye(1),
    )
    cfg = T.pgm_config(qp)
    rng = np.random.default_rng(20)
    for _ in range(10):
        x = rng.standard_normal(1)
        nu0 = box.sample(rng)
        one = T.pgm_step(qp, cfg, x, nu0)
        ref = T.solve_benchmark(qp, cfg, x)
        assert np.allclose(one, ref, atol=1e-12)


def test_iterate_zero_is_identity_and_one_is_step(pend):
    rng = np.random.default_rng(21)
    x = rng.standard_normal(2)
    nu = pend.qp.nu_box.sample(rng)
    z = T.pgm_iterate(pend.qp, pend.cfg, x, nu, 0)
    assert np.allclose(z, nu)
    assert z is not nu
    assert np.allclose(
        T.pgm_iterate(pend.qp, pend.cfg, x, nu, 1), T.pgm_step(pend.qp, pend.cfg, x, nu)
    )
    with pytest.raises(T.NumericsError):
        T.pgm_iterate(pend.qp, pend.cfg, x, nu, -1)


def test_iterates_stay_feasible_and_contract(pend):
    rng = np.random.default_rng(22)
    box = pend.qp.nu_box
    for _ in range(50):
        x = rng.uniform(-1.0, 1.0, 2)
        nu = box.sample(rng)
        mu = T.solve_benchmark(pend.qp, pend.cfg, x)
        ell = int(rng.integers(1, 30))
        out = T.pgm_iterate(pend.qp, pend.cfg, x, nu, ell)
        assert box.contains(out)
        lhs = np.linalg.norm(out - mu)
        rhs = pend.cfg.eta ** ell * np.linalg.norm(nu - mu)
        assert lhs <= rhs * (1.0 + 1e-9) + 1e-15


def test_step_batched_matches_single(pend):
    rng = np.random.default_rng(23)
    X = rng.standard_normal((2, 6))
    V = pend.qp.nu_box.sample(rng, 6)
    batch = T.pgm_step(pend.qp, pend.cfg, X, V)
    assert batch.shape == V.shape
    for j in range(6):
        assert np.allclose(batch[:, j], T.pgm_step(pend.qp, pend.cfg, X[:, j], V[:, j]))


def test_benchmark_zero_state_zero_minimizer(pend):
    mu = T.solve_benchmark(pend.qp, pend.cfg, np.zeros(2))
    assert np.linalg.norm(mu) <= 1e-12


def test_benchmark_warm_start_invariance(pend):
    rng = np.random.default_rng(24)
    for _ in range(20):
        x = rng.uniform(-0.5, 0.5, 2)
        cold = T.solve_benchmark(pend.qp, pend.cfg, x)
        warm = T.solve_benchmark(pend.qp, pend.cfg, x, pend.qp.nu_box.sample(rng))
        assert np.linalg.norm(cold - warm) <= 1e-8


def test_benchmark_stop_criterion_residual(pend):
    x = pend.x0
    mu = T.solve_benchmark(pend.qp, pend.cfg, x)
    res = np.linalg.norm(T.pgm_step(pend.qp, pend.cfg, x, mu) - mu)
    assert res <= pend.cfg.tol_benchmark * (1.0 + np.linalg.norm(mu)) * 1.01


def test_benchmark_unconstrained_matches_linear_solve(pend):
    qp = T.build_condensed(pend.model, pend.Q, pend.R, pend.P, 5, T.BoxSet([-1e9], [1e9]))
    cfg = T.pgm_config(qp)
    rng = np.random.default_rng(25)
    for _ in range(5):
        x = 0.1 * rng.standard_normal(2)
        mu = T.solve_benchmark(qp, cfg, x)
        ref = -np.linalg.solve(qp.H, qp.G @ x)
        assert np.linalg.norm(mu - ref) <= 1e-8 * max(1.0, np.linalg.norm(ref))


def test_benchmark_batched_matches_single(pend):
    rng = np.random.default_rng(26)
    X = rng.uniform(-0.5, 0.5, (2, 5))
    MU = T.solve_benchmark(pend.qp, pend.cfg, X)
    assert MU.shape == (5, 5)
    for j in range(5):
        assert np.linalg.norm(MU[:, j] - T.solve_benchmark(pend.qp, pend.cfg, X[:, j])) <= 1e-10


def test_benchmark_iteration_cap_raises(pend):
    cfg = T.PgmConfig(pend.cfg.alpha, pend.cfg.eta, 1e-300, 50)
    with pytest.raises(T.BenchmarkSolveError) as exc:
        T.solve_benchmark(pend.qp, cfg, pend.x0)
    assert exc.value.iterations == 50
    assert exc.value.residual > 0.0
