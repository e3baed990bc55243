import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from slbalance.errors import InvalidInputError
from slbalance.qp import (INFEASIBLE, SOLVED, QpProblem, QpSolver, dump_problem, load_problem,
                          scale_problem, solve)

from oracles import random_qp, reference_qp


def test_box_projection(rng):
    c = rng.normal(size=6) * 2
    l, u = -np.ones(6), np.ones(6)
    sol = solve(QpProblem(np.eye(6), -c, np.eye(6), l, u))
    assert sol.status == SOLVED
    assert np.allclose(sol.z, np.clip(c, l, u), atol=1e-8)


def test_unconstrained_newton_point(rng):
    M = rng.normal(size=(5, 5))
    H = M @ M.T + np.eye(5)
    g = rng.normal(size=5)
    sol = solve(QpProblem(H, g, np.eye(5), np.full(5, -np.inf), np.full(5, np.inf)), tol=1e-10)
    assert np.allclose(sol.z, np.linalg.solve(H, -g), atol=1e-8)


def test_no_constraints(rng):
    H = np.diag([1.0, 2.0])
    sol = solve(QpProblem(H, [1.0, -2.0], np.zeros((0, 2)), [], []), tol=1e-10)
    assert np.allclose(sol.z, [-1.0, 1.0], atol=1e-8)


def test_oracle_agreement_random_problems():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(60):
        p = random_qp(rng)
        z_ref, _, viol = reference_qp(p)
        assert viol < 1e-8
        sol = solve(p)
        assert sol.status == SOLVED
        worst = max(worst, np.abs(sol.z - z_ref).max(initial=0.0))
    assert worst <= 1e-5


def test_rank_deficient_hessian_objective():
    rng = np.random.default_rng(7)
    for _ in range(20):
        p = random_qp(rng, n=6, m=10, psd_rank=2, ridge=0.0)
        p.l[~np.isfinite(p.l)] = np.minimum(p.u, 0.0)[~np.isfinite(p.l)] - 5.0
        p.u[~np.isfinite(p.u)] = np.maximum(p.l, 0.0)[~np.isfinite(p.u)] + 5.0
        p = QpProblem(p.H, p.g, np.vstack([p.A, np.eye(6)]), np.r_[p.l, -np.full(6, 10.0)],
                      np.r_[p.u, np.full(6, 10.0)])
        z_ref, _, viol = reference_qp(p)
        sol = solve(p)
        assert sol.status == SOLVED
        assert p.objective(sol.z) <= p.objective(z_ref) + 1e-5 * max(1, abs(p.objective(z_ref)))


def test_infeasible_detected():
    A = np.array([[1.0], [1.0]])
    sol = solve(QpProblem([[1.0]], [0.0], A, [1.0, -np.inf], [np.inf, -1.0]))
    assert sol.status == INFEASIBLE


def test_input_validation():
    with pytest.raises(InvalidInputError):
        QpProblem(np.eye(2), np.zeros(3), np.eye(2), np.zeros(2), np.ones(2))
    with pytest.raises(InvalidInputError):
        QpProblem(np.array([[1.0, 2.0], [0.0, 1.0]]), np.zeros(2), np.eye(2), np.zeros(2),
                  np.ones(2))
    with pytest.raises(InvalidInputError):
        QpProblem(np.eye(1), [0.0], np.eye(1), [1.0], [0.0])
    with pytest.raises(InvalidInputError):
        solve(QpProblem(-np.eye(2), np.zeros(2), np.eye(2), -np.ones(2), np.ones(2)))


def test_scaling_identity_for_equilibrated():
    p = QpProblem(np.eye(4), np.full(4, 0.5), np.eye(4), -np.ones(4), np.ones(4))
    _, sc = scale_problem(p)
    assert np.all((sc.D >= 0.5) & (sc.D <= 2)) and np.all((sc.E >= 0.5) & (sc.E <= 2))


def test_scaling_helps_badly_scaled_row():
    rng = np.random.default_rng(11)
    p = random_qp(rng, n=6, m=8)
    f = np.r_[1e6, np.ones(7)]
    bad = QpProblem(p.H, p.g, p.A * f[:, None], p.l * f, p.u * f)
    # polishing would hide the difference in the iteration itself
    scaled = solve(bad, max_iters=20000, polish=False)
    raw = solve(bad, max_iters=20000, scaling=0, polish=False)
    assert scaled.status == SOLVED
    assert scaled.iterations < raw.iterations
    z_ref, _, _ = reference_qp(bad)
    assert np.abs(solve(bad).z - z_ref).max() <= 1e-5


def test_warm_start_from_own_solution():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = random_qp(rng)
        sol = solve(p)
        again = solve(p, warm=sol.warm_start())
        assert again.status == SOLVED and again.iterations <= 5
        assert np.allclose(again.z, sol.z, atol=1e-6)


def test_trailing_residual_window_non_increasing():
    rng = np.random.default_rng(9)
    for _ in range(10):
        p = random_qp(rng, n=8, m=12)
        sol = QpSolver(record_history=True, polish=False, tol=1e-9).solve(p)
        r = np.array(sol.history)
        if len(r) < 100:
            continue
        windows = np.array([r[i:i + 50].max() for i in range(0, len(r) - 50, 50)])
        assert np.all(np.diff(windows) <= 1e-12 + 1e-9 * windows[:-1])


def test_objective_beats_feasible_samples():
    rng = np.random.default_rng(21)
    for _ in range(10):
        M = rng.normal(size=(4, 4))
        A = np.vstack([np.eye(4), rng.normal(size=(2, 4))])
        l = np.r_[-rng.uniform(0.5, 2, 4), -rng.uniform(1, 3, 2)]
        p = QpProblem(M @ M.T, rng.normal(size=4) * 3, A, l, l + rng.uniform(1, 4, 6))
        sol = solve(p)
        f = p.objective(sol.z)
        hits = 0
        while hits < 100:
            z = rng.uniform(-2, 2, p.n)
            Az = p.A @ z
            if np.all(Az >= p.l) and np.all(Az <= p.u):
                hits += 1
                assert f <= p.objective(z) + 1e-6


@given(st.integers(0, 2 ** 32 - 1))
def test_solution_satisfies_kkt(seed):
    rng = np.random.default_rng(seed)
    p = random_qp(rng)
    sol = solve(p)
    assert sol.status == SOLVED
    assert sol.primal_residual <= 1e-6 and sol.dual_residual <= 1e-6


def test_deterministic(rng):
    p = random_qp(rng, n=8, m=12)
    a, b = solve(p), solve(p)
    assert np.array_equal(a.z, b.z) and a.iterations == b.iterations


def test_dump_roundtrip(rng):
    p = random_qp(rng, n=4, m=5)
    buf = io.StringIO()
    dump_problem(p, buf)
    q = load_problem(io.StringIO(buf.getvalue()))
    for name in ("H", "g", "A", "l", "u"):
        assert np.array_equal(getattr(p, name), getattr(q, name))
