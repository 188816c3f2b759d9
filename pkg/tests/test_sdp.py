import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from irsbf.numerics import ContractError, RngStream
from irsbf.sdp import (EQ, GE, INFEASIBLE, OPTIMAL, SdpProblem, delift,
                       gaussian_randomization, lift_single_user, lifted_objective,
                       solve_sdp, unit_diagonal_constraints)

from helpers import random_feasible_sdp, sdp_certificates


def test_trace_over_unit_diagonal():
    A, b = unit_diagonal_constraints(2)
    sol = solve_sdp(SdpProblem(C=np.eye(2), A=A, b=b))
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(2.0, abs=1e-6)
    assert np.allclose(np.diag(sol.X).real, 1.0, atol=1e-7)


def test_scalar_lifted_problem():
    # N = M = 1, Phi = 1, h_d = 0: optimum 1, attained by a rank-one V
    prob = lift_single_user(np.ones((1, 1)), np.zeros(1))
    sol = solve_sdp(prob)
    assert sol.ok
    assert sol.objective == pytest.approx(1.0, abs=1e-6)
    # every unit-diagonal V is optimal here; a rank-one one attains the value
    v, best = gaussian_randomization(sol.X, lambda vs: lifted_objective(vs, np.ones((1, 1)),
                                                                        np.zeros(1)),
                                     4, RngStream(0))
    assert best == pytest.approx(1.0, abs=1e-12)


def test_problem_validation():
    with pytest.raises(ContractError):
        SdpProblem(C=np.array([[0, 1], [0, 0]]), A=[np.eye(2)], b=[1.0])
    with pytest.raises(ContractError):
        SdpProblem(C=np.eye(2), A=[np.eye(3)], b=[1.0])
    with pytest.raises(ContractError):
        SdpProblem(C=np.eye(2), A=[np.eye(2)], b=[1.0], senses=["<="])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_feasible_certificates(seed):
    rng = RngStream(seed)
    n = int(rng.gen.integers(1, 13))
    m = int(rng.gen.integers(1, min(2 * n, 16) + 1))
    prob = random_feasible_sdp(rng, n, m, with_ge=bool(seed % 2))
    sol = solve_sdp(prob)
    gap, pinf, mineig = sdp_certificates(prob, sol)
    assert sol.status == OPTIMAL
    assert gap <= 1e-6 and pinf <= 1e-7 and mineig >= -1e-8


def test_objective_scales_with_c():
    prob = random_feasible_sdp(RngStream(3), 6, 5)
    base = solve_sdp(prob)
    scaled = solve_sdp(SdpProblem(C=4.0 * prob.C, A=prob.A, b=prob.b))
    assert scaled.objective == pytest.approx(4.0 * base.objective, rel=1e-5)
    assert np.linalg.norm(scaled.X - base.X) <= 1e-3 * np.linalg.norm(base.X)


def test_ge_rows_and_auxiliary_scalars():
    # max -x11 - u  s.t. x11 + u >= 2, x22 = 1: optimum -2
    A = [np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    prob = SdpProblem(C=np.diag([-1.0, 0.0]), A=A, b=[2.0, 1.0], senses=[GE, EQ],
                      B=[[1.0], [0.0]], c_aux=[-1.0])
    sol = solve_sdp(prob)
    assert sol.ok and sol.objective == pytest.approx(-2.0, abs=1e-5)


def test_feasibility_margin_sign():
    # x11 >= 0.5 inside diag(X) = (1, 1) is feasible with margin 0.5
    A = [np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([1.0, 0.0])]
    ok = solve_sdp(SdpProblem(C=np.zeros((2, 2)), A=A, b=[1.0, 1.0, 0.5],
                              senses=[EQ, EQ, GE], feasibility=True))
    assert ok.ok and ok.margin == pytest.approx(0.5, abs=1e-5)
    bad = solve_sdp(SdpProblem(C=np.zeros((2, 2)), A=A, b=[1.0, 1.0, 2.0],
                               senses=[EQ, EQ, GE], feasibility=True))
    assert bad.status == INFEASIBLE and bad.margin < 0


def test_infeasible_equalities_never_optimal():
    A = [np.array([1.0, 0.0]), np.array([1.0, 0.0])]
    sol = solve_sdp(SdpProblem(C=np.eye(2), A=A, b=[1.0, 2.0]))
    assert sol.status != OPTIMAL


def test_lift_structure(rng):
    Phi = rng.cscg((3, 2))
    prob = lift_single_user(Phi, np.zeros(2))
    assert np.allclose(prob.C[:3, 3], 0) and np.allclose(prob.C[3, :], 0)
    Phi1, h1 = rng.cscg((1, 2)), rng.cscg(2)
    C = lift_single_user(Phi1, h1).C
    assert C.shape == (2, 2)
    assert C[0, 1] == pytest.approx((Phi1 @ h1)[0])
    assert C[1, 1] == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_lift_identity(seed):
    rng = RngStream(seed)
    N, M = 4, 3
    Phi, h_d = rng.cscg((N, M)), rng.cscg(M)
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, N))
    vb = np.append(v, 1.0)
    prob = lift_single_user(Phi, h_d)
    lifted = prob.objective(np.outer(vb, np.conj(vb)))
    assert lifted == pytest.approx(lifted_objective(v, Phi, h_d), rel=1e-10)


def test_relaxation_soundness(rng):
    for trial in range(3):
        Phi, h_d = rng.cscg((6, 3)), rng.cscg(3)
        sol = solve_sdp(lift_single_user(Phi, h_d))
        v = np.exp(1j * rng.uniform(0, 2 * np.pi, (10 ** 4, 6)))
        assert np.max(lifted_objective(v, Phi, h_d)) <= sol.objective + 1e-6


def test_randomization_rank_one_recovers_phases(rng):
    v = np.exp(1j * rng.uniform(0, 2 * np.pi, 5))
    t = np.exp(1j * 0.7)
    vb = np.append(v, 1.0) * t
    V = np.outer(vb, np.conj(vb))
    Phi, h_d = rng.cscg((5, 2)), rng.cscg(2)
    got, best = gaussian_randomization(V, lambda vs: lifted_objective(vs, Phi, h_d), 20, rng)
    assert np.allclose(got, v, atol=1e-9)
    assert best == pytest.approx(lifted_objective(v, Phi, h_d), rel=1e-9)


def test_randomization_pi_over_4_bound():
    hits = 0
    for seed in range(20):
        rng = RngStream(seed, 9)
        Phi, h_d = rng.cscg((4, 2)), rng.cscg(2)
        sol = solve_sdp(lift_single_user(Phi, h_d))
        base = float(np.vdot(h_d, h_d).real)
        _, best = gaussian_randomization(sol.X, lambda vs: lifted_objective(vs, Phi, h_d),
                                         100, rng)
        hits += best >= math.pi / 4 * (sol.objective - base) + base
    assert hits == 20


def test_randomization_contract(rng):
    V = np.eye(3, dtype=complex)
    with pytest.raises(ContractError):
        gaussian_randomization(V, lambda vs: np.zeros(len(vs)), 0, rng)
    score = lambda vs: np.real(vs[:, 0])
    a = gaussian_randomization(V, score, 1, RngStream(4))
    b = gaussian_randomization(V, score, 1, RngStream(4))
    assert np.array_equal(a[0], b[0])
    assert np.allclose(np.abs(a[0]), 1.0, atol=1e-15)


def test_delift_unit_modulus(rng):
    r = rng.cscg((7, 5))
    v = delift(r)
    assert v.shape == (7, 4)
    assert np.allclose(np.abs(v), 1.0)
    assert np.allclose(np.angle(v * np.conj(r[:, :-1]) * r[:, -1:]), 0.0, atol=1e-12)
