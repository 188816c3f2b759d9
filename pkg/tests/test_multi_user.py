import numpy as np
import pytest

from irsbf import multi_user as mu
from irsbf import single_user as su
from irsbf.channel import ChannelSet, PhaseConfig, combined_channels, sinr, sinr_from_rows
from irsbf.numerics import ContractError, RngStream

from helpers import random_channel


def _zero_phase_rows(ch):
    return combined_channels(ch, PhaseConfig.zeros(ch.N))


# ---------------------------------------------------------------------------
# fixed-phase precoders

def test_feasibility_precoder_meets_targets_exactly(rng):
    ch = random_channel(rng, K=3, M=4, N=6)
    gamma = np.array([1.0, 4.0, 10.0])
    prec = mu.feasibility_precoder(ch, gamma)
    s = sinr(ch, PhaseConfig.zeros(ch.N), prec)
    assert np.allclose(s, gamma, rtol=1e-9)


def test_feasibility_precoder_single_user(rng):
    ch = random_channel(rng, K=1, M=3, N=4)
    prec = mu.feasibility_precoder(ch, 2.0)
    row = _zero_phase_rows(ch)[0]
    assert prec.total_power == pytest.approx(2.0 / np.sum(np.abs(row) ** 2), rel=1e-12)


def test_feasibility_precoder_rank_errors(rng):
    h = rng.cscg(3)
    aligned = ChannelSet(np.zeros((2, 3)), np.zeros((2, 2)), np.vstack([h, 2j * h]), [1, 1])
    with pytest.raises(mu.RankError):
        mu.feasibility_precoder(aligned, 1.0)
    with pytest.raises(mu.RankError):
        mu.feasibility_precoder(random_channel(rng, K=3, M=2, N=4), 1.0)


def test_targets_validation():
    with pytest.raises(ContractError):
        mu.SinrTargets([1.0, -1.0])
    with pytest.raises(ContractError):
        mu.SinrTargets([np.inf])
    assert len(mu.SinrTargets.uniform(2.0, 3)) == 3


def test_p3_single_user_is_mrt(rng):
    h = rng.cscg((1, 4))
    prec = mu.solve_p3(h, 5.0, 0.5)
    assert prec.total_power == pytest.approx(5.0 * 0.5 / np.sum(np.abs(h) ** 2), rel=1e-10)


def test_p3_orthogonal_users_decouple():
    rows = np.array([[2.0, 0, 0], [0, 1j, 0]])
    gamma = np.array([3.0, 7.0])
    noise = np.array([1.0, 2.0])
    prec = mu.solve_p3(rows, gamma, noise)
    assert prec.total_power == pytest.approx(3.0 / 4 + 14.0, rel=1e-10)


def test_p3_meets_targets_and_matches_sdp():
    for seed in range(6):
        rng = RngStream(seed, 31)
        K = 2 + seed % 3
        rows = rng.cscg((K, 4))
        gamma = 10 ** rng.uniform(0, 1.5, K)
        noise = 10 ** rng.uniform(-0.5, 0.5, K)
        prec = mu.solve_p3(rows, gamma, noise)
        s = np.abs(rows @ prec.W) ** 2
        got = np.diag(s) / (s.sum(axis=1) - np.diag(s) + noise)
        assert np.allclose(got, gamma, rtol=1e-8)
        ref, _, _ = mu.solve_p3_sdp(rows, gamma, noise)
        assert prec.total_power == pytest.approx(ref, rel=1e-5)


def test_p3_infeasible_targets():
    # one antenna, two users at SINR 2: p1 > 2 p2 and p2 > 2 p1 cannot both hold
    rows = np.array([[1.0], [1.0]])
    with pytest.raises(su.InfeasibleError):
        mu.solve_p3(rows, 2.0, 1.0)
    with pytest.raises(su.InfeasibleError):
        mu.solve_p3(np.array([[1.0, 0], [0, 0]]), 1.0, 1.0)


def test_p3_small_target_limit(rng):
    rows = rng.cscg((3, 4))
    for gamma in (1e-6, 1e-8):
        p = mu.solve_p3(rows, gamma, 1.0).total_power / gamma
        assert p == pytest.approx(np.sum(1.0 / np.sum(np.abs(rows) ** 2, axis=1)), rel=1e-4)


def test_user_swap_symmetry(rng):
    ch = random_channel(rng, K=3, M=4, N=6)
    gamma = np.array([2.0, 5.0, 9.0])
    perm = [2, 0, 1]
    sw = ch.subset(perm)
    a = mu.mmse_no_irs(ch, gamma).total_power
    b = mu.mmse_no_irs(sw, gamma[perm]).total_power
    assert a == pytest.approx(b, rel=1e-10)
    z1 = mu.zf_power(ch.h_d.T, gamma, 1.0)
    z2 = mu.zf_power(sw.h_d.T, gamma[perm], 1.0)
    assert z1 == pytest.approx(z2, rel=1e-12)


def test_zf_examples_and_dominance(rng):
    assert mu.zf_power(np.eye(2), [1.0, 2.0], 1.0) == pytest.approx(3.0)
    Hd = np.array([[2.0, 0], [0, 1j], [0, 0]])
    assert mu.zf_power(Hd, [1.0, 1.0], [1.0, 2.0]) == pytest.approx(0.25 + 2.0)
    with pytest.raises(mu.RankError):
        mu.zf_power(np.ones((3, 2)), 1.0, 1.0)
    for _ in range(5):
        ch = random_channel(rng, K=3, M=4, N=2)
        zf = mu.zf_power(ch.h_d.T, 10.0, ch.noise)
        assert mu.mmse_no_irs(ch, 10.0).total_power <= zf * (1 + 1e-9)


def test_effective_angle(rng):
    h = rng.cscg(4)
    assert mu.effective_angle(3j * h, h) == pytest.approx(1.0)
    assert mu.effective_angle([1, 0], [0, 1]) == 0.0
    w = rng.cscg(4)
    assert mu.effective_angle(w, h) == pytest.approx(mu.effective_angle(5 * w, 0.1 * h))
    with pytest.raises(ContractError):
        mu.effective_angle(np.zeros(2), [1, 0])


def test_power_decomposition_consistent_with_sinr(rng):
    ch = random_channel(rng, K=2, M=4, N=6, noise=0.3)
    ph = PhaseConfig.random(ch.N, rng)
    W = rng.cscg((4, 2))
    d = mu.power_decomposition(ch, ph, W)
    assert np.allclose(d["desired"] / (d["interference"] + 1.0), sinr(ch, ph, W))
    no = mu.power_decomposition(ch.without_irs(), ph, W)
    assert np.allclose(no["desired"], d["desired_direct"])


# ---------------------------------------------------------------------------
# phase design for fixed W

def test_p4_constraints_match_sinr(rng):
    ch = random_channel(rng, K=3, M=4, N=5, noise=0.7)
    W = rng.cscg((4, 3))
    gamma = np.array([0.5, 1.0, 2.0])
    Q, c = mu.p4_constraints(ch, W, gamma)
    ph = PhaseConfig.random(ch.N, rng)
    v = np.append(np.conj(ph.coeffs), 1.0)
    lifted = np.real(np.einsum("i,kij,j->k", np.conj(v), Q, v)) + c
    s = sinr(ch, ph, W)
    d = mu.power_decomposition(ch, ph, W)
    # lifted slack = (desired - gamma (interference + 1)) / gamma, noise-normalised
    expect = (d["desired"] - gamma * (d["interference"] + 1.0)) / gamma
    assert np.allclose(lifted, expect, rtol=1e-9, atol=1e-12)
    assert np.all((lifted >= 0) == (s >= gamma))


def test_p4_single_user_reaches_closed_form(rng):
    ch = random_channel(rng, K=1, M=3, N=8)
    w = (ch.h_d[0] / np.linalg.norm(ch.h_d[0]))[:, None]
    best = su.optimal_phases_closed_form(ch, w[:, 0])
    best_gain = np.abs(combined_channels(ch, best)[0] @ w[:, 0]) ** 2
    gamma = 0.5 * best_gain / ch.noise[0]
    ph, status, info = mu.solve_p4_phases(w, ch, gamma, rng=rng)
    assert status == "feasible"
    gain = np.abs(combined_channels(ch, ph)[0] @ w[:, 0]) ** 2
    assert gain == pytest.approx(best_gain, rel=1e-4)


def _grid_margin(ch, W, gamma, points=180):
    t = 2 * np.pi * np.arange(points) / points
    c = np.exp(1j * np.stack(np.meshgrid(t, t, indexing="ij"), -1).reshape(-1, 2))
    rows = combined_channels(ch, c)
    return float(np.max(np.min(sinr_from_rows(rows, W, ch.noise) / gamma, axis=-1)))


def test_p4_two_element_grid_oracle():
    checked = 0
    for seed in range(30):
        rng = RngStream(seed, 44)
        ch = random_channel(rng, K=2, M=2, N=2, scale_d=0.3)
        W = mu.feasibility_precoder(ch, 1.0).W * rng.uniform(0.6, 1.4)
        gamma = np.ones(2)
        m = _grid_margin(ch, W, gamma)
        if abs(m - 1.0) < 0.05:
            continue
        checked += 1
        _, status, _ = mu.solve_p4_phases(W, ch, gamma, mode=mu.FEASIBILITY,
                                          rng=RngStream(seed, 45))
        assert (status == "feasible") == (m > 1.0), (seed, m, status)
    assert checked >= 10


def test_p4_without_reflection(rng):
    ch = random_channel(rng, K=2, M=3, N=4, scale_r=0.0)
    prec = mu.mmse_no_irs(ch, 2.0)
    ph, status, _ = mu.solve_p4_phases(prec, ch, 2.0, rng=rng)
    assert status == "feasible"
    assert np.all(sinr(ch, ph, prec) >= 2.0 * (1 - 1e-6))
    sol = mu.algorithm1(ch, 2.0, rng=rng, count=50)
    assert sol.total_power == pytest.approx(prec.total_power, rel=1e-8)


def test_p4_mode_validation(rng):
    ch = random_channel(rng, K=1, M=2, N=2)
    with pytest.raises(ContractError):
        mu.solve_p4_phases(np.ones((2, 1)), ch, 1.0, mode="bogus")


# ---------------------------------------------------------------------------
# joint designs

@pytest.mark.parametrize("mode", [mu.RESIDUAL, mu.FEASIBILITY])
def test_algorithm1_monotone_and_feasible(mode):
    for seed in range(3):
        rng = RngStream(seed, 9)
        ch = random_channel(rng, K=3, M=4, N=10, scale_d=0.5)
        gamma = 5.0
        sol = mu.algorithm1(ch, gamma, mode=mode, count=200, rng=rng)
        tr = np.array(sol.trace)
        assert np.all(np.diff(tr) <= 0)
        assert sol.total_power == pytest.approx(tr[-1])
        assert np.all(sol.sinr >= gamma * (1 - 1e-6))
        assert sol.status in (mu.CONVERGED, mu.P4_INFEASIBLE, mu.MAX_ITER)
        assert len(tr) == sol.iterations + 1 or sol.status == mu.P4_INFEASIBLE


def test_algorithm1_from_two_stage_never_worse():
    rng = RngStream(5, 10)
    ch = random_channel(rng, K=2, M=4, N=10)
    ts = mu.two_stage(ch, 10.0, count=200, rng=rng)
    alt = mu.algorithm1(ch, 10.0, ts.phases, count=200, rng=rng)
    assert alt.trace[0] == pytest.approx(ts.total_power, rel=1e-12)
    assert alt.total_power <= ts.total_power


def test_algorithm1_target_and_max_iter(rng):
    ch = random_channel(rng, K=2, M=4, N=6)
    sol = mu.algorithm1(ch, 1.0, target=np.inf, rng=rng)
    assert sol.status == mu.TARGET_MET
    assert sol.iterations == 0 and len(sol.trace) == 1
    sol = mu.algorithm1(ch, 1.0, max_iter=1, eps=0.0, count=50, rng=rng)
    assert sol.iterations == 1


def test_two_stage_single_user_matches_sdr():
    for seed in range(3):
        ch = random_channel(RngStream(seed, 12), K=1, M=4, N=8)
        ts = mu.two_stage(ch, 10.0, count=300, rng=RngStream(seed, 13))
        sdr = su.solve_p2_sdr(ch, 10.0, count=300, rng=RngStream(seed, 13))
        assert ts.total_power == pytest.approx(sdr.power, rel=1e-4)


def test_weighted_gain_matches_lifted_objective(rng):
    ch = random_channel(rng, K=2, M=3, N=5)
    prob, t = mu.p5_problem(ch, [1.0, 3.0])
    ph = PhaseConfig.random(ch.N, rng)
    v = np.append(np.conj(ph.coeffs), 1.0)
    lifted = float(np.real(np.conj(v) @ prob.C @ v)) + prob.offset
    assert mu.weighted_gain(ch, t, v[:-1]) == pytest.approx(lifted, rel=1e-12)


def test_benchmarks_meet_targets(rng):
    ch = random_channel(rng, K=2, M=4, N=6)
    for sol in (mu.random_phase_mmse(ch, 3.0, rng), mu.mmse_no_irs(ch, 3.0),
                mu.two_stage(ch, 3.0, count=100, rng=rng)):
        assert np.allclose(sol.sinr, 3.0, rtol=1e-8)


# ---------------------------------------------------------------------------
# max-min rate

def test_max_min_without_irs_bisection(rng):
    ch = random_channel(rng, K=2, M=3, N=4, scale_r=0.0)
    P = 10.0
    rate, sol = mu.max_min_sinr(ch, P, with_irs=True, tol=1e-4)
    assert sol.total_power <= P
    assert mu.mmse_no_irs(ch, 2 ** (rate + 2e-4) - 1).total_power > P
    r_no, _ = mu.max_min_sinr(ch, P, with_irs=False, tol=1e-4)
    assert rate == r_no


def test_max_min_rate_delay_split(rng):
    ch = random_channel(rng, K=2, M=3, N=4)
    r1, _ = mu.max_min_sinr(ch, 5.0, with_irs=False, tol=1e-3)
    r2, _ = mu.max_min_sinr(ch, 5.0, tol=1e-3, count=100, rng=RngStream(1))
    rate0, W, ph = mu.max_min_rate(ch, 5.0, 0.0, count=100, rng=RngStream(1))
    assert rate0 == r2 and W is not None and ph.N == 4
    rate, _, _ = mu.max_min_rate(ch, 5.0, 0.4, count=100, rng=RngStream(1))
    assert rate == pytest.approx(0.4 * r1 + 0.6 * r2)
    assert r2 >= r1 - 1e-3
    with pytest.raises(ContractError):
        mu.max_min_rate(ch, 5.0, 1.0)
    with pytest.raises(ContractError):
        mu.max_min_sinr(ch, 0.0)
