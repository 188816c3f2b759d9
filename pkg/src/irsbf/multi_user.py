"""Multiuser power minimisation: MMSE precoding by uplink-downlink duality,
SDR phase design, the alternating algorithm, the two-stage heuristic and the
no-IRS benchmarks.

All SINR checks go through :func:`irsbf.channel.sinr_from_rows`, the same
definition used by :func:`irsbf.channel.sinr`.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import PhaseConfig, combined_channels, sinr_from_rows
from .numerics import ContractError, herm
from .sdp import (GE, EQ, SdpProblem, gaussian_randomization,
                  solve_sdp, unit_diagonal_constraints)
from .single_user import InfeasibleError

__all__ = [
    "RankError", "Precoder", "SinrTargets", "MultiUserSolution",
    "feasibility_precoder", "solve_p3", "solve_p3_sdp", "p4_constraints",
    "solve_p4_phases", "algorithm1", "two_stage", "random_phase_mmse",
    "mmse_no_irs", "zf_power", "effective_angle", "power_decomposition",
    "max_min_sinr", "max_min_rate", "p5_problem", "weighted_gain",
    "CONVERGED", "P4_INFEASIBLE", "MAX_ITER", "TARGET_MET", "FEASIBILITY", "RESIDUAL",
]

CONVERGED = "converged"
P4_INFEASIBLE = "p4-infeasible"
MAX_ITER = "max-iterations"
TARGET_MET = "target-met"

FEASIBILITY = "feasibility"
RESIDUAL = "residual"

# relative slack allowed when deciding that a candidate meets its targets
SINR_RTOL = 1e-9


class RankError(ContractError):
    """Channel matrix does not have full row rank K."""


@dataclass
class Precoder:
    """Columns of ``W`` ``(M, K)`` are the per-user beams ``w_k``."""

    W: np.ndarray
    status: str = CONVERGED

    def __post_init__(self):
        self.W = np.atleast_2d(np.asarray(self.W, dtype=complex))
        if not np.all(np.isfinite(self.W)):
            raise ContractError("precoder must be finite")

    @property
    def K(self):
        return self.W.shape[1]

    @property
    def total_power(self):
        return float(np.sum(np.abs(self.W) ** 2))

    def beam(self, k):
        return self.W[:, k]


@dataclass(frozen=True)
class SinrTargets:
    """Linear SINR targets, one per user."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.atleast_1d(np.asarray(self.gamma, dtype=float))
        if g.size == 0 or not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ContractError("SINR targets must be positive and finite")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def uniform(cls, gamma, K):
        return cls(np.full(K, float(gamma)))

    def __len__(self):
        return self.gamma.size


def _targets(gamma, K):
    if isinstance(gamma, SinrTargets):
        g = gamma.gamma
    else:
        g = SinrTargets(np.broadcast_to(np.asarray(gamma, dtype=float), (K,))).gamma
    if g.size != K:
        raise ContractError(f"expected {K} SINR targets, got {g.size}")
    return g


@dataclass
class MultiUserSolution:
    precoder: Precoder
    phases: PhaseConfig
    sinr: np.ndarray
    trace: list = field(default_factory=list)
    status: str = CONVERGED
    iterations: int = 0
    scheme: str = ""

    @property
    def W(self):
        return self.precoder.W

    @property
    def total_power(self):
        return self.precoder.total_power


# ---------------------------------------------------------------------------
# Precoders for fixed phases

def feasibility_precoder(ch, gamma):
    """Zero-forcing precoder on the combined channel with all phases zero.

    The combined rows are inverted so each user sees only its own beam, at
    exactly the power needed to reach its target.
    """
    g = _targets(gamma, ch.K)
    Hh = combined_channels(ch, PhaseConfig.zeros(ch.N))      # rows h_k^H, (K, M)
    s = np.linalg.svd(Hh, compute_uv=False)
    if ch.K > ch.M or s[-1] <= s[0] * max(ch.M, ch.K) * np.finfo(float).eps:
        raise RankError("combined channel matrix is rank deficient")
    H = herm(Hh)
    W = H @ np.linalg.solve(Hh @ H, np.diag(np.sqrt(g * ch.noise)))
    return Precoder(W)


def solve_p3(rows, gamma, noise, tol=1e-12, max_iter=500, bound=1e12):
    """Minimum-power precoder meeting every SINR target with equality.

    Parameters
    ----------
    rows : (K, M) combined channels ``h_k^H``.
    gamma, noise : per-user targets and noise powers.

    Notes
    -----
    Works on noise-normalised channels.  The virtual uplink powers follow

        lambda_k = 1 / ((1 + 1/gamma_k) h_k^H (I + sum_j lambda_j h_j h_j^H)^-1 h_k)

    which is the SINR_k = gamma_k condition of the dual uplink written with
    the full covariance.  A few plain fixed-point sweeps are followed by
    safeguarded Newton steps on the same equations.  The MMSE receive filters
    then give the downlink beam directions and a K x K linear system sets the
    downlink powers.

    Raises
    ------
    InfeasibleError
        if the uplink powers blow past ``bound`` or the power system has no
        positive solution.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=complex))
    K, M = rows.shape
    g = _targets(gamma, K)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    Hn = rows / np.sqrt(noise)[:, None]          # rows of normalised h_k^H
    hc = np.conj(Hn)                             # columns h_k (as rows)
    if np.any(np.sum(np.abs(Hn) ** 2, axis=1) == 0):
        raise InfeasibleError("a user has an all-zero channel")
    lam = np.zeros(K)
    eye = np.eye(M)
    a = 1.0 + 1.0 / g
    status = MAX_ITER
    for it in range(max_iter):
        Sig = eye + (hc.T * lam) @ Hn            # I + sum lam_j h_j h_j^H
        Y = np.linalg.solve(Sig, hc.T)           # columns Sig^-1 h_k
        C = Hn @ Y                               # h_k^H Sig^-1 h_j
        q = np.real(np.diag(C))
        new = 1.0 / (a * q)
        if it >= 3:
            # Newton on lam_k a_k q_k(lam) = 1, same fixed point, fast when
            # the plain iteration crawls (interference-limited targets)
            J = np.diag(a * q) - (a * lam)[:, None] * np.abs(C) ** 2
            try:
                step = np.linalg.solve(J, 1.0 - a * lam * q)
                cand = lam + step
                if np.all(np.isfinite(cand)) and np.all(cand > 0):
                    new = cand
            except np.linalg.LinAlgError:
                pass
        if not np.all(np.isfinite(new)) or np.max(new) > bound:
            raise InfeasibleError("uplink power iteration diverged")
        done = np.max(np.abs(new - lam) / np.maximum(new, 1e-300)) < tol
        lam = new
        if done:
            status = CONVERGED
            break
    Sig = eye + (hc.T * lam) @ Hn
    U = np.linalg.solve(Sig, hc.T)
    U = U / np.linalg.norm(U, axis=0)
    Gm = np.abs(Hn @ U) ** 2                     # |h_k^H u_j|^2
    A = -Gm
    A[np.diag_indices(K)] = np.diag(Gm) / g
    try:
        p = np.linalg.solve(A, np.ones(K))
    except np.linalg.LinAlgError:
        raise InfeasibleError("downlink power system is singular") from None
    if not np.all(np.isfinite(p)) or np.any(p <= 0):
        raise InfeasibleError("no positive downlink power allocation")
    return Precoder(U * np.sqrt(p), status=status)


def solve_p3_sdp(rows, gamma, noise, **kw):
    """Power minimisation as a block-diagonal SDP (reference solver).

    Maximises ``-sum tr(W_k)`` over ``X = blkdiag(W_1..W_K) >= 0``.  The
    relaxation is tight for this problem, so the principal eigenvector of
    each block recovers the beams.  Returns ``(power, Precoder, SdpSolution)``.
    """
    rows = np.atleast_2d(np.asarray(rows, dtype=complex))
    K, M = rows.shape
    g = _targets(gamma, K)
    noise = np.broadcast_to(np.asarray(noise, dtype=float), (K,))
    n = K * M
    A = []
    for k in range(K):
        hk = np.conj(rows[k])
        Hk = np.outer(hk, np.conj(hk))
        Ak = np.zeros((n, n), dtype=complex)
        for j in range(K):
            blk = Hk / g[k] if j == k else -Hk
            Ak[j * M:(j + 1) * M, j * M:(j + 1) * M] = blk / noise[k]
        A.append(Ak)
    prob = SdpProblem(C=-np.eye(n), A=A, b=np.ones(K), senses=[GE] * K)
    sol = solve_sdp(prob, **kw)
    W = np.empty((M, K), dtype=complex)
    for k in range(K):
        blk = sol.X[k * M:(k + 1) * M, k * M:(k + 1) * M]
        lam, U = np.linalg.eigh(0.5 * (blk + herm(blk)))
        W[:, k] = U[:, -1] * math.sqrt(max(lam[-1], 0.0))
    return -sol.objective, Precoder(W), sol


# ---------------------------------------------------------------------------
# Phase design for a fixed precoder

def p4_constraints(ch, W, gamma):
    """Lifted SINR constraints ``tr(Q_k V) + c_k >= 0`` scaled by ``gamma_k sigma_k^2``.

    ``Q_k = R_kk - gamma_k sum_{j != k} R_kj`` with
    ``R_kj = [[a a^H, a b^*], [a^H b, 0]]``, ``a = diag(h_{r,k}^H) G w_j`` and
    ``b = h_{d,k}^H w_j``.  Returns ``(Q, c)`` with ``Q`` of shape
    ``(K, N+1, N+1)``.
    """
    W = np.asarray(getattr(W, "W", W))
    g = _targets(gamma, ch.K)
    N = ch.N
    a = ch.cascaded() @ W                         # (K, N, K): a[k, :, j]
    b = np.conj(ch.h_d) @ W                       # (K, K):    b[k, j]
    Q = np.zeros((ch.K, N + 1, N + 1), dtype=complex)
    c = np.empty(ch.K)
    for k in range(ch.K):
        wts = np.full(ch.K, -g[k])
        wts[k] = 1.0
        ak, bk = a[k], b[k]
        Q[k, :N, :N] = (ak * wts) @ herm(ak)
        Q[k, :N, N] = ak @ (wts * np.conj(bk))
        Q[k, N, :N] = np.conj(Q[k, :N, N])
        c[k] = float(np.sum(wts * np.abs(bk) ** 2) - g[k] * ch.noise[k])
    scale = g * ch.noise
    Q = Q / scale[:, None, None]
    Q = 0.5 * (Q + np.conj(np.swapaxes(Q, 1, 2)))
    return Q, c / scale


# the relaxed phases only seed the randomization, which re-checks every
# candidate exactly, so a looser solve is enough
_P4_TOL = dict(tol=1e-5, feas_tol=1e-6)


def _sinr_margin(ch, W, g, v):
    """``min_k SINR_k / gamma_k`` for a batch of SDR vectors ``v``."""
    rows = combined_channels(ch, np.conj(v))
    return np.min(sinr_from_rows(rows, W, ch.noise) / g, axis=-1)


def solve_p4_phases(W, ch, gamma, mode=RESIDUAL, count=1000, rng=None):
    """Phase shifts for a fixed precoder via SDR and Gaussian randomization.

    ``mode="residual"`` maximises the summed SINR residuals and keeps the
    candidate with the largest ``min_k SINR_k/gamma_k``.  ``mode="feasibility"``
    maximises the smallest lifted slack (a pure feasibility check) and keeps
    the first candidate, in sampling order, that meets every target.

    Returns ``(PhaseConfig or None, status, info)`` where status is
    ``"feasible"``, ``"infeasible"`` (negative SDP margin) or
    ``"no-candidate"`` (relaxation feasible but no sampled phases are).
    """
    W = np.asarray(getattr(W, "W", W))
    g = _targets(gamma, ch.K)
    if mode not in (RESIDUAL, FEASIBILITY):
        raise ContractError(f"unknown P4 mode {mode!r}")
    N, K = ch.N, ch.K
    Q, c = p4_constraints(ch, W, g)
    Ad, bd = unit_diagonal_constraints(N + 1)
    A = list(Ad) + list(Q)
    b = np.concatenate([bd, -c])
    senses = [EQ] * (N + 1) + [GE] * K
    C0 = np.zeros((N + 1, N + 1))
    info = {}
    if mode == RESIDUAL:
        # alpha_k >= 0 already plays the slack, so the rows are equalities
        B = np.vstack([np.zeros((N + 1, K)), -np.eye(K)])
        sol = solve_sdp(SdpProblem(C=C0, A=A, b=b, B=B, c_aux=np.ones(K)), **_P4_TOL)
        info["residual_sum"] = sol.objective
        if not sol.ok:
            # classify with the margin problem before giving up
            check = solve_sdp(SdpProblem(C=C0, A=A, b=b, senses=senses,
                                         feasibility=True), **_P4_TOL)
            info["margin"] = check.margin
            if check.status == "infeasible" or (check.margin is not None
                                                and check.margin < -1e-9):
                return None, "infeasible", info
    else:
        sol = solve_sdp(SdpProblem(C=C0, A=A, b=b, senses=senses, feasibility=True),
                        **_P4_TOL)
        info["margin"] = sol.margin
        if sol.status == "infeasible" or (sol.margin is not None and sol.margin < -1e-9):
            return None, "infeasible", info
    info["sdp_status"] = sol.status

    captured = {}

    def score(vs):
        m = _sinr_margin(ch, W, g, vs)
        captured["vs"], captured["scores"] = vs, m
        return m

    v, best = gaussian_randomization(sol.X, score, count, rng)
    info["best_margin"] = best
    info["candidate"] = PhaseConfig.from_v(v)
    thresh = 1.0 - SINR_RTOL
    if best < thresh:
        return None, "no-candidate", info
    if mode == FEASIBILITY:
        first = int(np.flatnonzero(captured["scores"] >= thresh)[0])
        v = captured["vs"][first]
        info["best_margin"] = float(captured["scores"][first])
    return PhaseConfig.from_v(v), "feasible", info


# ---------------------------------------------------------------------------
# Joint designs

def _p3_at(ch, phases, g):
    return solve_p3(combined_channels(ch, phases), g, ch.noise)


def _solution(ch, prec, phases, trace, status, iterations, scheme):
    s = sinr_from_rows(combined_channels(ch, phases), prec.W, ch.noise)
    return MultiUserSolution(prec, phases, s, list(trace), status, iterations, scheme)


def algorithm1(ch, gamma, theta_init=None, eps=1e-4, max_iter=100, mode=RESIDUAL,
               count=1000, rng=None, fallback=True, target=None):
    """Alternate MMSE precoding (fixed phases) and SDR phase design (fixed W).

    Starts by solving the precoding problem at ``theta_init`` (all zeros by
    default).  Stops when the fractional power decrease falls below ``eps``,
    when the phase step finds no feasible configuration (the last feasible
    pair is returned, status ``"p4-infeasible"``) or after ``max_iter``
    phase updates.  When no sampled phases keep the old precoder feasible,
    the best-scoring sample is still tried and kept only if it lowers the
    power (``fallback``).  With ``target`` set, iterations stop as soon as
    the power is at most ``target`` (status ``"target-met"``).
    ``trace[i]`` is the power after ``i`` phase updates.
    """
    g = _targets(gamma, ch.K)
    phases = PhaseConfig.zeros(ch.N) if theta_init is None else theta_init
    if not isinstance(phases, PhaseConfig):
        phases = PhaseConfig(phases)
    prec = _p3_at(ch, phases, g)
    trace = [prec.total_power]
    status = MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        if target is not None and trace[-1] <= target:
            status, it = TARGET_MET, it - 1
            break
        new_phases, st, info = solve_p4_phases(prec, ch, g, mode=mode, count=count,
                                               rng=rng)
        if new_phases is None and not (fallback and st == "no-candidate"):
            status = P4_INFEASIBLE
            break
        if new_phases is None:
            # no sample keeps the old W feasible; the best-margin one may
            # still lower the re-optimised power, which the test below checks
            new_phases, fell_back = info["candidate"], True
        else:
            fell_back = False
        try:
            new = _p3_at(ch, new_phases, g)
        except InfeasibleError:
            status = P4_INFEASIBLE
            break
        if new.total_power >= trace[-1] and fell_back:
            status = P4_INFEASIBLE
            break
        if new.total_power > trace[-1]:
            # the old W stays feasible for the new phases, so a rise can only
            # come from round-off; keep the incumbent
            status = CONVERGED
            break
        prec, phases = new, new_phases
        trace.append(prec.total_power)
        if (trace[-2] - trace[-1]) / trace[-2] < eps:
            status = CONVERGED
            break
    return _solution(ch, prec, phases, trace, status, it, "alternating-" + mode)


def p5_problem(ch, gamma):
    """Lifted weighted gain maximisation with weights ``1/(gamma_k sigma_k^2)``."""
    g = _targets(gamma, ch.K)
    t = 1.0 / (g * ch.noise)
    Phi = ch.cascaded()                          # (K, N, M)
    N = ch.N
    R = np.zeros((N + 1, N + 1), dtype=complex)
    for k in range(ch.K):
        R[:N, :N] += t[k] * (Phi[k] @ herm(Phi[k]))
        R[:N, N] += t[k] * (Phi[k] @ ch.h_d[k])
    R[N, :N] = np.conj(R[:N, N])
    R = 0.5 * (R + herm(R))
    A, b = unit_diagonal_constraints(N + 1)
    offset = float(np.sum(t * np.sum(np.abs(ch.h_d) ** 2, axis=1)))
    return SdpProblem(C=R, A=A, b=b, offset=offset), t


def weighted_gain(ch, t, v):
    """``sum_k t_k ||v^H Phi_k + h_{d,k}^H||^2`` for vectors ``v`` ``(..., N)``."""
    rows = combined_channels(ch, np.conj(np.asarray(v)))
    return np.sum(t * np.sum(np.abs(rows) ** 2, axis=-1), axis=-1)


def two_stage(ch, gamma, count=1000, rng=None):
    """Phases from the weighted gain SDR, then one MMSE precoding solve."""
    g = _targets(gamma, ch.K)
    if not np.any(ch.cascaded()):
        phases = PhaseConfig.zeros(ch.N)
    else:
        prob, t = p5_problem(ch, g)
        sol = solve_sdp(prob)
        v, _ = gaussian_randomization(sol.X, lambda vs: weighted_gain(ch, t, vs),
                                      count, rng)
        phases = PhaseConfig.from_v(v)
    prec = _p3_at(ch, phases, g)
    return _solution(ch, prec, phases, [prec.total_power], CONVERGED, 1, "two-stage")


def random_phase_mmse(ch, gamma, rng):
    g = _targets(gamma, ch.K)
    phases = PhaseConfig.random(ch.N, rng)
    prec = _p3_at(ch, phases, g)
    return _solution(ch, prec, phases, [prec.total_power], CONVERGED, 1, "random-phase-mmse")


def mmse_no_irs(ch, gamma):
    g = _targets(gamma, ch.K)
    prec = solve_p3(np.conj(ch.h_d), g, ch.noise)
    s = sinr_from_rows(np.conj(ch.h_d), prec.W, ch.noise)
    return MultiUserSolution(prec, PhaseConfig.zeros(ch.N), s, [prec.total_power],
                             CONVERGED, 1, "mmse-no-irs")


def zf_power(H_d, gamma, noise):
    """``tr(P (H_d^H H_d)^-1)`` with ``P = diag(gamma_k sigma_k^2)``.

    ``H_d`` is ``(M, K)`` with the direct channels ``h_{d,k}`` as columns.
    """
    H_d = np.atleast_2d(np.asarray(H_d, dtype=complex))
    M, K = H_d.shape
    g = _targets(gamma, K)
    if K > M or np.linalg.matrix_rank(H_d) < K:
        raise RankError("direct channel matrix must have full column rank")
    gram = herm(H_d) @ H_d
    inv_diag = np.real(np.diag(np.linalg.inv(gram)))
    return float(np.sum(g * np.broadcast_to(noise, (K,)) * inv_diag))


def effective_angle(w, h_d):
    """``|h_d^H w| / (||h_d|| ||w||)``."""
    w = np.asarray(w, dtype=complex).ravel()
    h_d = np.asarray(h_d, dtype=complex).ravel()
    nw, nh = np.linalg.norm(w), np.linalg.norm(h_d)
    if nw == 0 or nh == 0:
        raise ContractError("effective angle is undefined for zero vectors")
    return float(min(1.0, abs(np.vdot(h_d, w)) / (nw * nh)))


def power_decomposition(ch, phases, W):
    """Noise-normalised desired and interference powers per user.

    Returns a dict of length-K arrays: ``desired`` and ``interference`` on the
    combined channel, ``desired_direct`` and ``interference_direct`` on the
    AP-user link alone.
    """
    W = np.asarray(getattr(W, "W", W))
    out = {}
    for name, rows in (("", combined_channels(ch, phases)), ("_direct", np.conj(ch.h_d))):
        gains = np.abs(rows @ W) ** 2 / ch.noise[:, None]
        d = np.diag(gains).copy()
        out["desired" + name] = d
        out["interference" + name] = gains.sum(axis=1) - d
    return out


# ---------------------------------------------------------------------------
# Max-min rate

def _bisect_rate(feasible, hi, tol):
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def _rate_bracket(ch, P_max, with_irs):
    # a common rate cannot beat the weakest user served alone at full power
    gain = np.sum(np.abs(ch.h_d) ** 2, axis=1)
    if with_irs:
        refl = np.abs(np.conj(ch.h_r)) @ np.linalg.norm(ch.G, axis=1)
        gain = (np.sqrt(gain) + refl) ** 2
    return math.log2(1.0 + P_max * float(np.min(gain / ch.noise)))


def max_min_sinr(ch, P_max, with_irs=True, tol=1e-3, count=1000, rng=None,
                 theta_init="two-stage", eps=1e-4, max_iter=100):
    """Largest common rate (bps/Hz) all users reach with total power ``P_max``.

    Bisection on the rate; a rate is feasible when the minimum power for the
    matching SINR target is at most ``P_max``.  With the IRS the power comes
    from :func:`algorithm1`, otherwise from MMSE precoding on the direct link.
    The first test starts from ``theta_init``; later tests start from the
    phases the previous test ended with.
    Returns ``(rate, MultiUserSolution or None)``.
    """
    if P_max <= 0:
        raise ContractError("P_max must be positive")
    best = {}
    warm = {}
    with_irs = with_irs and ch.N > 0 and bool(np.any(ch.cascaded()))

    def feasible(r):
        gamma = 2.0 ** r - 1.0
        if gamma <= 0:
            return True
        try:
            if with_irs:
                init = warm.get("phases")
                if init is None and theta_init == "two-stage":
                    init = two_stage(ch, gamma, count=count, rng=rng).phases
                sol = algorithm1(ch, gamma, init, eps=eps, max_iter=max_iter,
                                 count=count, rng=rng, target=P_max)
                warm["phases"] = sol.phases
            else:
                sol = mmse_no_irs(ch, gamma)
        except InfeasibleError:
            return False
        if sol.total_power <= P_max:
            best[r] = sol
            return True
        return False

    rate = _bisect_rate(feasible, _rate_bracket(ch, P_max, with_irs), tol)
    return rate, best.get(rate)


def max_min_rate(ch, P_max, rho, tol=1e-3, count=1000, rng=None, **kw):
    """Max-min average rate when the IRS joins after a fraction ``rho`` of the block.

    Users are served by the AP alone for ``rho`` of the coherence time and by
    the AP and IRS jointly for the rest, each phase with power ``P_max``.  A
    common rate target is split into one common target per phase; the best
    split is the per-phase max-min rate, so ``r = rho r1 + (1 - rho) r2``.
    Returns ``(rate, phase-2 solution, phase-2 phases)``.
    """
    if not 0.0 <= rho < 1.0:
        raise ContractError("delay ratio must lie in [0, 1)")
    r1 = max_min_sinr(ch, P_max, with_irs=False, tol=tol)[0] if rho > 0 else 0.0
    r2, sol = max_min_sinr(ch, P_max, with_irs=True, tol=tol, count=count, rng=rng, **kw)
    rate = rho * r1 + (1.0 - rho) * r2
    return rate, (sol.W if sol else None), (sol.phases if sol else None)
