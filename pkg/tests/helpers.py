"""Instance generators shared by the test modules."""

import numpy as np

from irsbf.channel import ChannelSet
from irsbf.numerics import herm
from irsbf.sdp import GE, EQ, SdpProblem


def random_channel(rng, K=2, M=4, N=8, noise=1.0, scale_r=1.0, scale_d=1.0):
    """Unit-variance Rayleigh instance without geometry."""
    G = rng.cscg((N, M))
    h_r = scale_r * rng.cscg((K, N))
    h_d = scale_d * rng.cscg((K, M))
    return ChannelSet(G, h_r, h_d, np.full(K, noise))


def _herm(rng, n):
    A = rng.cscg((n, n))
    return 0.5 * (A + herm(A))


def _pd(rng, n):
    A = rng.cscg((n, n))
    return A @ herm(A) / n + 0.5 * np.eye(n)


def random_feasible_sdp(rng, n, m, with_ge=False):
    """Strictly primal and dual feasible SDP.

    Either kind of row (Hermitian matrix or a diagonal vector) may appear.
    ``X0 > 0`` gives ``b``; ``C = sum y0_i A_i - Z0`` with ``Z0 > 0`` keeps the
    dual strictly feasible (for ``>=`` rows ``y0 <= 0``).
    """
    X0 = _pd(rng, n)
    A = []
    for i in range(m):
        if i == 0:
            A.append(np.eye(n))           # keeps the primal bounded
        elif rng.uniform() < 0.2:
            A.append(rng.gen.standard_normal(n))
        else:
            A.append(_herm(rng, n))
    senses = [EQ] * m
    if with_ge:
        senses = [EQ] + [GE if rng.uniform() < 0.5 else EQ for _ in range(m - 1)]
    b = np.array([float(a @ np.real(np.diag(X0))) if a.ndim == 1
                  else float(np.real(np.trace(a @ X0))) for a in A])
    slack = np.array([rng.uniform(0.1, 1.0) if s == GE else 0.0 for s in senses])
    b = b - slack
    y0 = rng.gen.standard_normal(m)
    y0[0] = abs(y0[0]) + m               # dominant identity row
    for i, s in enumerate(senses):
        if s == GE:
            y0[i] = -abs(y0[i])
    Z0 = _pd(rng, n)
    C = sum(y * (np.diag(a) if a.ndim == 1 else a) for y, a in zip(y0, A)) - Z0
    C = 0.5 * (C + herm(C))
    return SdpProblem(C=C, A=A, b=b, senses=senses)


def sdp_certificates(prob, sol):
    """Relative gap, absolute primal infeasibility and min eigenvalue of X."""
    vals = prob.constraint_values(sol.X, sol.u)
    res = vals - prob.b
    eq = np.array([s == EQ for s in prob.senses])
    viol = np.concatenate([np.abs(res[eq]), np.maximum(-res[~eq], 0.0)])
    pinf = float(np.max(viol))
    pobj = prob.objective(sol.X, sol.u)
    dobj = float(prob.b @ sol.y) + prob.offset
    gap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
    return gap, pinf, float(np.linalg.eigvalsh(sol.X)[0])


def grid_best_gain(a, b, points=360):
    """Exhaustive max of ``|b + sum_n e^{j theta_n} a_n|^2`` over a phase grid (M = 1)."""
    a = np.asarray(a, dtype=complex).ravel()
    th = np.exp(1j * 2 * np.pi * np.arange(points) / points)
    if a.size == 1:
        return float(np.max(np.abs(b + a[0] * th) ** 2))
    if a.size == 2:
        s = b + a[0] * th[:, None] + a[1] * th[None, :]
        return float(np.max(np.abs(s) ** 2))
    if a.size == 3:
        inner = a[1] * th[:, None] + a[2] * th[None, :]
        best = 0.0
        for c in th:
            best = max(best, float(np.max(np.abs(b + a[0] * c + inner) ** 2)))
        return best
    raise ValueError("grid oracle supports N <= 3")
