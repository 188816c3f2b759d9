"""Dense complex SDP solver, SDR lifting and Gaussian randomization.

Problem form handled by :func:`solve_sdp`::

    maximize    Re tr(C X) + c_aux . u + offset
    subject to  Re tr(A_i X) + B[i] . u  (= or >=)  b_i
                X Hermitian PSD,  u >= 0

``A_i`` may be a full ``(n, n)`` Hermitian matrix or a length-``n`` real
vector standing for ``diag(A_i)``; the SDR problems here are dominated by
unit-diagonal constraints so the compact form keeps the Schur complement
cheap.
"""

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .numerics import ContractError, herm, is_hermitian

__all__ = [
    "OPTIMAL", "INFEASIBLE", "MAX_ITERATIONS", "NUMERICAL_ERROR",
    "SdpProblem", "SdpSolution", "solve_sdp",
    "lift_single_user", "lifted_objective", "gaussian_randomization",
    "delift", "unit_diagonal_constraints",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
MAX_ITERATIONS = "max-iterations"
NUMERICAL_ERROR = "numerical-error"

EQ = "="
GE = ">="


@dataclass
class SdpProblem:
    """Hermitian SDP in standard form (see module docstring).

    Parameters
    ----------
    C : (n, n) Hermitian objective matrix.
    A : sequence of constraint matrices; 1-D entries are diagonals.
    b : right-hand sides.
    senses : ``"="`` or ``">="`` per constraint (default all equalities).
    B, c_aux : optional coefficients of ``p`` auxiliary scalars ``u >= 0``
        in the constraints ``(m, p)`` and in the objective ``(p,)``.
    offset : constant added to the objective.
    feasibility : if true the objective is ignored and the solver instead
        maximises the smallest slack of the ``>=`` constraints; a negative
        optimal margin means the constraint set is empty.
    """

    C: np.ndarray
    A: list
    b: np.ndarray
    senses: list = None
    B: np.ndarray = None
    c_aux: np.ndarray = None
    offset: float = 0.0
    feasibility: bool = False

    def __post_init__(self):
        self.C = np.asarray(self.C, dtype=complex)
        n = self.C.shape[0]
        if self.C.shape != (n, n) or n < 1:
            raise ContractError("C must be a non-empty square matrix")
        if not is_hermitian(self.C, tol=1e-10):
            raise ContractError("C must be Hermitian")
        self.A = [np.asarray(a) for a in self.A]
        for a in self.A:
            if a.ndim == 1:
                if a.shape != (n,) or np.iscomplexobj(a) and np.any(a.imag):
                    raise ContractError("diagonal constraint must be real of length n")
            elif a.shape != (n, n) or not is_hermitian(a, tol=1e-10):
                raise ContractError("constraint matrices must be n x n Hermitian")
        m = len(self.A)
        self.b = np.asarray(self.b, dtype=float).reshape(m)
        if self.senses is None:
            self.senses = [EQ] * m
        if len(self.senses) != m or any(s not in (EQ, GE) for s in self.senses):
            raise ContractError("senses must be '=' or '>=' per constraint")
        if self.B is None:
            self.B = np.zeros((m, 0))
        self.B = np.asarray(self.B, dtype=float).reshape(m, -1)
        p = self.B.shape[1]
        self.c_aux = (np.zeros(p) if self.c_aux is None
                      else np.asarray(self.c_aux, dtype=float).reshape(p))

    @property
    def n(self):
        return self.C.shape[0]

    @property
    def m(self):
        return len(self.A)

    def constraint_values(self, X, u=None):
        u = np.zeros(self.B.shape[1]) if u is None else u
        vals = np.array([_inner(a, X) for a in self.A]) if self.A else np.zeros(0)
        return vals + self.B @ u

    def objective(self, X, u=None):
        u = np.zeros(self.B.shape[1]) if u is None else u
        return float(np.real(np.sum(np.conj(self.C) * X))) + self.c_aux @ u + self.offset


@dataclass
class SdpSolution:
    X: np.ndarray
    objective: float
    y: np.ndarray
    status: str
    u: np.ndarray = None
    Z: np.ndarray = None
    margin: float = None
    iterations: int = 0
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    gap: float = math.inf
    info: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL


def _inner(a, X):
    if a.ndim == 1:
        return float(a @ np.real(np.diagonal(X)))
    return float(np.real(np.sum(np.conj(a) * X)))


def unit_diagonal_constraints(n):
    """``X_ii = 1`` for all ``i`` in the compact diagonal form."""
    eye = np.eye(n)
    return list(eye), np.ones(n)


class _Ops:
    """Linear map ``X -> [Re tr(A_i X)]`` split into diagonal and dense parts."""

    def __init__(self, A, n):
        self.n = n
        self.m = len(A)
        self.diag_idx = [i for i, a in enumerate(A) if a.ndim == 1]
        self.dense_idx = [i for i, a in enumerate(A) if a.ndim == 2]
        self.D = (np.stack([A[i] for i in self.diag_idx], axis=1).astype(float)
                  if self.diag_idx else np.zeros((n, 0)))
        self.F = (np.stack([A[i] for i in self.dense_idx]).astype(complex)
                  if self.dense_idx else np.zeros((0, n, n), dtype=complex))
        self.Fconj = np.conj(self.F)

    def scale(self, r):
        self.D = self.D / r[self.diag_idx][None, :] if self.diag_idx else self.D
        if self.dense_idx:
            self.F = self.F / r[self.dense_idx][:, None, None]
            self.Fconj = np.conj(self.F)

    def norms(self):
        out = np.zeros(self.m)
        if self.diag_idx:
            out[self.diag_idx] = np.linalg.norm(self.D, axis=0)
        if self.dense_idx:
            out[self.dense_idx] = np.sqrt(np.sum(np.abs(self.F) ** 2, axis=(1, 2)))
        return out

    def apply(self, X):
        out = np.empty(self.m)
        if self.diag_idx:
            out[self.diag_idx] = self.D.T @ np.real(np.diagonal(X))
        if self.dense_idx:
            out[self.dense_idx] = np.real(np.einsum("kij,ij->k", self.Fconj, X))
        return out

    def adjoint(self, y):
        S = np.zeros((self.n, self.n), dtype=complex)
        if self.diag_idx:
            S[np.diag_indices(self.n)] = self.D @ y[self.diag_idx]
        if self.dense_idx:
            S += np.tensordot(y[self.dense_idx], self.F, axes=1)
        return S

    def schur(self, W):
        """``M_ij = Re tr(A_i W A_j W)``."""
        M = np.empty((self.m, self.m))
        di, fi = self.diag_idx, self.dense_idx
        if di:
            M[np.ix_(di, di)] = self.D.T @ (np.abs(W) ** 2) @ self.D
        if fi:
            P = W[None] @ self.F @ W[None]
            M[np.ix_(fi, fi)] = np.real(np.einsum("kij,lij->kl", self.Fconj, P))
            if di:
                diagP = np.real(np.diagonal(P, axis1=1, axis2=2))
                cross = self.D.T @ diagP.T
                M[np.ix_(di, fi)] = cross
                M[np.ix_(fi, di)] = cross.T
        return M


def _max_step(L, dX):
    """Largest ``a`` with ``L L^H + a dX`` PSD (``inf`` if unbounded)."""
    Li = sla.solve_triangular(L, dX, lower=True, check_finite=False)
    T = sla.solve_triangular(L, herm(Li), lower=True, check_finite=False)
    lam = np.linalg.eigvalsh(0.5 * (T + herm(T)))[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _max_step_vec(u, du):
    neg = du < 0
    if not np.any(neg):
        return math.inf
    return float(np.min(-u[neg] / du[neg]))


def _hermitize(X):
    return 0.5 * (X + herm(X))


def _standardize(p):
    """Append slacks for '>=' rows and the margin variable for feasibility."""
    m = p.m
    ge = [i for i, s in enumerate(p.senses) if s == GE]
    B = p.B
    c = p.c_aux.copy()
    C = p.C.copy()
    b = p.b.copy()
    p_user = B.shape[1]
    slack = np.zeros((m, len(ge)))
    for j, i in enumerate(ge):
        slack[i, j] = -1.0
    B = np.hstack([B, slack])
    c = np.concatenate([c, np.zeros(len(ge))])
    t0 = None
    if p.feasibility:
        if not ge:
            raise ContractError("feasibility problem needs '>=' constraints")
        t0 = _margin_floor(p, ge)
        col = np.zeros((m, 1))
        col[ge, 0] = -1.0
        b[ge] = b[ge] + t0
        B = np.hstack([B, col])
        c = np.zeros(B.shape[1])
        c[-1] = 1.0
        C = np.zeros_like(C)
    return C, b, B, c, p_user, t0


def _margin_floor(p, ge):
    # lower bound on the optimal margin: slack at the scaled identity that best
    # satisfies the equality rows
    n = p.n
    eq = [i for i in range(p.m) if i not in ge]
    eye = np.eye(n)
    if eq:
        tr = np.array([_inner(p.A[i], eye) for i in eq])
        scale = float(tr @ p.b[eq] / max(tr @ tr, 1e-300))
        X0 = scale * eye
        resid = np.abs(np.array([_inner(p.A[i], X0) for i in eq]) - p.b[eq])
        if scale < 0 or np.max(resid) > 1e-9 * (1 + np.max(np.abs(p.b[eq]))):
            big = 1.0 + np.max(np.abs(p.b)) + sum(np.abs(a).sum() for a in p.A)
            return -10.0 * big
    else:
        X0 = eye
    slack = np.array([_inner(p.A[i], X0) for i in ge]) - p.b[ge]
    return float(np.min(slack) - 1.0 - abs(np.min(slack)))


def solve_sdp(problem, tol=1e-6, max_iter=200, feas_tol=1e-7, eig_tol=1e-8):
    """Solve an :class:`SdpProblem` with a primal-dual interior-point method.

    Infeasible-start Mehrotra predictor-corrector with Nesterov-Todd scaling
    on the complex Hermitian cone.  Rows and the objective are normalised
    internally; all reported residuals are in the caller's units.

    Returns an :class:`SdpSolution` whose ``status`` is ``"optimal"`` only if
    the relative duality gap is below ``tol``, the primal residual below
    ``feas_tol`` and ``X`` PSD to ``-eig_tol``.  ``"infeasible"`` is reported
    for feasibility problems with a negative optimal margin and for runs whose
    iterates diverge.
    """
    C, b, B, c, p_user, t0 = _standardize(problem)
    n, m = problem.n, problem.m
    ops = _Ops(problem.A, n)

    # normalisation
    rnorm = np.sqrt(ops.norms() ** 2 + np.sum(B ** 2, axis=1))
    rnorm[rnorm == 0] = 1.0
    ops.scale(rnorm)
    Bs = B / rnorm[:, None]
    bs = b / rnorm
    cnorm = math.sqrt(float(np.sum(np.abs(C) ** 2)) + float(c @ c))
    cnorm = cnorm if cnorm > 0 else 1.0
    Cs = C / cnorm
    cs = c / cnorm
    p = Bs.shape[1]

    # SDPT3-style starting point
    anorm = ops.norms()
    anorm_all = np.sqrt(anorm ** 2 + np.sum(Bs ** 2, axis=1))
    xi = max(10.0, math.sqrt(n), n * float(np.max((1 + np.abs(bs)) / (1 + anorm_all)))) \
        if m else 10.0
    eta = max(10.0, math.sqrt(n), float(np.max(anorm_all)) if m else 0.0, 1.0)
    X = xi * np.eye(n, dtype=complex)
    Z = eta * np.eye(n, dtype=complex)
    u = np.full(p, xi)
    z = np.full(p, eta)
    y = np.zeros(m)
    nu = n + p

    status = MAX_ITERATIONS
    it = 0
    best = None
    best_merit = ref_merit = math.inf
    stall = 0
    ptol, gtol = 0.1 * feas_tol, 0.1 * tol
    prev_ap = prev_ad = 0.0
    bnorm = 1.0 + np.linalg.norm(bs)
    cn = 1.0 + math.sqrt(float(np.sum(np.abs(Cs) ** 2)) + float(cs @ cs))
    for it in range(1, max_iter + 1):
        rp = bs - ops.apply(X) - Bs @ u
        Rd = ops.adjoint(y) - Cs - Z
        rd = Bs.T @ y - cs - z
        pobj = float(np.real(np.sum(np.conj(Cs) * X))) + cs @ u
        dobj = float(bs @ y)
        gap = float(np.real(np.sum(np.conj(X) * Z))) + u @ z
        mu = gap / nu
        pinf = np.linalg.norm(rp) / bnorm
        dinf = (np.linalg.norm(Rd) + np.linalg.norm(rd)) / cn
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        merit = max(pinf / ptol, dinf / ptol, relgap / gtol)
        if merit < best_merit:
            best, best_merit = (X, Z, u, z, y), merit
        if merit <= 1.0:
            status = OPTIMAL
            break
        # give up once round-off stops the merit from halving
        if merit < 0.5 * ref_merit or merit > 1e4:
            ref_merit, stall = merit, 0
        else:
            stall += 1
            if stall >= 5:
                break
        if np.max(np.abs(y)) > 1e12 or np.max(np.abs(np.diagonal(X)).real) > 1e12:
            status = INFEASIBLE
            break
        try:
            L = np.linalg.cholesky(X)
            Lz = np.linalg.cholesky(Z)
            S = herm(L) @ Z @ L
            s, U = np.linalg.eigh(_hermitize(S))
            if s[0] <= 0:
                raise np.linalg.LinAlgError("scaling lost definiteness")
            LU = L @ U
            W = _hermitize((LU * s ** -0.5) @ herm(LU))
            Gm = LU * s ** -0.25
            lam = np.sqrt(s)
            Ginv = np.linalg.inv(Gm)

            M = ops.schur(W)
            if p:
                M += (Bs * (u / z)) @ Bs.T
            M = 0.5 * (M + M.T)
            Mdiag = np.diag(M).copy()
            M[np.diag_indices(m)] += 1e-14 * max(1.0, float(np.max(Mdiag)))
            Mfac = sla.cho_factor(M, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            status = NUMERICAL_ERROR
            break

        WRdW = W @ Rd @ W

        def direction(Rmat, rc):
            rhs = ops.apply(Rmat - WRdW) + Bs @ (rc / z - (u / z) * rd) - rp
            dy = sla.cho_solve(Mfac, rhs, check_finite=False)
            dZ = _hermitize(ops.adjoint(dy) + Rd)
            dX = _hermitize(Rmat - W @ dZ @ W)
            dz = Bs.T @ dy + rd
            du = (rc - u * dz) / z
            return dX, dZ, du, dz, dy

        # predictor
        dX, dZ, du, dz, dy = direction(-X, -u * z)
        ap = min(1.0, _max_step(L, dX), _max_step_vec(u, du))
        ad = min(1.0, _max_step(Lz, dZ), _max_step_vec(z, dz))
        mu_aff = (float(np.real(np.sum(np.conj(X + ap * dX) * (Z + ad * dZ))))
                  + (u + ap * du) @ (z + ad * dz)) / nu
        # centre harder when the affine step is short
        expon = max(1.0, 3.0 * min(ap, ad) ** 2)
        sigma = min(1.0, max(0.0, mu_aff / mu) ** expon) if mu > 0 else 0.0

        # corrector
        DX = Ginv @ dX @ herm(Ginv)
        DZ = herm(Gm) @ dZ @ Gm
        T = DX @ DZ
        T = T + herm(T)
        rhs_mat = -T
        rhs_mat[np.diag_indices(n)] += 2 * sigma * mu - 2 * lam ** 2
        Smat = rhs_mat / (lam[:, None] + lam[None, :])
        Rmat = _hermitize(Gm @ Smat @ herm(Gm))
        rc = sigma * mu - u * z - du * dz
        dX, dZ, du, dz, dy = direction(Rmat, rc)

        tau = 0.9 + 0.09 * min(prev_ap, prev_ad)
        ap = min(1.0, tau * _max_step(L, dX), tau * _max_step_vec(u, du))
        ad = min(1.0, tau * _max_step(Lz, dZ), tau * _max_step_vec(z, dz))
        prev_ap, prev_ad = ap, ad
        X = _hermitize(X + ap * dX)
        u = u + ap * du
        Z = _hermitize(Z + ad * dZ)
        z = z + ad * dz
        y = y + ad * dy
        if ap < 1e-12 and ad < 1e-12:
            status = NUMERICAL_ERROR
            break
    else:
        it = max_iter

    X, Z, u, z, y = best
    return _finish(problem, (C, b, B, c), X, Z, u, z, y, rnorm, cnorm, p_user,
                   t0, it, status, tol, feas_tol, eig_tol)


def _finish(problem, std, X, Z, u, z, y, rnorm, cnorm, p_user, t0, it, status,
            tol, feas_tol, eig_tol):
    C, b, B, c = std
    y = cnorm * y / rnorm
    Z = cnorm * Z
    z = cnorm * z
    ops = _Ops(problem.A, problem.n)
    # residuals and gap on row-normalised data so they are unit-free
    pres = float(np.max(np.abs(b - ops.apply(X) - B @ u) / rnorm, initial=0.0))
    dres = float(np.linalg.norm(ops.adjoint(y) - C - Z)
                 + np.linalg.norm(B.T @ y - c - z)) / cnorm
    obj_std = float(np.real(np.sum(np.conj(C) * X))) + float(c @ u)
    dual_std = float(b @ y)
    relgap = abs(obj_std - dual_std) / cnorm / (1 + (abs(obj_std) + abs(dual_std)) / cnorm)
    u_user = u[:p_user]
    margin = None
    if problem.feasibility:
        ge = [i for i, s in enumerate(problem.senses) if s == GE]
        vals = problem.constraint_values(X, u_user)
        margin = float(np.min(vals[ge] - problem.b[ge]))
        obj = margin
    else:
        obj = problem.objective(X, u_user)
    mineig = float(np.linalg.eigvalsh(X)[0])
    if status != INFEASIBLE:
        if relgap <= tol and pres <= feas_tol and mineig >= -eig_tol:
            status = OPTIMAL
        elif status == OPTIMAL:
            status = NUMERICAL_ERROR
    if problem.feasibility and status == OPTIMAL and margin < 0:
        status = INFEASIBLE
    return SdpSolution(X=X, objective=float(obj), y=y, status=status, u=u_user,
                       Z=Z, margin=margin, iterations=it, primal_residual=pres,
                       dual_residual=dres, gap=float(relgap),
                       info={"min_eig": mineig, "dual_objective": dual_std})


# ---------------------------------------------------------------------------
# SDR helpers

def lift_single_user(Phi, h_d):
    """Homogeneous SDR of ``max_v ||v^H Phi + h_d^H||^2`` over unit-modulus v.

    Returns the ``(N+1)``-dimensional problem ``max tr(R V) + ||h_d||^2`` with
    ``diag(V) = 1``, where ``R = [[Phi Phi^H, Phi h_d], [h_d^H Phi^H, 0]]``.
    """
    Phi = np.asarray(Phi, dtype=complex)
    h_d = np.asarray(h_d, dtype=complex).ravel()
    N = Phi.shape[0]
    R = np.zeros((N + 1, N + 1), dtype=complex)
    R[:N, :N] = Phi @ herm(Phi)
    R[:N, N] = Phi @ h_d
    R[N, :N] = np.conj(R[:N, N])
    A, b = unit_diagonal_constraints(N + 1)
    return SdpProblem(C=_hermitize(R), A=A, b=b, offset=float(np.vdot(h_d, h_d).real))


def lifted_objective(v, Phi, h_d):
    """``||v^H Phi + h_d^H||^2`` for one ``v`` or a batch ``(count, N)``."""
    v = np.asarray(v)
    rows = np.conj(v) @ Phi + np.conj(np.asarray(h_d).ravel())
    return np.sum(np.abs(rows) ** 2, axis=-1)


def delift(r):
    """Project lifted candidates ``(..., N+1)`` to unit-modulus ``v`` ``(..., N)``."""
    r = np.asarray(r)
    ratio = r[..., :-1] * np.conj(r[..., -1:])
    return np.exp(1j * np.angle(ratio))


def gaussian_randomization(V, score, count, rng):
    """Recover a unit-modulus vector from a (possibly high-rank) SDR solution.

    Candidates ``r = U diag(sqrt(lambda)) xi`` with ``xi ~ CN(0, I)`` are
    de-lifted by the last (auxiliary) entry and projected entrywise to unit
    modulus.  The de-lifted principal eigenvector is always added as an extra
    candidate.  ``score`` is evaluated on a ``(candidates, N)`` batch and must
    return one real value per row; the best is kept.

    Returns
    -------
    v : ndarray, unit-modulus length ``N`` vector
    best : float
    """
    if count < 1:
        raise ContractError("count must be >= 1")
    V = _hermitize(np.asarray(V, dtype=complex))
    lam, U = np.linalg.eigh(V)
    # round-off eigenvalues would otherwise add sqrt(eps)-sized noise
    lam = np.where(lam > 1e-12 * max(lam[-1], 0.0), lam, 0.0)
    F = U * np.sqrt(lam)
    xi = rng.cscg((V.shape[0], count))
    cands = (F @ xi).T
    principal = U[:, -1] * math.sqrt(lam[-1])
    cands = np.vstack([principal[None, :], cands])
    vs = delift(cands)
    scores = np.asarray(score(vs), dtype=float)
    i = int(np.argmax(scores))
    return vs[i], float(scores[i])
