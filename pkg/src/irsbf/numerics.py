"""Dense complex linear algebra, seeded sampling and dB helpers."""

import numpy as np
import scipy.linalg as sla

__all__ = [
    "ContractError",
    "FactorizationError",
    "RngStream",
    "herm",
    "is_hermitian",
    "hermitian_eig",
    "solve_hermitian_linear",
    "sample_cscg",
    "db2lin",
    "lin2db",
    "dbm2watt",
    "watt2dbm",
]

HERMITIAN_TOL = 1e-12


class ContractError(ValueError):
    """Input violates an operation's precondition."""


class FactorizationError(np.linalg.LinAlgError):
    """Matrix is singular or not positive definite."""


def herm(x):
    """Conjugate transpose."""
    return np.conj(np.swapaxes(x, -1, -2))


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.all(np.abs(a - herm(a)) <= tol * scale))


def hermitian_eig(a):
    """Eigendecomposition of a Hermitian matrix.

    Returns
    -------
    w : ndarray of float, ascending eigenvalues
    u : ndarray, unitary matrix whose columns are the eigenvectors
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] == 0 or not is_hermitian(a):
        raise ContractError("hermitian_eig requires a non-empty Hermitian matrix")
    return np.linalg.eigh(a)


def solve_hermitian_linear(a, b):
    """Solve ``a x = b`` for Hermitian positive-definite ``a`` via Cholesky."""
    a = np.asarray(a)
    if not is_hermitian(a, tol=1e-10):
        raise ContractError("solve_hermitian_linear requires a Hermitian matrix")
    try:
        c, low = sla.cho_factor(a, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"matrix is not positive definite: {exc}") from exc
    return sla.cho_solve((c, low), np.asarray(b))


class RngStream:
    """Reproducible random stream keyed by ``(seed, stream_id)``.

    Distinct stream ids spawn statistically independent PCG64 streams from
    the same master seed, so Monte-Carlo trial ``i`` always sees the same
    samples regardless of execution order. Not safe to share across threads.
    """

    def __init__(self, seed, stream_id=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        self.gen = np.random.Generator(np.random.PCG64(ss))

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"

    def spawn(self, sub_id):
        """Child stream for a sub-task; deterministic in ``sub_id``."""
        ss = np.random.SeedSequence(
            entropy=self.seed, spawn_key=(self.stream_id, int(sub_id)))
        child = RngStream.__new__(RngStream)
        child.seed, child.stream_id = self.seed, self.stream_id
        child.gen = np.random.Generator(np.random.PCG64(ss))
        return child

    def cscg(self, shape, variance=1.0):
        return sample_cscg(shape, variance, self)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.gen.uniform(low, high, size)


def sample_cscg(n, variance, rng):
    """I.i.d. circularly-symmetric complex Gaussian samples CN(0, variance).

    ``n`` may be an int or a shape tuple.
    """
    if not variance > 0:
        raise ContractError("variance must be positive")
    gen = rng.gen if isinstance(rng, RngStream) else rng
    z = gen.standard_normal(n) + 1j * gen.standard_normal(n)
    return z * np.sqrt(variance / 2.0)


def db2lin(x):
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def lin2db(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float))


def dbm2watt(x):
    return 10.0 ** ((np.asarray(x, dtype=float) - 30.0) / 10.0)


def watt2dbm(x):
    return 10.0 * np.log10(np.asarray(x, dtype=float)) + 30.0
