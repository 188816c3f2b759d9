"""Full/half-duplex amplify-and-forward relay baselines (direct link ignored)."""

from dataclasses import dataclass

import numpy as np

from .numerics import ContractError

__all__ = [
    "RelayInstance", "fd_relay_snr", "relay_snr_general", "asymptotic_fd_snr",
    "optimal_power_split", "rates", "irs_snr_m1", "FD", "HD",
]

FD = "FD"
HD = "HD"


@dataclass(frozen=True)
class RelayInstance:
    """AP->relay channel ``g``, relay->user channel ``h_r`` (column vectors), powers in W."""

    g: np.ndarray
    h_r: np.ndarray
    P: float
    P_r: float
    sigma2: float
    sigma_r2: float

    def __post_init__(self):
        if self.P < 0 or self.P_r < 0:
            raise ContractError("transmit powers must be non-negative")
        if not (self.sigma2 > 0 and self.sigma_r2 > 0):
            raise ContractError("noise powers must be positive")
        g = np.asarray(self.g, dtype=complex).ravel()
        h = np.asarray(self.h_r, dtype=complex).ravel()
        if g.shape != h.shape:
            raise ContractError("g and h_r must have the same length")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "h_r", h)

    @property
    def x_t(self):
        return self.h_r / np.linalg.norm(self.h_r)

    @property
    def x_r(self):
        return self.g / np.linalg.norm(self.g)


def relay_snr_general(inst, x_t, x_r):
    """User SNR for arbitrary relay transmit/receive beamformers ``x_t``, ``x_r``.

    Accepts batches ``(..., N)`` of beamformers.
    """
    x_t = np.asarray(x_t)
    x_r = np.asarray(x_r)
    rg = np.abs(np.conj(x_r) @ inst.g) ** 2           # |x_r^H g|^2
    ht = np.abs(x_t @ np.conj(inst.h_r)) ** 2         # |h_r^H x_t|^2
    nt = np.sum(np.abs(x_t) ** 2, axis=-1)
    nr = np.sum(np.abs(x_r) ** 2, axis=-1)
    num = inst.P * inst.P_r * rg * ht
    den = (inst.P_r * inst.sigma_r2 * nr * ht + inst.P * inst.sigma2 * nt * rg
           + inst.sigma_r2 * inst.sigma2 * nt * nr)
    return num / den


def _fd_closed(P, P_r, g2, h2, sigma2, sigma_r2):
    return P * P_r * g2 * h2 / (P_r * sigma_r2 * h2 + P * sigma2 * g2 + sigma_r2 * sigma2)


def fd_relay_snr(inst):
    """SNR with the matched beamformers ``x_t = h_r/||h_r||`` and ``x_r = g/||g||``."""
    g2 = float(np.vdot(inst.g, inst.g).real)
    h2 = float(np.vdot(inst.h_r, inst.h_r).real)
    return _fd_closed(inst.P, inst.P_r, g2, h2, inst.sigma2, inst.sigma_r2)


def asymptotic_fd_snr(P, P_r, rho_g2, rho_h2, sigma2, sigma_r2, N):
    """Large-N FD relay SNR; linear in ``N``."""
    if min(P, P_r, rho_g2, rho_h2, sigma2, sigma_r2, N) <= 0:
        raise ContractError("all inputs must be positive")
    return P * P_r * rho_g2 * rho_h2 * N / (P_r * sigma_r2 * rho_h2 + P * sigma2 * rho_g2)


def rates(snr, duplex=FD):
    """Achievable rate in bps/Hz; half duplex pays a factor 1/2 for its two slots."""
    snr = np.asarray(snr, dtype=float)
    if duplex == FD:
        return np.log2(1.0 + snr)
    if duplex == HD:
        return 0.5 * np.log2(1.0 + snr)
    raise ContractError(f"duplex must be {FD!r} or {HD!r}")


def optimal_power_split(P_total, sampler, N, grid=99, sigma2=1e-11, sigma_r2=1e-11,
                        duplex=FD):
    """Exhaustive search over the AP/relay split of ``P_total``.

    ``sampler(N)`` returns channel draws ``(g, h_r)`` as ``(trials, N)``
    arrays; the same draws are reused for every grid point.  The grid is
    ``P = P_total * i / (grid + 1)`` for ``i = 1..grid`` so both endpoints
    (one node silent) are excluded.

    Returns ``(P, P_r, mean rate)``.
    """
    if P_total <= 0:
        raise ContractError("P_total must be positive")
    if grid < 2:
        raise ContractError("grid needs at least two points")
    g, h = sampler(N)
    g2 = np.sum(np.abs(np.atleast_2d(g)) ** 2, axis=-1)
    h2 = np.sum(np.abs(np.atleast_2d(h)) ** 2, axis=-1)
    Ps = P_total * np.arange(1, grid + 1) / (grid + 1)
    snr = _fd_closed(Ps[:, None], (P_total - Ps)[:, None], g2[None], h2[None],
                     sigma2, sigma_r2)
    mean_rate = np.mean(rates(snr, duplex), axis=1)
    i = int(np.argmax(mean_rate))
    return float(Ps[i]), float(P_total - Ps[i]), float(mean_rate[i])


def irs_snr_m1(P, g, h_r, sigma2):
    """Single-antenna AP SNR with optimally co-phased reflection, ``(trials, N)`` batches."""
    amp = np.sum(np.abs(np.atleast_2d(g)) * np.abs(np.atleast_2d(h_r)), axis=-1)
    return P * amp ** 2 / sigma2
