"""Geometry, path loss and Rician fading for the AP / IRS / users layout.

Conventions
-----------
``G`` is the ``(N, M)`` AP->IRS matrix.  ``h_r[k]`` and ``h_d[k]`` store the
column vectors h_{r,k} (length N) and h_{d,k} (length M); the physical
channels seen by user ``k`` are their conjugate transposes, so the combined
row channel is ``conj(h_r[k]) * exp(1j*theta) @ G + conj(h_d[k])``.
"""

import math
from dataclasses import dataclass

import numpy as np

from .numerics import ContractError, dbm2watt, db2lin

__all__ = [
    "AP_IRS", "IRS_USER", "AP_USER",
    "Geometry", "PathLossParams", "RicianParams", "ChannelSet", "PhaseConfig",
    "path_loss", "los_component", "steering_vector", "sample_channel",
    "combined_channel", "combined_channels", "sinr", "sinr_from_rows",
    "single_user_geometry", "fig2_distances", "multiuser_geometry",
    "random_disk_users", "rician_from_db", "noise_watts",
]

AP_IRS = "ap-irs"
IRS_USER = "irs-user"
AP_USER = "ap-user"

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Geometry:
    """Node positions in metres plus array sizes.

    The AP is a ULA along the x-axis and the IRS a URA in the x-z plane, both
    centred on their reference positions.  Users are single-antenna.
    """

    ap_position: tuple
    irs_position: tuple
    user_positions: tuple
    M: int
    N_x: int
    N_z: int
    antenna_spacing: float = 0.5

    def __post_init__(self):
        if self.M < 1 or self.N_x < 1 or self.N_z < 1:
            raise ContractError("array sizes must be >= 1")
        pts = [self.ap_position, self.irs_position, *self.user_positions]
        arr = np.asarray(pts, dtype=float)
        if arr.shape[1] != 3 or not np.all(np.isfinite(arr)):
            raise ContractError("positions must be finite 3-D points")
        object.__setattr__(self, "ap_position", tuple(map(float, self.ap_position)))
        object.__setattr__(self, "irs_position", tuple(map(float, self.irs_position)))
        object.__setattr__(self, "user_positions",
                           tuple(tuple(map(float, p)) for p in self.user_positions))
        if self.d0 <= 0 or any(d <= 0 for d in self.d_irs_user + self.d_ap_user):
            raise ContractError("link distances must be strictly positive")

    @property
    def N(self):
        return self.N_x * self.N_z

    @property
    def K(self):
        return len(self.user_positions)

    @property
    def d0(self):
        return _dist(self.ap_position, self.irs_position)

    @property
    def d_ap_user(self):
        return [_dist(self.ap_position, u) for u in self.user_positions]

    @property
    def d_irs_user(self):
        return [_dist(self.irs_position, u) for u in self.user_positions]

    def ap_elements(self):
        """Element offsets of the AP ULA, in wavelengths."""
        p = np.arange(self.M) - (self.M - 1) / 2.0
        out = np.zeros((self.M, 3))
        out[:, 0] = p * self.antenna_spacing
        return out

    def irs_elements(self):
        """Element offsets of the IRS URA, x-fastest, in wavelengths."""
        px = np.arange(self.N_x) - (self.N_x - 1) / 2.0
        pz = np.arange(self.N_z) - (self.N_z - 1) / 2.0
        zz, xx = np.meshgrid(pz, px, indexing="ij")
        out = np.zeros((self.N, 3))
        out[:, 0] = xx.ravel() * self.antenna_spacing
        out[:, 2] = zz.ravel() * self.antenna_spacing
        return out


def _dist(a, b):
    return float(np.linalg.norm(np.subtract(a, b, dtype=float)))


@dataclass(frozen=True)
class PathLossParams:
    """``L(d) = C0 (d / D0)^-alpha`` with one exponent per link type."""

    C0: float = 1e-3
    D0: float = 1.0
    alpha_ai: float = 2.0
    alpha_iu: float = 2.8
    alpha_au: float = 3.5

    def __post_init__(self):
        if not self.C0 > 0 or not self.D0 > 0:
            raise ContractError("C0 and D0 must be positive")
        if min(self.alpha_ai, self.alpha_iu, self.alpha_au) < 0:
            raise ContractError("path-loss exponents must be >= 0")

    def exponent(self, link):
        return {AP_IRS: self.alpha_ai, IRS_USER: self.alpha_iu,
                AP_USER: self.alpha_au}[link]


@dataclass(frozen=True)
class RicianParams:
    """Linear Rician factors; ``math.inf`` means pure LoS."""

    beta_ai: float = math.inf
    beta_iu: float = 0.0
    beta_au: float = 0.0

    def __post_init__(self):
        for b in (self.beta_ai, self.beta_iu, self.beta_au):
            if not (b >= 0):
                raise ContractError("Rician factors must be >= 0 or inf")

    def factor(self, link):
        return {AP_IRS: self.beta_ai, IRS_USER: self.beta_iu,
                AP_USER: self.beta_au}[link]


def rician_from_db(value):
    """Rician factor from a dB value; ``"inf"`` / ``inf`` map to pure LoS."""
    if isinstance(value, str):
        if value.strip().lower() in ("inf", "+inf", "infinity"):
            return math.inf
        value = float(value)
    if math.isinf(value):
        return math.inf if value > 0 else 0.0
    return float(db2lin(value))


@dataclass(frozen=True)
class ChannelSet:
    """One realisation of every channel plus per-user noise powers (W)."""

    G: np.ndarray
    h_r: np.ndarray
    h_d: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.G, dtype=complex))
        h_r = np.atleast_2d(np.asarray(self.h_r, dtype=complex))
        h_d = np.atleast_2d(np.asarray(self.h_d, dtype=complex))
        noise = np.atleast_1d(np.asarray(self.noise, dtype=float))
        N, M = G.shape
        K = h_d.shape[0]
        if h_r.shape != (K, N) or h_d.shape != (K, M) or noise.shape != (K,):
            raise ContractError(
                f"inconsistent shapes G{G.shape} h_r{h_r.shape} "
                f"h_d{h_d.shape} noise{noise.shape}")
        if np.any(noise <= 0):
            raise ContractError("noise powers must be positive")
        for name, val in (("G", G), ("h_r", h_r), ("h_d", h_d), ("noise", noise)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def N(self):
        return self.G.shape[0]

    @property
    def M(self):
        return self.G.shape[1]

    @property
    def K(self):
        return self.h_d.shape[0]

    def user(self, k):
        """Single-user view of user ``k``."""
        return ChannelSet(self.G, self.h_r[k:k + 1], self.h_d[k:k + 1],
                          self.noise[k:k + 1])

    def subset(self, users):
        users = list(users)
        return ChannelSet(self.G, self.h_r[users], self.h_d[users], self.noise[users])

    def cascaded(self):
        """``Phi_k = diag(h_{r,k}^H) G`` for every user, shape ``(K, N, M)``."""
        return np.conj(self.h_r)[:, :, None] * self.G[None, :, :]

    def without_irs(self):
        return ChannelSet(np.zeros_like(self.G), np.zeros_like(self.h_r),
                          self.h_d, self.noise)


@dataclass(frozen=True)
class PhaseConfig:
    """IRS phase shifts wrapped into ``[0, 2*pi)``, unit amplitude."""

    theta: np.ndarray

    def __post_init__(self):
        th = np.mod(np.asarray(self.theta, dtype=float).ravel(), TWO_PI)
        th[th >= TWO_PI] = 0.0
        th.setflags(write=False)
        object.__setattr__(self, "theta", th)

    @property
    def N(self):
        return self.theta.size

    @property
    def coeffs(self):
        """Reflection coefficients ``exp(1j*theta)``."""
        return np.exp(1j * self.theta)

    @property
    def matrix(self):
        return np.diag(self.coeffs)

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n))

    @classmethod
    def from_coeffs(cls, c):
        return cls(np.angle(c))

    @classmethod
    def from_v(cls, v):
        """From the SDR variable ``v`` with ``v^H = [e^{j theta_1}, ...]``."""
        return cls(-np.angle(v))

    @classmethod
    def random(cls, n, rng):
        return cls(rng.uniform(0.0, TWO_PI, n))


def path_loss(d, params, alpha):
    """Distance-dependent linear power gain ``C0 (d/D0)^-alpha``."""
    if not d > 0:
        raise ContractError("distance must be positive")
    return params.C0 * (d / params.D0) ** (-alpha)


def steering_vector(offsets, direction):
    """Far-field response ``exp(j 2 pi <offset, direction>)`` (offsets in wavelengths)."""
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    return np.exp(1j * TWO_PI * (np.asarray(offsets) @ u))


def _los(rx_pos, rx_offsets, tx_pos, tx_offsets):
    u = np.subtract(tx_pos, rx_pos, dtype=float)
    a_rx = steering_vector(rx_offsets, u)
    a_tx = steering_vector(tx_offsets, -u)
    return np.outer(a_rx, np.conj(a_tx))


def los_component(geometry, link, k=0):
    """Unit-modulus LoS matrix of one link.

    ``AP_IRS`` gives the ``(N, M)`` rank-one matrix; ``IRS_USER`` gives
    ``h_{r,k}`` (length N) and ``AP_USER`` gives ``h_{d,k}`` (length M) as
    column vectors, i.e. the conjugate of the user's receive row.
    """
    single = np.zeros((1, 3))
    if link == AP_IRS:
        return _los(geometry.irs_position, geometry.irs_elements(),
                    geometry.ap_position, geometry.ap_elements())
    user = geometry.user_positions[k]
    if link == IRS_USER:
        row = _los(user, single, geometry.irs_position, geometry.irs_elements())
    elif link == AP_USER:
        row = _los(user, single, geometry.ap_position, geometry.ap_elements())
    else:
        raise ContractError(f"unknown link {link!r}")
    return np.conj(row[0])


def _rician(los, beta, gain, nlos):
    if math.isinf(beta):
        return math.sqrt(gain) * los
    return math.sqrt(gain) * (math.sqrt(beta / (1 + beta)) * los
                              + math.sqrt(1 / (1 + beta)) * nlos)


def sample_channel(geometry, path, rician, noise_powers, rng):
    """Draw one :class:`ChannelSet` realisation.

    Each link is the Rician mixture of its LoS component and unit-variance
    Rayleigh fading, scaled by the square root of its path loss.  The
    Rayleigh parts are always drawn (G, then h_r, then h_d) so the random
    sequence does not depend on the Rician factors.
    """
    N, M, K = geometry.N, geometry.M, geometry.K
    noise = np.broadcast_to(np.asarray(noise_powers, dtype=float), (K,)).copy()
    g_nlos = rng.cscg((N, M))
    r_nlos = rng.cscg((K, N))
    d_nlos = rng.cscg((K, M))

    G = _rician(los_component(geometry, AP_IRS), rician.beta_ai,
                path_loss(geometry.d0, path, path.alpha_ai), g_nlos)
    h_r = np.empty((K, N), dtype=complex)
    h_d = np.empty((K, M), dtype=complex)
    for k in range(K):
        h_r[k] = _rician(los_component(geometry, IRS_USER, k), rician.beta_iu,
                         path_loss(geometry.d_irs_user[k], path, path.alpha_iu),
                         r_nlos[k])
        h_d[k] = _rician(los_component(geometry, AP_USER, k), rician.beta_au,
                         path_loss(geometry.d_ap_user[k], path, path.alpha_au),
                         d_nlos[k])
    return ChannelSet(G, h_r, h_d, noise)


def combined_channels(ch, phases):
    """Rows ``h_k^H = h_{r,k}^H Theta G + h_{d,k}^H`` for all users, ``(K, M)``.

    ``phases`` may also be an array of reflection coefficients of shape
    ``(N,)`` or ``(batch, N)``; the result then has shape ``(batch, K, M)``.
    """
    c = phases.coeffs if isinstance(phases, PhaseConfig) else np.asarray(phases)
    return (np.conj(ch.h_r) * c[..., None, :]) @ ch.G + np.conj(ch.h_d)


def combined_channel(ch, phases, k=0):
    return combined_channels(ch, phases)[k]


def sinr_from_rows(rows, W, noise):
    """SINR of each user given combined rows ``(..., K, M)`` and precoder ``(M, K)``.

    Leading batch dimensions of ``rows`` are kept, so a stack of candidate
    phase configurations is scored in one call.
    """
    gains = np.abs(np.asarray(rows) @ np.asarray(W)) ** 2
    desired = np.diagonal(gains, axis1=-2, axis2=-1)
    interference = gains.sum(axis=-1) - desired
    return desired / (interference + np.asarray(noise))


def sinr(ch, phases, W):
    """Per-user SINR for phase configuration ``phases`` and precoder ``W``."""
    W = np.asarray(getattr(W, "W", W)).reshape(ch.M, -1)
    return sinr_from_rows(combined_channels(ch, phases), W, ch.noise)


# ---------------------------------------------------------------------------
# Layout helpers for the simulation setups

def fig2_distances(d, d0=51.0, dv=2.0):
    """AP-user and IRS-user distances for a user at horizontal offset ``d``."""
    return math.hypot(d, dv), math.hypot(d0 - d, dv)


def single_user_geometry(d, M=4, N_x=5, N_z=6, d0=51.0, dv=2.0):
    """User on the line parallel to AP-IRS, ``dv`` metres off it."""
    return Geometry((0.0, 0.0, 0.0), (0.0, d0, 0.0), ((dv, d, 0.0),), M, N_x, N_z)


def multiuser_geometry(users, M=4, N_x=5, N_z=6, d0=51.0, r_ap=20.0, r_irs=3.0):
    """Eight-user layout; ``users`` are 1-based indices into U1..U8.

    Odd users sit evenly on a circle of radius ``r_ap`` around the AP, even
    users evenly on the AP-facing half circle of radius ``r_irs`` around the
    IRS.
    """
    pos = {}
    for i, k in enumerate((1, 3, 5, 7)):
        phi = math.pi / 4 + i * math.pi / 2
        pos[k] = (r_ap * math.cos(phi), r_ap * math.sin(phi), 0.0)
    for i, k in enumerate((2, 4, 6, 8)):
        phi = math.pi + math.pi * (2 * i + 1) / 8
        pos[k] = (r_irs * math.cos(phi), d0 + r_irs * math.sin(phi), 0.0)
    return Geometry((0.0, 0.0, 0.0), (0.0, d0, 0.0),
                    tuple(pos[k] for k in users), M, N_x, N_z)


def random_disk_users(rng, centre, radius, count, min_dist=1.0):
    """Uniform-in-disk positions (z = 0) at least ``min_dist`` from ``centre``."""
    out = []
    while len(out) < count:
        r = radius * math.sqrt(rng.uniform())
        if r < min_dist:
            continue
        phi = rng.uniform(0.0, TWO_PI)
        out.append((centre[0] + r * math.cos(phi), centre[1] + r * math.sin(phi), 0.0))
    return out


def noise_watts(dbm, K):
    return np.full(K, float(dbm2watt(dbm)))
