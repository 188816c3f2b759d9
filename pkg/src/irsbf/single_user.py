"""Single-user (K = 1) joint beamforming: SDR, alternating optimisation,
fixed-beam benchmarks and the received-power scaling laws."""

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import PhaseConfig, combined_channel
from .numerics import ContractError
from .sdp import gaussian_randomization, lift_single_user, lifted_objective, solve_sdp

__all__ = [
    "InfeasibleError", "SingleUserSolution", "mrt_beamformer",
    "optimal_phases_closed_form", "solve_p2_sdr", "solve_p2_alternating",
    "solve_fixed_beam", "ap_user_mrt", "ap_irs_mrt", "random_phase_mrt", "no_irs",
    "scaling_law_prediction", "empirical_received_power", "SCHEMES",
]

IDENTITY, RANDOM, OPTIMAL = "identity", "random", "optimal"


class InfeasibleError(RuntimeError):
    """The SINR/SNR targets cannot be met (e.g. every channel is zero)."""


@dataclass
class SingleUserSolution:
    phases: PhaseConfig
    w_bar: np.ndarray
    power: float
    lower_bound: float = None
    iterations: int = 1
    trace: list = field(default_factory=list)
    scheme: str = ""

    @property
    def w(self):
        return math.sqrt(self.power) * self.w_bar

    def snr(self, ch):
        row = combined_channel(ch, self.phases)
        return float(np.abs(row @ self.w) ** 2 / ch.noise[0])


def _check_single(ch):
    if ch.K != 1:
        raise ContractError("single-user solver needs a ChannelSet with K = 1")


def mrt_beamformer(row):
    """Unit-norm MRT direction for the combined row channel ``h^H``.

    The result satisfies ``row @ w == ||row||`` (real, positive).
    """
    row = np.asarray(row, dtype=complex).ravel()
    nrm = np.linalg.norm(row)
    if nrm == 0:
        raise ContractError("MRT is undefined for a zero channel")
    return np.conj(row) / nrm


def optimal_phases_closed_form(ch, w_bar):
    """Phase shifts maximising ``|(h_r^H Theta G + h_d^H) w_bar|`` for fixed ``w_bar``.

    Every reflected path ``h_{r,n}^* (G w_bar)_n`` is rotated onto the phase of
    the direct term ``h_d^H w_bar``.  With no direct term the common rotation
    is set to 0; elements whose reflected path vanishes get phase 0.
    """
    _check_single(ch)
    w_bar = np.asarray(w_bar, dtype=complex).ravel()
    a = np.conj(ch.h_r[0]) * (ch.G @ w_bar)
    b = np.vdot(ch.h_d[0], w_bar)
    phi0 = float(np.angle(b)) if b != 0 else 0.0
    theta = np.where(a != 0, phi0 - np.angle(a), 0.0)
    return PhaseConfig(theta)


def _power(ch, gamma, gain):
    if not gain > 0:
        raise InfeasibleError("combined channel is identically zero")
    return gamma * ch.noise[0] / gain


def solve_p2_sdr(ch, gamma, count=1000, rng=None):
    """Semidefinite relaxation followed by Gaussian randomization.

    ``lower_bound`` is the power needed if the relaxation were tight, which
    no unit-modulus configuration can beat.
    """
    _check_single(ch)
    if gamma <= 0:
        raise ContractError("gamma must be positive")
    Phi = ch.cascaded()[0]
    h_d = ch.h_d[0]
    if not np.any(Phi) and not np.any(h_d):
        raise InfeasibleError("combined channel is identically zero")
    if not np.any(Phi):
        # no reflected path: phases are irrelevant and the bound is tight
        phases = PhaseConfig.zeros(ch.N)
        gain = float(np.vdot(h_d, h_d).real)
        bound = gain
    else:
        sol = solve_sdp(lift_single_user(Phi, h_d))
        bound = max(sol.objective, float(sol.info["dual_objective"]) + float(np.vdot(h_d, h_d).real))
        v, _ = gaussian_randomization(sol.X, lambda vs: lifted_objective(vs, Phi, h_d),
                                      count, rng)
        phases = PhaseConfig.from_v(v)
    row = combined_channel(ch, phases)
    w_bar = mrt_beamformer(row)
    gain = float(np.vdot(row, row).real)
    return SingleUserSolution(phases, w_bar, _power(ch, gamma, gain),
                              lower_bound=_power(ch, gamma, max(bound, gain)),
                              scheme="sdr")


def solve_p2_alternating(ch, gamma, eps=1e-4, max_iter=100, w_init=None):
    """Alternate closed-form phases and MRT until the power stalls.

    Starts from MRT on the direct channel unless ``w_init`` is given, and
    stops when the fractional power decrease drops below ``eps``.  The power
    trace is non-increasing by construction.
    """
    _check_single(ch)
    h_d = ch.h_d[0]
    if not np.any(h_d) and not np.any(ch.cascaded()):
        raise InfeasibleError("combined channel is identically zero")
    if w_init is not None:
        w_bar = np.asarray(w_init, dtype=complex)
    elif np.any(h_d):
        w_bar = h_d / np.linalg.norm(h_d)
    else:
        w_bar = mrt_beamformer(combined_channel(ch, PhaseConfig.zeros(ch.N)))
    trace = []
    phases = None
    for it in range(1, max_iter + 1):
        phases = optimal_phases_closed_form(ch, w_bar)
        row = combined_channel(ch, phases)
        w_bar = mrt_beamformer(row)
        trace.append(_power(ch, gamma, float(np.vdot(row, row).real)))
        if len(trace) > 1 and (trace[-2] - trace[-1]) / trace[-2] < eps:
            break
    return SingleUserSolution(phases, w_bar, trace[-1], iterations=len(trace),
                              trace=trace, scheme="alternating")


def solve_fixed_beam(ch, gamma, w_bar, scheme="fixed-beam"):
    """Keep the beam direction, optimise phases and power around it."""
    w_bar = np.asarray(w_bar, dtype=complex)
    w_bar = w_bar / np.linalg.norm(w_bar)
    phases = optimal_phases_closed_form(ch, w_bar)
    gain = float(np.abs(combined_channel(ch, phases) @ w_bar) ** 2)
    return SingleUserSolution(phases, w_bar, _power(ch, gamma, gain), scheme=scheme)


def ap_user_mrt(ch, gamma):
    """Beam fixed to the direct AP-user channel."""
    return solve_fixed_beam(ch, gamma, ch.h_d[0], scheme="ap-user-mrt")


def ap_irs_mrt(ch, gamma):
    """Beam fixed to the AP-IRS channel (first row of G)."""
    return solve_fixed_beam(ch, gamma, np.conj(ch.G[0]), scheme="ap-irs-mrt")


def random_phase_mrt(ch, gamma, rng):
    """Uniform random phases, MRT on the resulting combined channel."""
    phases = PhaseConfig.random(ch.N, rng)
    row = combined_channel(ch, phases)
    return SingleUserSolution(phases, mrt_beamformer(row),
                              _power(ch, gamma, float(np.vdot(row, row).real)),
                              scheme="random-phase")


def no_irs(ch, gamma):
    """Direct-link MRT without the surface."""
    h_d = ch.h_d[0]
    gain = float(np.vdot(h_d, h_d).real)
    return SingleUserSolution(PhaseConfig.zeros(ch.N), h_d / math.sqrt(gain) if gain else h_d,
                              _power(ch, gamma, gain), scheme="no-irs")


SCHEMES = ("lower-bound", "sdr", "alternating", "ap-user-mrt", "ap-irs-mrt",
           "random-phase", "no-irs")


# ---------------------------------------------------------------------------
# Scaling laws (M = 1, direct link ignored)

def scaling_law_prediction(N, P, rho_h2, rho_g2, mode):
    """Large-N received power for identity/random or optimal phases."""
    if mode in (IDENTITY, RANDOM):
        return N * P * rho_h2 * rho_g2
    if mode == OPTIMAL:
        return N ** 2 * P * math.pi ** 2 * rho_h2 * rho_g2 / 16.0
    raise ContractError(f"unknown phase mode {mode!r}")


def empirical_received_power(N, P, rho_h2, rho_g2, mode, trials, rng, chunk=64):
    """Monte-Carlo mean of ``P |h_r^H Theta g|^2`` over Rayleigh draws.

    Returns ``(mean, samples)``.  Optimal phases use the same co-phasing rule
    as :func:`optimal_phases_closed_form` (no direct term, so zero common
    rotation).
    """
    out = np.empty(trials)
    done = 0
    while done < trials:
        t = min(chunk, trials - done)
        h_r = rng.cscg((t, N), rho_h2)
        g = rng.cscg((t, N), rho_g2)
        a = np.conj(h_r) * g
        if mode == IDENTITY:
            c = np.ones_like(a)
        elif mode == RANDOM:
            c = np.exp(1j * rng.uniform(0.0, 2 * math.pi, (t, N)))
        elif mode == OPTIMAL:
            c = np.exp(-1j * np.angle(a))
        else:
            raise ContractError(f"unknown phase mode {mode!r}")
        out[done:done + t] = P * np.abs(np.sum(a * c, axis=1)) ** 2
        done += t
    return float(out.mean()), out
