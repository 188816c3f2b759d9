"""Monte-Carlo execution of an :class:`ExperimentConfig`.

Every trial owns ``RngStream(seed, trial)``; for each sweep value the channel
and every solver draw from fresh child streams (the channel from child 0,
solver ``s`` from a child keyed by a CRC of its label).  Sweep values of one
trial therefore share random numbers, and no result depends on the order in
which trials or solvers run.
"""

import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .. import channel as chn
from .. import multi_user as mu
from .. import relay as rl
from .. import single_user as su
from ..numerics import ContractError, RngStream, db2lin, dbm2watt, lin2db, watt2dbm
from .config import ExperimentConfig

__all__ = ["ResultRecord", "COLUMNS", "run_experiment", "run_trial", "OK",
           "INFEASIBLE", "FAILED"]

OK = "ok"
INFEASIBLE = "infeasible"
FAILED = "failed"


@dataclass
class ResultRecord:
    """One (sweep value, trial, solver) outcome.

    Vector quantities are per user.  Fields a solver does not produce stay
    ``None`` and serialise as empty cells.
    """

    scenario: str
    sweep_name: str
    sweep_value: float
    trial: int
    seed: int
    solver: str
    status: str = OK
    detail: str = ""
    total_power_dbm: float = None
    sinr_db: list = None
    iterations: int = None
    wall_ms: float = None
    rate_bps_hz: float = None
    effective_angle: list = None
    desired_combined_db: list = None
    desired_direct_db: list = None
    interference_combined_db: list = None
    interference_direct_db: list = None
    power_trace_dbm: list = None

    def sort_key(self):
        return (self.sweep_value, self.trial, self.solver)


COLUMNS = tuple(f.name for f in fields(ResultRecord))


def _key(label):
    return zlib.crc32(label.encode("utf-8"))


def _streams(cfg, trial):
    base = RngStream(cfg.seed, trial)
    return base.spawn(0), (lambda label: base.spawn(_key(label)))


def _path(flat):
    return chn.PathLossParams(C0=float(db2lin(flat["C0_db"])), D0=1.0,
                              alpha_ai=flat["alpha_ai"], alpha_iu=flat["alpha_iu"],
                              alpha_au=flat["alpha_au"])


def _rician(flat):
    return chn.RicianParams(beta_ai=chn.rician_from_db(flat["beta_ai_db"]),
                            beta_iu=chn.rician_from_db(flat["beta_iu_db"]),
                            beta_au=chn.rician_from_db(flat["beta_au_db"]))


def _irs_shape(flat):
    N, N_x = int(flat["N"]), int(flat["N_x"])
    if N < 1 or N % N_x:
        raise ContractError(f"N={N} is not a multiple of N_x={N_x}")
    return N_x, N // N_x


def _db(x):
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return [float(v) for v in lin2db(x)]


# ---------------------------------------------------------------------------
# single user

def _single_user(cfg, flat_by_solver, trial, value):
    ch_stream, solver_stream = _streams(cfg, trial)
    out = []
    channels = {}
    sdr_cache = {}
    for spec, flat in flat_by_solver:
        N_x, N_z = _irs_shape(flat)
        gkey = (flat["M"], N_x, N_z, flat["d"], flat["d0"], flat["dv"],
                flat["alpha_ai"], flat["alpha_iu"], flat["alpha_au"],
                flat["beta_ai_db"], flat["beta_iu_db"], flat["beta_au_db"],
                flat["C0_db"], flat["noise_dbm"])
        if gkey not in channels:
            geo = chn.single_user_geometry(flat["d"], flat["M"], N_x, N_z,
                                           flat["d0"], flat["dv"])
            channels[gkey] = chn.sample_channel(
                geo, _path(flat), _rician(flat), chn.noise_watts(flat["noise_dbm"], 1),
                RngStream(cfg.seed, trial).spawn(0))
        ch = channels[gkey]
        gamma = float(db2lin(flat["gamma_db"]))
        rec = ResultRecord(cfg.scenario, cfg.sweep_name, value, trial, cfg.seed, spec.label)
        t0 = time.perf_counter()
        try:
            name = spec.name
            if name in ("sdr", "lower-bound"):
                skey = (gkey, gamma, flat["randomizations"])
                if skey not in sdr_cache:
                    sdr_cache[skey] = su.solve_p2_sdr(
                        ch, gamma, count=flat["randomizations"],
                        rng=solver_stream("sdr"))
                sol = sdr_cache[skey]
                if name == "lower-bound":
                    rec.total_power_dbm = float(watt2dbm(sol.lower_bound))
                    rec.sinr_db = [float(lin2db(gamma))]
                    sol = None
            elif name == "alternating":
                sol = su.solve_p2_alternating(ch, gamma, eps=flat["eps"],
                                              max_iter=flat["max_iter"])
            elif name == "ap-user-mrt":
                sol = su.ap_user_mrt(ch, gamma)
            elif name == "ap-irs-mrt":
                sol = su.ap_irs_mrt(ch, gamma)
            elif name == "random-phase":
                sol = su.random_phase_mrt(ch, gamma, solver_stream(spec.label))
            else:
                sol = su.no_irs(ch, gamma)
            if sol is not None:
                rec.total_power_dbm = float(watt2dbm(sol.power))
                rec.sinr_db = _db([sol.snr(ch)])
                rec.iterations = sol.iterations
                if sol.trace:
                    rec.power_trace_dbm = _db(np.asarray(sol.trace) * 1e3)
        except su.InfeasibleError as exc:
            rec.status, rec.detail = INFEASIBLE, str(exc)
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# multiuser

def _users(flat):
    return [int(u) for u in str(flat["users"]).split(",") if u.strip()]


def _mu_channel(cfg, flat, trial):
    N_x, N_z = _irs_shape(flat)
    users = _users(flat)
    geo = chn.multiuser_geometry(users, flat["M"], N_x, N_z, flat["d0"],
                                 flat["r_ap"], flat["r_irs"])
    return chn.sample_channel(geo, _path(flat), _rician(flat),
                              chn.noise_watts(flat["noise_dbm"], len(users)),
                              RngStream(cfg.seed, trial).spawn(0))


def _fill_multiuser(rec, ch, sol):
    rec.total_power_dbm = float(watt2dbm(sol.total_power))
    rec.sinr_db = _db(sol.sinr)
    rec.iterations = sol.iterations
    rec.detail = sol.status
    rec.power_trace_dbm = [float(watt2dbm(p)) for p in sol.trace]
    rec.effective_angle = [mu.effective_angle(sol.W[:, k], ch.h_d[k])
                           for k in range(ch.K)]
    dec = mu.power_decomposition(ch, sol.phases, sol.W)
    rec.desired_combined_db = _db(dec["desired"])
    rec.desired_direct_db = _db(dec["desired_direct"])
    rec.interference_combined_db = _db(dec["interference"])
    rec.interference_direct_db = _db(dec["interference_direct"])


def _multiuser(cfg, flat_by_solver, trial, value):
    _, solver_stream = _streams(cfg, trial)
    out = []
    channels = {}
    inits = {}
    for spec, flat in flat_by_solver:
        gkey = tuple(sorted((k, str(v)) for k, v in flat.items()
                            if k not in ("gamma_db", "eps", "max_iter", "theta_init")))
        if gkey not in channels:
            channels[gkey] = _mu_channel(cfg, flat, trial)
        ch = channels[gkey]
        gamma = float(db2lin(flat["gamma_db"]))
        count = flat["randomizations"]
        rec = ResultRecord(cfg.scenario, cfg.sweep_name, value, trial, cfg.seed, spec.label)
        t0 = time.perf_counter()

        def shared_two_stage():
            # one two-stage run per instance, shared by the benchmark and as
            # the initial point of the alternating variants
            ikey = (gkey, gamma)
            if ikey not in inits:
                inits[ikey] = mu.two_stage(ch, gamma, count=count,
                                           rng=solver_stream("two-stage"))
            return inits[ikey]

        try:
            name = spec.name
            if name in ("alternating", "alternating-feasibility"):
                init = (shared_two_stage().phases
                        if flat["theta_init"] == "two-stage" else None)
                mode = mu.RESIDUAL if name == "alternating" else mu.FEASIBILITY
                sol = mu.algorithm1(ch, gamma, init, eps=flat["eps"],
                                    max_iter=flat["max_iter"], mode=mode,
                                    count=count, rng=solver_stream(spec.label))
            elif name == "two-stage":
                sol = shared_two_stage()
            elif name == "random-phase-mmse":
                sol = mu.random_phase_mmse(ch, gamma, solver_stream(spec.label))
            elif name == "mmse-no-irs":
                sol = mu.mmse_no_irs(ch, gamma)
            else:
                sol = None
                P = mu.zf_power(ch.h_d.T, gamma, ch.noise)
                rec.total_power_dbm = float(watt2dbm(P))
                rec.sinr_db = _db(np.full(ch.K, gamma))
            if sol is not None:
                _fill_multiuser(rec, ch, sol)
        except (su.InfeasibleError, mu.RankError) as exc:
            rec.status, rec.detail = INFEASIBLE, str(exc)
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# relay comparison (single-antenna AP, direct link ignored)

def _relay_channels(cfg, flat, trial):
    N = int(flat["N"])
    geo = chn.Geometry((0.0, 0.0, 0.0), (0.0, flat["d0"], 0.0),
                       ((flat["dv"], flat["d"], 0.0),), 1, N, 1)
    ch = chn.sample_channel(geo, _path(flat), _rician(flat),
                            chn.noise_watts(flat["noise_dbm"], 1),
                            RngStream(cfg.seed, trial).spawn(0))
    return ch.G[:, 0], ch.h_r[0]


def relay_splits(cfg):
    """Optimal AP/relay power split per (sweep value, solver), shared by all trials."""
    splits = {}
    for value in cfg.sweep_values:
        for spec in cfg.solvers:
            if spec.name == "irs":
                continue
            flat = cfg.values_at(value, spec.overrides)
            draws = [_relay_channels(cfg, flat, t) for t in range(cfg.trials)]
            g = np.stack([d[0] for d in draws])
            h = np.stack([d[1] for d in draws])
            duplex = rl.FD if spec.name == "fd-relay" else rl.HD
            P, P_r, _ = rl.optimal_power_split(
                float(dbm2watt(flat["P_dbm"])), lambda N: (g, h), flat["N"],
                grid=flat["power_grid"], sigma2=float(dbm2watt(flat["noise_dbm"])),
                sigma_r2=float(dbm2watt(flat["relay_noise_dbm"])), duplex=duplex)
            splits[(value, spec.label)] = (P, P_r)
    return splits


def _relay(cfg, flat_by_solver, trial, value, splits):
    out = []
    for spec, flat in flat_by_solver:
        g, h = _relay_channels(cfg, flat, trial)
        sigma2 = float(dbm2watt(flat["noise_dbm"]))
        P_tot = float(dbm2watt(flat["P_dbm"]))
        rec = ResultRecord(cfg.scenario, cfg.sweep_name, value, trial, cfg.seed, spec.label)
        t0 = time.perf_counter()
        if spec.name == "irs":
            snr = float(rl.irs_snr_m1(P_tot, g, h, sigma2)[0])
            rec.rate_bps_hz = float(rl.rates(snr, rl.FD))
            rec.total_power_dbm = float(watt2dbm(P_tot))
        else:
            P, P_r = splits[(value, spec.label)]
            inst = rl.RelayInstance(g, h, P, P_r, sigma2,
                                    float(dbm2watt(flat["relay_noise_dbm"])))
            snr = rl.fd_relay_snr(inst)
            duplex = rl.FD if spec.name == "fd-relay" else rl.HD
            rec.rate_bps_hz = float(rl.rates(snr, duplex))
            rec.total_power_dbm = float(watt2dbm(P))
            rec.detail = f"P_r_dbm={float(watt2dbm(P_r)):.9g}"
        rec.sinr_db = _db([snr])
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        out.append(rec)
    return out


# ---------------------------------------------------------------------------
# max-min rate with IRS activation delay

def _maxmin_positions(cfg, flat, trial):
    rng = RngStream(cfg.seed, trial).spawn(_key("positions"))
    d0 = flat["d0"]
    ap = chn.random_disk_users(rng, (0.0, 0.0), flat["r_ap"], flat["users_ap"])
    irs = chn.random_disk_users(rng, (0.0, d0), flat["r_irs"], flat["users_irs"])
    return tuple(ap + irs)


def _maxmin_channel(cfg, flat, trial):
    N_x, N_z = _irs_shape(flat)
    pos = _maxmin_positions(cfg, flat, trial)
    geo = chn.Geometry((0.0, 0.0, 0.0), (0.0, flat["d0"], 0.0), pos,
                       flat["M"], N_x, N_z)
    stream = RngStream(cfg.seed, trial).spawn(_key(f"channel-M{flat['M']}-N{flat['N']}"))
    return chn.sample_channel(geo, _path(flat), _rician(flat),
                              chn.noise_watts(flat["noise_dbm"], len(pos)), stream)


def _maxmin(cfg, flat_by_solver, trial, value, cache):
    out = []
    for spec, flat in flat_by_solver:
        rec = ResultRecord(cfg.scenario, cfg.sweep_name, value, trial, cfg.seed, spec.label)
        t0 = time.perf_counter()
        P_max = float(dbm2watt(flat["P_dbm"]))
        ch = _maxmin_channel(cfg, flat, trial)
        base = (flat["M"], flat["N"], flat["P_dbm"], flat["rate_tol"])
        nokey = ("no-irs",) + base
        if nokey not in cache:
            cache[nokey] = mu.max_min_sinr(ch.without_irs(), P_max, with_irs=False,
                                           tol=flat["rate_tol"])[0]
        r1 = cache[nokey]
        if spec.name == "ap-only":
            rate = r1
        else:
            irskey = ("irs",) + base + (flat["eps"], flat["max_iter"], flat["theta_init"],
                                        flat["randomizations"])
            if irskey not in cache:
                rng = RngStream(cfg.seed, trial).spawn(_key("maxmin-" + repr(irskey)))
                r2, sol = mu.max_min_sinr(ch, P_max, with_irs=True, tol=flat["rate_tol"],
                                          count=flat["randomizations"], rng=rng,
                                          theta_init=flat["theta_init"], eps=flat["eps"],
                                          max_iter=flat["max_iter"])
                cache[irskey] = r2
            rho = flat["rho"]
            rate = rho * r1 + (1.0 - rho) * cache[irskey]
        rec.rate_bps_hz = float(rate)
        rec.total_power_dbm = float(flat["P_dbm"])
        rec.wall_ms = (time.perf_counter() - t0) * 1e3
        out.append(rec)
    return out


# ---------------------------------------------------------------------------

def run_trial(cfg, trial, context=None):
    """All records of one trial across every sweep value."""
    out = []
    cache = {}
    for value in cfg.sweep_values:
        flat_by_solver = [(spec, cfg.values_at(value, spec.overrides))
                          for spec in cfg.solvers]
        if cfg.kind == "single-user":
            recs = _single_user(cfg, flat_by_solver, trial, value)
        elif cfg.kind == "multiuser":
            recs = _multiuser(cfg, flat_by_solver, trial, value)
        elif cfg.kind == "relay":
            recs = _relay(cfg, flat_by_solver, trial, value, context)
        else:
            recs = _maxmin(cfg, flat_by_solver, trial, value, cache)
        out.extend(recs)
    if not cfg.timing:
        for r in out:
            r.wall_ms = None
    return out


def _run_trial_star(args):
    return run_trial(*args)


def run_experiment(cfg, threads=1, progress=None):
    """Run every trial and return records sorted by (sweep value, trial, solver).

    ``threads > 1`` spreads trials over worker processes; the output does not
    depend on it.  ``progress`` is an optional callable receiving the number
    of finished trials.
    """
    if not isinstance(cfg, ExperimentConfig):
        raise TypeError("run_experiment expects an ExperimentConfig")
    context = relay_splits(cfg) if cfg.kind == "relay" else None
    tasks = [(cfg, t, context) for t in range(cfg.trials)]
    records = []
    if threads <= 1:
        for i, task in enumerate(tasks):
            records.extend(_run_trial_star(task))
            if progress:
                progress(i + 1)
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for i, recs in enumerate(pool.map(_run_trial_star, tasks)):
                records.extend(recs)
                if progress:
                    progress(i + 1)
    records.sort(key=ResultRecord.sort_key)
    return records
