"""Built-in experiment definitions, one per reproduced figure.

Common parameters: C0 = -30 dB at 1 m, noise -80 dBm, AP-user exponent 3.5
with Rayleigh fading, 1000 Gaussian randomizations and eps = 1e-4.  Each
preset's ``description`` names its setup.
"""

from .config import parse_config

__all__ = ["PRESETS", "PRESET_VERSION", "preset", "figure_ids"]

PRESET_VERSION = "1"

_SU = """
[experiment]
scenario = {sid}
kind = single-user
trials = 300
seed = 20190
description = {desc}

[geometry]
M = 4
N = 30
N_x = 5
d0 = 51
d = {d}
dv = 2

[channel]
alpha_ai = 2
alpha_iu = 2.8
alpha_au = 3.5
beta_ai_db = inf
beta_iu_db = -inf
beta_au_db = -inf

[sweep]
name = {sweep}
values = {values}

[solvers]
names = lower-bound, sdr, alternating, ap-user-mrt, ap-irs-mrt, random-phase, no-irs

[params]
gamma_db = 10
"""

_MU = """
[experiment]
scenario = {sid}
kind = multiuser
trials = {trials}
seed = 20191
description = {desc}

[geometry]
M = {M}
N = {N}
N_x = 5
d0 = 51
users = {users}
r_ap = 20
r_irs = 3

[channel]
alpha_ai = 2.8
alpha_iu = 2.8
alpha_au = 3.5
beta_ai_db = 3
beta_iu_db = 3
beta_au_db = -inf

[sweep]
name = {sweep}
values = {values}

[solvers]
names = {solvers}

[params]
gamma_db = {gamma}
theta_init = two-stage
"""

_RELAY = """
[experiment]
scenario = fig6
kind = relay
trials = 1000
seed = 20192
description = IRS versus FD/HD amplify-and-forward relay, M = 1, d0 = d = 100 m, dv = 1 m, 5 mW total

[geometry]
M = 1
N = 100
N_x = 1
d0 = 100
d = 100
dv = 1

[channel]
alpha_ai = 3.2
alpha_iu = 2
beta_ai_db = -inf
beta_iu_db = inf
relay_noise_dbm = -80

[sweep]
name = N
values = 100, 200, 400, 800, 1200, 1600, 2000, 2400, 3000

[solvers]
names = irs, fd-relay, hd-relay

[params]
P_dbm = 6.98970004336
power_grid = 99
"""

_MAXMIN = """
[experiment]
scenario = {sid}
kind = max-min
trials = 20
seed = 20193
description = {desc}

[geometry]
M = 20
N = 80
N_x = 10
d0 = 51
layout = random-disk
users_ap = 8
users_irs = 8
r_ap = 60
r_irs = 6

[channel]
alpha_ai = 2.8
alpha_iu = 2.8
alpha_au = 3.5
beta_ai_db = 3
beta_iu_db = 3
beta_au_db = -inf

[sweep]
name = {sweep}
values = {values}

[solvers]
names = {solvers}

[params]
P_dbm = 15
rho = 0
theta_init = two-stage
"""

_FIG5_N = "10, 20, 30, 40, 50, 60"
_ALL_MU = "alternating, two-stage, random-phase-mmse, mmse-no-irs, zf-no-irs"

PRESETS = {
    "fig3": _SU.format(sid="fig3", d=50, sweep="d",
                       values=", ".join(str(d) for d in range(20, 52)),
                       desc="single user, power versus AP-user distance, N = 30, gamma = 10 dB"),
    "fig5a": _SU.format(sid="fig5a", d=50, sweep="N", values=_FIG5_N,
                        desc="single user, power versus N at d = 50 m"),
    "fig5b": _SU.format(sid="fig5b", d=41, sweep="N", values=_FIG5_N,
                        desc="single user, power versus N at d = 41 m"),
    "fig5c": _SU.format(sid="fig5c", d=15, sweep="N", values=_FIG5_N,
                        desc="single user, power versus N at d = 15 m"),
    "fig6": _RELAY,
    "fig7": _MU.format(sid="fig7", trials=300, M=4, N=30, users="1,2,3,4",
                       sweep="gamma_db", values="20", gamma=20,
                       solvers="alternating, alternating-feasibility",
                       desc="convergence of the alternating algorithm, users 1-4, M = 4"),
    "fig8": _MU.format(sid="fig8", trials=300, M=4, N=30, users="1,2",
                       sweep="gamma_db", values="0, 5, 10, 15, 20, 25", gamma=10,
                       solvers=_ALL_MU,
                       desc="two users (far from and near the IRS), power versus SINR target"),
    "fig9": _MU.format(sid="fig9", trials=300, M=4, N=30, users="1,2",
                       sweep="gamma_db", values="0, 5, 10, 15, 20, 25", gamma=10,
                       solvers="alternating, mmse-no-irs",
                       desc="signal and interference decomposition and effective angles, two users"),
    "fig10": _MU.format(sid="fig10", trials=300, M=8, N=40, users="1,2,3,4,5,6,7,8",
                        sweep="beta_ai_db", values="-20, -15, -10, -5, 0, 5, 10, 15, 20",
                        gamma=10, solvers=_ALL_MU,
                        desc="eight users, M = 8, N = 40, power versus AP-IRS Rician factor"),
    "fig11": _MAXMIN.format(sid="fig11", sweep="P_dbm", values="0, 5, 10, 15, 20",
                            solvers="irs, ap-only, ap-only:M=40, ap-only:M=50",
                            desc="max-min rate versus AP power, 16 users, M = 20 and N = 80"),
    "fig12": _MAXMIN.format(sid="fig12", sweep="rho",
                            values="0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3",
                            solvers="irs, ap-only:M=40, ap-only:M=50",
                            desc="max-min rate versus IRS delay ratio at 15 dBm"),
}


def figure_ids():
    return tuple(PRESETS)


def preset(fid, trials=None, seed=None):
    """Parsed preset ``fid`` with optional trial/seed overrides."""
    if fid not in PRESETS:
        raise KeyError(fid)
    cfg = parse_config(PRESETS[fid])
    kw = {}
    if trials is not None:
        kw["trials"] = int(trials)
    if seed is not None:
        kw["seed"] = int(seed)
    return cfg.replace(**kw) if kw else cfg
