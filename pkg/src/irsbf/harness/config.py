"""Experiment definitions as plain-text INI files.

Sections and keys
-----------------
``[experiment]``
    ``scenario`` (id), ``kind`` (single-user, multiuser, relay, max-min),
    ``trials``, ``seed``, optional ``description`` and ``timing``.
``[geometry]``
    ``M``, ``N``, ``N_x`` (the IRS has ``N_x`` columns and ``N / N_x``
    rows), ``d0``, ``d``, ``dv``, ``users`` (comma list of layout indices
    or a count for the random layout), ``layout`` (``fixed`` or
    ``random-disk``), ``r_ap``, ``r_irs``, ``users_ap``, ``users_irs``.
``[channel]``
    ``C0_db``, ``noise_dbm``, ``relay_noise_dbm``, ``alpha_ai``,
    ``alpha_iu``, ``alpha_au`` and Rician factors ``beta_ai_db``,
    ``beta_iu_db``, ``beta_au_db`` (dB, ``inf`` for pure LoS, ``-inf`` for
    Rayleigh).
``[sweep]``
    ``name`` (any key of ``[geometry]``, ``[channel]`` or ``[params]``) and
    ``values`` (comma list).
``[solvers]``
    ``names``: comma list; a solver may carry overrides as
    ``name:key=value;key=value``.
``[params]``
    ``gamma_db``, ``eps``, ``randomizations``, ``max_iter``,
    ``theta_init`` (zeros or two-stage), ``P_dbm``, ``rho``,
    ``power_grid``, ``rate_tol``.
"""

import configparser
import io
import math
from dataclasses import dataclass, field

__all__ = ["ConfigError", "ExperimentConfig", "SolverSpec", "parse_config",
           "load_config", "KINDS", "SOLVERS"]

KINDS = ("single-user", "multiuser", "relay", "max-min")

SOLVERS = {
    "single-user": ("lower-bound", "sdr", "alternating", "ap-user-mrt",
                    "ap-irs-mrt", "random-phase", "no-irs"),
    "multiuser": ("alternating", "alternating-feasibility", "two-stage",
                  "random-phase-mmse", "mmse-no-irs", "zf-no-irs"),
    "relay": ("irs", "fd-relay", "hd-relay"),
    "max-min": ("irs", "ap-only"),
}

GEOMETRY_DEFAULTS = {
    "M": 4, "N": 30, "N_x": 5, "d0": 51.0, "d": 50.0, "dv": 2.0,
    "users": "1", "layout": "fixed", "r_ap": 20.0, "r_irs": 3.0,
    "users_ap": 8, "users_irs": 8,
}
CHANNEL_DEFAULTS = {
    "C0_db": -30.0, "noise_dbm": -80.0, "relay_noise_dbm": -80.0,
    "alpha_ai": 2.0, "alpha_iu": 2.8, "alpha_au": 3.5,
    "beta_ai_db": math.inf, "beta_iu_db": -math.inf, "beta_au_db": -math.inf,
}
PARAM_DEFAULTS = {
    "gamma_db": 10.0, "eps": 1e-4, "randomizations": 1000, "max_iter": 100,
    "theta_init": "zeros", "P_dbm": 15.0, "rho": 0.0, "power_grid": 99,
    "rate_tol": 1e-3,
}
_INT_KEYS = {"M", "N", "N_x", "users_ap", "users_irs", "randomizations",
             "max_iter", "power_grid"}
_STR_KEYS = {"users", "layout", "theta_init"}


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


def _num(key, raw):
    if key in _STR_KEYS:
        return str(raw).strip()
    try:
        val = float(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from None
    if key in _INT_KEYS:
        if not math.isfinite(val) or val != int(val):
            raise ConfigError(f"{key}: expected an integer, got {raw!r}")
        return int(val)
    return val


@dataclass(frozen=True)
class SolverSpec:
    name: str
    overrides: tuple = ()

    @property
    def label(self):
        if not self.overrides:
            return self.name
        return self.name + ":" + ";".join(f"{k}={v}" for k, v in self.overrides)

    @classmethod
    def parse(cls, text):
        text = text.strip()
        name, _, rest = text.partition(":")
        pairs = []
        for item in filter(None, (s.strip() for s in rest.split(";"))):
            k, eq, v = item.partition("=")
            if not eq:
                raise ConfigError(f"solver override {item!r} needs key=value")
            pairs.append((k.strip(), v.strip()))
        return cls(name.strip(), tuple(pairs))


@dataclass
class ExperimentConfig:
    scenario: str
    kind: str
    geometry: dict = field(default_factory=dict)
    channel: dict = field(default_factory=dict)
    sweep_name: str = "gamma_db"
    sweep_values: tuple = (10.0,)
    solvers: tuple = ()
    params: dict = field(default_factory=dict)
    trials: int = 1
    seed: int = 0
    description: str = ""
    timing: bool = False

    def __post_init__(self):
        self.geometry = {**GEOMETRY_DEFAULTS, **self.geometry}
        self.channel = {**CHANNEL_DEFAULTS, **self.channel}
        self.params = {**PARAM_DEFAULTS, **self.params}
        self.solvers = tuple(s if isinstance(s, SolverSpec) else SolverSpec.parse(s)
                             for s in self.solvers)
        self.sweep_values = tuple(self.sweep_values)
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown kind {self.kind!r}; expected one of {KINDS}")
        if not self.sweep_values:
            raise ConfigError("sweep values must be non-empty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not self.solvers:
            raise ConfigError("at least one solver is required")
        known = SOLVERS[self.kind]
        for s in self.solvers:
            if s.name not in known:
                raise ConfigError(f"unknown solver {s.name!r} for {self.kind}; "
                                  f"expected one of {known}")
        if self.sweep_name not in {**self.geometry, **self.channel, **self.params}:
            raise ConfigError(f"sweep variable {self.sweep_name!r} is not a known key")
        if self.params["theta_init"] not in ("zeros", "two-stage"):
            raise ConfigError("theta_init must be 'zeros' or 'two-stage'")
        if self.geometry["layout"] not in ("fixed", "random-disk"):
            raise ConfigError("layout must be 'fixed' or 'random-disk'")

    def values_at(self, sweep_value, overrides=()):
        """Flat parameter dict with the sweep variable and solver overrides applied."""
        flat = {**self.geometry, **self.channel, **self.params}
        flat[self.sweep_name] = _num(self.sweep_name, sweep_value)
        for k, v in overrides:
            if k not in flat:
                raise ConfigError(f"unknown override key {k!r}")
            flat[k] = _num(k, v)
        return flat

    def to_ini(self):
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["experiment"] = {"scenario": self.scenario, "kind": self.kind,
                            "trials": str(self.trials), "seed": str(self.seed),
                            "description": self.description,
                            "timing": str(self.timing).lower()}
        cp["geometry"] = {k: _fmt(v) for k, v in self.geometry.items()}
        cp["channel"] = {k: _fmt(v) for k, v in self.channel.items()}
        cp["sweep"] = {"name": self.sweep_name,
                       "values": ", ".join(_fmt(v) for v in self.sweep_values)}
        cp["solvers"] = {"names": ", ".join(s.label for s in self.solvers)}
        cp["params"] = {k: _fmt(v) for k, v in self.params.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def replace(self, **kw):
        data = {k: getattr(self, k) for k in self.__dataclass_fields__}
        data.update(kw)
        return ExperimentConfig(**data)


def _fmt(v):
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(v)


def parse_config(text):
    """Build an :class:`ExperimentConfig` from INI text."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if not cp.has_section("experiment"):
        raise ConfigError("missing [experiment] section")
    ex = cp["experiment"]
    try:
        scenario = ex["scenario"].strip()
        kind = ex["kind"].strip()
    except KeyError as exc:
        raise ConfigError(f"[experiment] is missing {exc.args[0]!r}") from None
    try:
        trials = int(ex.get("trials", "1"))
        seed = int(ex.get("seed", "0"))
    except ValueError:
        raise ConfigError("trials and seed must be integers") from None
    if seed < 0 or seed >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")

    def section(name, defaults):
        if not cp.has_section(name):
            return {}
        out = {}
        for k, v in cp[name].items():
            if k not in defaults:
                raise ConfigError(f"[{name}] has unknown key {k!r}")
            out[k] = _num(k, v)
        return out

    geometry = section("geometry", GEOMETRY_DEFAULTS)
    channel = section("channel", CHANNEL_DEFAULTS)
    params = section("params", PARAM_DEFAULTS)
    if not cp.has_section("sweep"):
        raise ConfigError("missing [sweep] section")
    name = cp["sweep"].get("name", "").strip()
    raw = [v.strip() for v in cp["sweep"].get("values", "").split(",") if v.strip()]
    values = tuple(_num(name, v) for v in raw)
    names = cp["solvers"].get("names", "") if cp.has_section("solvers") else ""
    solvers = tuple(SolverSpec.parse(s) for s in names.split(",") if s.strip())
    timing = ex.get("timing", "false").strip().lower() in ("1", "true", "yes")
    return ExperimentConfig(scenario=scenario, kind=kind, geometry=geometry,
                            channel=channel, sweep_name=name, sweep_values=values,
                            solvers=solvers, params=params, trials=trials, seed=seed,
                            description=ex.get("description", "").strip(),
                            timing=timing)


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text)
