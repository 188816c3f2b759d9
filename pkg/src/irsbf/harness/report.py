"""Aggregation, CSV/metadata output and optional figure rendering."""

import csv
import io
import json
import math
import os
from collections import defaultdict
from dataclasses import dataclass, fields

import numpy as np

from .. import __version__
from .runner import COLUMNS, OK

__all__ = ["SummaryRow", "summarize", "trace_summary", "coverage", "format_value",
           "records_csv", "summary_csv", "write_outputs", "render_figure",
           "DB_METRICS", "PER_USER_METRICS"]

DB_METRICS = {"total_power_dbm", "desired_combined_db", "desired_direct_db",
              "interference_combined_db", "interference_direct_db", "sinr_db"}
PER_USER_METRICS = ("effective_angle", "desired_combined_db", "desired_direct_db",
                    "interference_combined_db", "interference_direct_db")


def format_value(v):
    """CSV cell text: 9 significant digits, ``;``-joined lists, empty for None."""
    if v is None:
        return ""
    if isinstance(v, (list, tuple, np.ndarray)):
        return ";".join(format_value(x) for x in v)
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.9g}"
    return str(v)


@dataclass
class SummaryRow:
    sweep_value: float
    solver: str
    metric: str
    user: int
    count: int
    excluded: int
    mean: float
    std: float


SUMMARY_COLUMNS = tuple(f.name for f in fields(SummaryRow))


def _mean_std(vals, db):
    vals = np.asarray(vals, dtype=float)
    if vals.size == 0:
        return math.nan, math.nan
    std = float(np.std(vals, ddof=1)) if vals.size > 1 else 0.0
    if db:
        # average the linear quantity, report it in dB
        with np.errstate(divide="ignore"):
            return float(10 * np.log10(np.mean(10 ** (vals / 10)))), std
    return float(np.mean(vals)), std


def summarize(records, metrics=None):
    """Mean and standard deviation per (sweep value, solver, metric, user).

    dB quantities are averaged as linear powers and converted back; ``std``
    is the sample standard deviation of the per-trial values in the units
    they are stored in (dB for dB metrics).  Records whose status is not
    ``ok`` are excluded and counted in ``excluded``.  Per-user metrics get
    one row per user (``user`` is 1-based, 0 for scalar metrics).
    """
    records = list(records)
    if not records:
        raise ValueError("summarize needs at least one record")
    if metrics is None:
        metrics = [m for m in ("total_power_dbm", "rate_bps_hz") + PER_USER_METRICS
                   if any(getattr(r, m) is not None for r in records)]
    groups = defaultdict(list)
    for r in records:
        groups[(r.sweep_value, r.solver)].append(r)
    rows = []
    for (value, solver), recs in sorted(groups.items()):
        ok = [r for r in recs if r.status == OK]
        excluded = len(recs) - len(ok)
        for m in metrics:
            vals = [getattr(r, m) for r in ok if getattr(r, m) is not None]
            if not vals:
                continue
            db = m in DB_METRICS
            if isinstance(vals[0], (list, tuple)):
                for u in range(len(vals[0])):
                    mean, std = _mean_std([v[u] for v in vals], db)
                    rows.append(SummaryRow(value, solver, m, u + 1, len(vals),
                                           excluded, mean, std))
            else:
                mean, std = _mean_std(vals, db)
                rows.append(SummaryRow(value, solver, m, 0, len(vals), excluded, mean, std))
    return rows


def trace_summary(records):
    """Mean power per iteration (linear average, dBm) across trials.

    Shorter traces are padded with their final value, i.e. a converged run
    keeps contributing its converged power.
    """
    groups = defaultdict(list)
    for r in records:
        if r.status == OK and r.power_trace_dbm:
            groups[(r.sweep_value, r.solver)].append(r.power_trace_dbm)
    rows = []
    for (value, solver), traces in sorted(groups.items()):
        L = max(len(t) for t in traces)
        mat = np.array([list(t) + [t[-1]] * (L - len(t)) for t in traces])
        lin = np.mean(10 ** (mat / 10), axis=0)
        for i, p in enumerate(10 * np.log10(lin)):
            rows.append((value, solver, i, float(p), len(traces)))
    return rows


def coverage(rows, solver, threshold_dbm, metric="total_power_dbm"):
    """Largest sweep value (distance) whose mean required power stays at or
    under ``threshold_dbm``, interpolating linearly at the first crossing.

    Returns ``(distance, beyond)`` where ``beyond`` is true when the curve
    never crosses inside the swept range.
    """
    pts = sorted((r.sweep_value, r.mean) for r in rows
                 if r.solver == solver and r.metric == metric and r.user == 0)
    if not pts:
        raise ValueError(f"no {metric} rows for solver {solver!r}")
    if pts[0][1] > threshold_dbm:
        return pts[0][0], False
    for (d0, p0), (d1, p1) in zip(pts, pts[1:]):
        if p1 > threshold_dbm:
            return d0 + (threshold_dbm - p0) * (d1 - d0) / (p1 - p0), False
    return pts[-1][0], True


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for row in rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def records_csv(records):
    return _csv_text(COLUMNS, ([getattr(r, c) for c in COLUMNS] for r in records))


def summary_csv(rows):
    return _csv_text(SUMMARY_COLUMNS, ([getattr(r, c) for c in SUMMARY_COLUMNS]
                                       for r in rows))


def _metadata(cfg, records, preset_version):
    status = defaultdict(int)
    for r in records:
        status[r.status] += 1
    return {
        "scenario": cfg.scenario,
        "kind": cfg.kind,
        "description": cfg.description,
        "seed": cfg.seed,
        "trials": cfg.trials,
        "code_version": __version__,
        "preset_version": preset_version,
        "columns": list(COLUMNS),
        "records": len(records),
        "status_counts": dict(sorted(status.items())),
        "aggregation": "dB metrics averaged as linear powers then converted",
        "config": cfg.to_ini(),
    }


def write_outputs(cfg, records, out_dir, preset_version=None, plot=True):
    """Write records, summary, trace (if any) and metadata; return the paths."""
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, cfg.scenario)
    paths = {}

    def put(suffix, text):
        p = stem + suffix
        with open(p, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        paths[suffix] = p

    put("_records.csv", records_csv(records))
    rows = summarize(records)
    put("_summary.csv", summary_csv(rows))
    trace = trace_summary(records) if cfg.kind == "multiuser" else []
    if trace:
        put("_trace.csv", _csv_text(("sweep_value", "solver", "iteration",
                                     "mean_power_dbm", "count"), trace))
    put("_metadata.json", json.dumps(_metadata(cfg, records, preset_version),
                                     indent=2, sort_keys=True) + "\n")
    if plot:
        paths[".png"] = render_figure(cfg, rows, trace, stem + ".png")
    return paths


# ---------------------------------------------------------------------------
# figures

_RC = {
    "font.size": 8,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.0,
    "lines.markersize": 3,
    "figure.dpi": 150,
}

_XLABELS = {"d": "AP-user horizontal distance d (m)", "N": "number of elements N",
            "gamma_db": "SINR target (dB)", "beta_ai_db": r"Rician factor $\beta_{AI}$ (dB)",
            "P_dbm": "AP transmit power (dBm)", "rho": r"delay ratio $\rho$"}


def render_figure(cfg, rows, trace, path):
    """Plot the summary next to the CSV output (PNG).

    Power scenarios plot mean power per solver against the sweep variable,
    rate scenarios the mean rate.  Multiuser runs with traces add a
    per-iteration panel; runs with per-user decompositions add them too.
    """
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    metric = "rate_bps_hz" if cfg.kind in ("relay", "max-min") else "total_power_dbm"
    panels = [("main", metric)]
    if trace and len(cfg.sweep_values) == 1:
        panels = [("trace", None)]
    decomp = [r for r in rows if r.metric == "desired_combined_db"]
    if decomp and len(cfg.sweep_values) > 1 and cfg.scenario.startswith("fig9"):
        users = sorted({r.user for r in decomp})
        panels += [("decomp", u) for u in users] + [("angle", u) for u in users]

    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(3.4 * len(panels), 2.6),
                                 squeeze=False)
        for ax, (kind, arg) in zip(axes[0], panels):
            if kind == "trace":
                for solver in sorted({t[1] for t in trace}):
                    pts = [(t[2], t[3]) for t in trace if t[1] == solver]
                    ax.plot(*zip(*pts), marker="o", label=solver)
                ax.set_xlabel("iteration")
                ax.set_ylabel("transmit power (dBm)")
            elif kind == "main":
                for solver in sorted({r.solver for r in rows if r.metric == arg}):
                    pts = sorted((r.sweep_value, r.mean) for r in rows
                                 if r.solver == solver and r.metric == arg and r.user == 0)
                    ax.plot(*zip(*pts), marker="o", label=solver)
                ax.set_xlabel(_XLABELS.get(cfg.sweep_name, cfg.sweep_name))
                ax.set_ylabel("rate (bps/Hz)" if arg == "rate_bps_hz"
                              else "transmit power (dBm)")
            elif kind == "decomp":
                for m in ("desired_combined_db", "desired_direct_db",
                          "interference_combined_db", "interference_direct_db"):
                    for solver in sorted({r.solver for r in rows if r.metric == m}):
                        pts = sorted((r.sweep_value, r.mean) for r in rows
                                     if r.solver == solver and r.metric == m and r.user == arg)
                        if solver.startswith("alternating"):
                            ax.plot(*zip(*pts), marker=".", label=m.replace("_db", ""))
                ax.set_title(f"user {arg}")
                ax.set_xlabel(_XLABELS.get(cfg.sweep_name, cfg.sweep_name))
                ax.set_ylabel("power / noise (dB)")
            else:
                for solver in sorted({r.solver for r in rows if r.metric == "effective_angle"}):
                    pts = sorted((r.sweep_value, r.mean) for r in rows
                                 if r.solver == solver and r.metric == "effective_angle"
                                 and r.user == arg)
                    ax.plot(*zip(*pts), marker=".", label=solver)
                ax.set_title(rf"$\rho_{arg}$")
                ax.set_xlabel(_XLABELS.get(cfg.sweep_name, cfg.sweep_name))
            ax.grid(alpha=0.3)
            ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path, metadata={"Software": None})
        plt.close(fig)
    return path
