"""Plain-text and CSV tables plus SVG figures from stored study data.

Rendering reads only ``<out>/data/*.csv``, so re-running it over the same
data reproduces the same bytes.  SVG output is made deterministic by a fixed
hash salt and by dropping the date metadata.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Optional, Sequence

import matplotlib
from matplotlib.figure import Figure

from .lab import (FSM_METRICS, PUBLISHED_POWER_ROWS, PUBLISHED_RUNTIME_H, PUBLISHED_WEIGHTED_MA,
                  PowerRow, PowerTable, estimate_runtime, weighted_current)
from .plant import pwm_to_speed
from .stats import summarize, t_test

SVG_SALT = "lfl"
VOLTS = 5.0


class ReportError(RuntimeError):
    pass


def _num(s: str):
    if s == "none":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return [{k: _num(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def load_data(out_dir) -> dict[str, list[dict]]:
    d = Path(out_dir) / "data"
    if not d.is_dir():
        return {}
    return {p.stem: read_table(p) for p in sorted(d.glob("*.csv"))}


# --- formatting -----------------------------------------------------------------

def f2(x: Optional[float], nd: int = 2) -> str:
    return "-" if x is None else f"{x:.{nd}f}"


def ci(lo: float, hi: float, nd: int = 2) -> str:
    return f"[{lo:.{nd}f}, {hi:.{nd}f}]"


def p_text(p: float) -> str:
    return "< 1e-300" if p == 0.0 else f"{p:.3g}"


class Table:
    def __init__(self, name: str, title: str, header: Sequence[str]):
        self.name, self.title, self.header = name, title, tuple(header)
        self.rows: list[tuple] = []
        self.notes: list[str] = []

    def add(self, *row) -> None:
        self.rows.append(tuple(str(c) for c in row))

    def text(self) -> str:
        cols = list(zip(self.header, *self.rows)) if self.rows else [(h,) for h in self.header]
        widths = [max(len(c) for c in col) for col in cols]
        line = "  ".join("-" * w for w in widths)

        def fmt(r):
            return "  ".join(c.rjust(w) if i else c.ljust(w)
                             for i, (c, w) in enumerate(zip(r, widths))).rstrip()
        out = [self.title, "=" * len(self.title), fmt(self.header), line]
        out += [fmt(r) for r in self.rows]
        out += self.notes
        return "\n".join(out) + "\n"

    def write_csv(self, path: Path) -> None:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.header)
            w.writerows(self.rows)


# --- tables ---------------------------------------------------------------------

def _by(rows, key):
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[key], []).append(r)
    return groups


def tracking_table(rows: list[dict]) -> Table:
    groups = _by(rows, "controller")
    onoff = [r["mean"] for r in groups["onoff"]]
    pid = [r["mean"] for r in groups["pid"]]
    t = Table("pid_vs_onoff", "Tracking error, PID vs on-off (curved track)",
              ("No.", "Control Type", "Mean (cm)", "Std Dev (cm)", "Min (cm)", "Max (cm)",
               "95% CI", "Trials", "Off-track"))
    for i, (label, key, vals) in enumerate((("On-Off Control", "onoff", onoff),
                                             ("PID Control", "pid", pid)), start=1):
        s = summarize(vals)
        off = sum(r["status"] != "ok" for r in groups[key])
        t.add(i, label, f2(s.mean, 3), f2(s.std, 3), f2(s.min, 3), f2(s.max, 3),
              ci(s.ci_low, s.ci_high, 3), s.n, off)
    so, sp = summarize(onoff), summarize(pid)
    res = t_test(onoff, pid)
    welch = t_test(onoff, pid, welch=True)
    t.notes += [
        f"Improvement: mean {100 * (1 - sp.mean / so.mean):.1f}%, "
        f"std dev {100 * (1 - sp.std / so.std):.1f}%; PID/on-off ratio {sp.mean / so.mean:.3f}",
        f"Student t-test (on-off > PID): t = {res.t:.3f}, df = {res.df:.0f}, "
        f"p one-tailed = {p_text(res.p_one)}, p two-tailed = {p_text(res.p_two)}, "
        f"Cohen's d = {res.cohens_d:.3f}",
        f"Welch t-test: t = {welch.t:.3f}, df = {welch.df:.1f}, "
        f"p one-tailed = {p_text(welch.p_one)}",
    ]
    return t


def speed_table(rows: list[dict]) -> Table:
    t = Table("speed_sweep", "Tracking error across base speeds (PID, curved track)",
              ("No.", "Base PWM", "Speed (m/s)", "Mean (cm)", "Std Dev (cm)", "Max (cm)",
               "RMSE (cm)", "95% CI", "Trials", "Off-track"))
    means = []
    for i, (pwm, group) in enumerate(sorted(_by(rows, "base_pwm").items()), start=1):
        s = summarize([r["mean"] for r in group])
        rms = math.sqrt(math.fsum(r["rmse"] ** 2 for r in group) / len(group))
        mx = max(r["max"] for r in group)
        off = sum(r["status"] != "ok" for r in group)
        means.append(s.mean)
        t.add(i, pwm, f2(pwm_to_speed(pwm)), f2(s.mean, 3), f2(s.std, 3), f2(mx, 2),
              f2(rms, 3), ci(s.ci_low, s.ci_high, 3), s.n, off)
    mono = all(b > a for a, b in zip(means, means[1:]))
    t.notes.append(f"Mean error strictly increasing with speed: {'yes' if mono else 'no'}")
    return t


def detection_table(rows: list[dict]) -> Table:
    t = Table("detection", "Obstacle detection by distance",
              ("No.", "Distance (cm)", "Detection (%)", "False Pos (%)", "Response (ms)",
               "95% CI (ms)", "Samples"))
    det_all, fp_all, resp_all = [], [], []
    for i, (d, group) in enumerate(sorted(_by(rows, "distance").items()), start=1):
        det = [r["detected"] for r in group]
        fp = [r["false_positive"] for r in group]
        resp = [r["response_ms"] for r in group if r["response_ms"] is not None]
        det_all += det
        fp_all += fp
        resp_all += resp
        if resp:
            s = summarize(resp)
            rm, rci = f2(s.mean, 1), ci(s.ci_low, s.ci_high, 1)
        else:
            rm, rci = "-", "-"
        t.add(i, f"{100 * d:.0f}", f2(100 * sum(det) / len(det), 1),
              f2(100 * sum(fp) / len(fp), 1), rm, rci, len(group))
    t.add("", "Overall", f2(100 * sum(det_all) / len(det_all), 1),
          f2(100 * sum(fp_all) / len(fp_all), 1),
          f2(summarize(resp_all).mean, 1) if resp_all else "-", "", len(det_all))
    t.notes.append("Response clock: first ultrasonic sample below 0.20 m to AVOID entry.")
    return t


_METRIC_LABELS = {
    "detect_to_avoid": "Detect to avoid",
    "avoid_completion": "Avoid completion",
    "line_reacquisition": "Line reacquisition",
    "recovery_from_loss": "Recovery from loss",
}


def fsm_table(rows: list[dict]) -> Table:
    t = Table("fsm_timing", "Supervisor timing",
              ("No.", "Metric", "Mean (s)", "Std Dev (s)", "Success (%)", "95% CI (s)",
               "Trials"))
    i = 0
    for scenario in ("obstacle", "loss", "line-removed"):
        for metric in FSM_METRICS:
            group = [r for r in rows if r["scenario"] == scenario and r["metric"] == metric]
            if not group or metric == "relapse":
                continue
            i += 1
            label = _METRIC_LABELS[metric]
            if scenario == "line-removed":
                label += " (line removed)"
            vals = [r["value"] for r in group if r["value"] is not None]
            succ = f2(100 * len(vals) / len(group), 1)
            if vals:
                s = summarize(vals)
                t.add(i, label, f2(s.mean), f2(s.std), succ, ci(s.ci_low, s.ci_high), len(group))
            else:
                t.add(i, label, "timeout", "-", succ, "-", len(group))
    relapse = [r["value"] for r in rows if r["metric"] == "relapse" and r["scenario"] == "loss"
               and r["value"] is not None]
    if relapse:
        t.notes.append(f"Line lost again within 2 s of recovery: "
                       f"{100 * sum(relapse) / len(relapse):.1f}% of recoveries")
    t.notes.append("Success: metric completed within the 10 s timeout.")
    return t


def power_table(rows: list[dict], params: list[dict]) -> Table:
    p = {r["key"]: r["value"] for r in params}
    capacity, derating = float(p["capacity_mah"]), float(p["derating"])
    table = PowerTable(tuple(PowerRow(r["mode"], float(r["current_ma"]), float(r["duty_pct"]))
                             for r in rows), capacity)
    sim_table = PowerTable(tuple(PowerRow(r["mode"], float(r["current_ma"]),
                                          float(r["simulated_duty_pct"])) for r in rows),
                           capacity)
    t = Table("power", "Power budget across operating states",
              ("No.", "Operating Mode", "Current (mA)", "Power (W)", "Duty (%)",
               "Weighted (mA)", "Sim. Duty (%)", "Sim. Weighted (mA)"))
    for i, (r, s) in enumerate(zip(table.rows, sim_table.rows), start=1):
        t.add(i, r.mode, f2(r.current_ma, 0), f2(r.current_ma * VOLTS / 1000, 3),
              f2(r.duty_pct, 0), f2(r.current_ma * r.duty_pct / 100, 1), f2(s.duty_pct, 1),
              f2(s.current_ma * s.duty_pct / 100, 1))
    w = weighted_current(table)
    ws = weighted_current(sim_table)
    rt = estimate_runtime(capacity, w, derating)
    t.add("", "Weighted average", "", "", "", f2(w, 1), "", f2(ws, 1))
    printed_rows = tuple(r.mode for r in table.rows) == tuple(r.mode for r in PUBLISHED_POWER_ROWS)
    t.notes.append(f"Runtime on {capacity:.0f} mAh (derating {derating:g}): {rt:.2f} h at "
                   f"{w:.1f} mA; {estimate_runtime(capacity, ws, derating):.2f} h at the "
                   f"simulated duty cycle ({ws:.1f} mA)")
    if printed_rows:
        t.notes.append(
            f"Published figures: {PUBLISHED_WEIGHTED_MA:.0f} mA and {PUBLISHED_RUNTIME_H:.1f} h. "
            f"The rows above sum to {w:.1f} mA ({w - PUBLISHED_WEIGHTED_MA:+.1f} mA); "
            f"{capacity:.0f}/{PUBLISHED_WEIGHTED_MA:.0f} = "
            f"{estimate_runtime(capacity, PUBLISHED_WEIGHTED_MA):.2f} h, not "
            f"{PUBLISHED_RUNTIME_H:.1f} h ({PUBLISHED_RUNTIME_H - rt:+.2f} h vs {rt:.2f} h).")
    return t


def soak_table(rows: list[dict]) -> Table:
    t = Table("soak", "Determinism soak", ("Key", "Value"))
    for r in rows:
        v = r["value"]
        t.add(r["key"], f"{v:.6g}" if isinstance(v, float) else ("-" if v is None else v))
    return t


# --- figures --------------------------------------------------------------------

def _rms(vals) -> float:
    return math.sqrt(math.fsum(v * v for v in vals) / len(vals))


def _save(fig: Figure, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": SVG_SALT, "svg.fonttype": "path"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def tracking_figure(trace: list[dict], path: Path) -> None:
    t = [r["t"] for r in trace]
    pid = [r["pid"] for r in trace]
    onoff = [r["onoff"] for r in trace]
    fig = Figure(figsize=(6.4, 3.2))
    ax = fig.add_subplot()
    ax.plot(t, pid, color="tab:blue", lw=1.5, label=f"PID (RMSE={_rms(pid):.2f})")
    ax.plot(t, onoff, color="tab:red", lw=1.5, ls="--", label=f"On-Off (RMSE={_rms(onoff):.2f})")
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Error (cm)")
    ax.grid(True)
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save(fig, path)


def speed_figure(rows: list[dict], path: Path) -> None:
    xs, ys, lo, hi = [], [], [], []
    for pwm, group in sorted(_by(rows, "base_pwm").items()):
        s = summarize([r["mean"] for r in group])
        xs.append(pwm)
        ys.append(s.mean)
        lo.append(s.mean - s.ci_low)
        hi.append(s.ci_high - s.mean)
    fig = Figure(figsize=(5.0, 3.2))
    ax = fig.add_subplot()
    ax.errorbar(xs, ys, yerr=[lo, hi], marker="o", capsize=3)
    ax.set_xlabel("Base PWM")
    ax.set_ylabel("Mean |error| (cm)")
    ax.grid(True)
    fig.tight_layout()
    _save(fig, path)


def detection_figure(rows: list[dict], path: Path) -> None:
    xs, ys = [], []
    for d, group in sorted(_by(rows, "distance").items()):
        xs.append(100 * d)
        ys.append(100 * sum(r["detected"] for r in group) / len(group))
    fig = Figure(figsize=(5.0, 3.2))
    ax = fig.add_subplot()
    ax.plot(xs, ys, marker="o")
    ax.set_xlabel("Obstacle distance (cm)")
    ax.set_ylabel("Detection (%)")
    ax.set_ylim(0, 105)
    ax.grid(True)
    fig.tight_layout()
    _save(fig, path)


# --- entry point ----------------------------------------------------------------

def build_tables(data: dict) -> list[Table]:
    tables = []
    if "pid_vs_onoff" in data:
        tables.append(tracking_table(data["pid_vs_onoff"]))
    if "speed_sweep" in data:
        tables.append(speed_table(data["speed_sweep"]))
    if "detection" in data:
        tables.append(detection_table(data["detection"]))
    if "fsm_timing" in data:
        tables.append(fsm_table(data["fsm_timing"]))
    if "power" in data and "power_params" in data:
        tables.append(power_table(data["power"], data["power_params"]))
    if "soak" in data:
        tables.append(soak_table(data["soak"]))
    return tables


def render_report(out_dir) -> list[Path]:
    """Write ``report.txt``, ``tables/*.csv`` and ``plots/*.svg`` under ``out_dir``.

    Raises:
        ReportError: no study data under ``out_dir/data``.
    """
    out = Path(out_dir)
    data = load_data(out)
    tables = build_tables(data)
    if not tables:
        raise ReportError(f"nothing to report: no study data in {out / 'data'}")
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "plots").mkdir(parents=True, exist_ok=True)
    written = []
    for t in tables:
        p = out / "tables" / f"{t.name}.csv"
        t.write_csv(p)
        written.append(p)
    figures = []
    if "pid_vs_onoff_trace" in data:
        figures.append(("tracking.svg", tracking_figure, data["pid_vs_onoff_trace"]))
    if "speed_sweep" in data:
        figures.append(("speed_sweep.svg", speed_figure, data["speed_sweep"]))
    if "detection" in data:
        figures.append(("detection.svg", detection_figure, data["detection"]))
    for name, fn, rows in figures:
        p = out / "plots" / name
        fn(rows, p)
        written.append(p)
    report = out / "report.txt"
    report.write_text("\n".join(t.text() for t in tables))
    written.append(report)
    return written
