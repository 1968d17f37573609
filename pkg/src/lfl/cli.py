"""Command-line entry point: ``lfl {sim,calibrate,tune,experiment,report}``.

Exit codes: 0 success, 2 usage or configuration error, 3 simulation or study
failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import lab, report
from .config import Config, ConfigError
from .sim import Setup, run_scenario, write_events_csv, write_ticks_csv
from .track import TrackError
from .tuning import ReferencePlant, RobotLoop, TuningError, find_critical_gain, zn_gains

EXIT_OK, EXIT_USAGE, EXIT_FAIL = 0, 2, 3
DEFAULT_OUT = "lfl-out"
DEFAULT_TRIALS = {"pid-vs-onoff": 40, "speed-sweep": 20, "detection": 25, "fsm-timing": 50}
KP_RANGES = {"reference": (1.0, 20.0), "robot": (20.0, 200.0)}


class UsageError(Exception):
    pass


def kp_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(p) for p in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    if not 0 <= lo < hi:
        raise argparse.ArgumentTypeError(f"need 0 <= lo < hi, got {text!r}")
    return lo, hi


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat key = value config file")
    common.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key (repeatable)")
    common.add_argument("--seed", type=int, help="master seed (overrides config)")
    common.add_argument("--out", metavar="DIR",
                        help=f"output directory (default $LFL_OUT or ./{DEFAULT_OUT})")
    common.add_argument("--jobs", type=positive_int, help="worker processes (default: cores)")

    p = argparse.ArgumentParser(prog="lfl", description="Line-follower simulation harness")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("sim", parents=[common], help="run one scenario, write the tick log")
    s.add_argument("--duration", type=float, help="seconds (default: config duration)")

    sub.add_parser("calibrate", parents=[common],
                   help="simulated white/black calibration and consistency check")

    t = sub.add_parser("tune", parents=[common], help="Ziegler-Nichols ultimate-gain tuning")
    t.add_argument("--plant", choices=("reference", "robot"), default="reference",
                   help="reference test plant or the simulated robot (default reference)")
    t.add_argument("--kp-range", type=kp_range, metavar="LO:HI",
                   help="P-gain bracket (default 1:20 reference, 20:200 robot)")
    t.add_argument("--tolerance", type=float, default=0.05)

    e = sub.add_parser("experiment", parents=[common], help="run a named study")
    e.add_argument("study", choices=lab.STUDIES)
    e.add_argument("--trials", type=positive_int, help="trials per condition")
    e.add_argument("--ticks", type=positive_int, help="soak length in control ticks")

    sub.add_parser("report", parents=[common], help="re-render the report from stored data")
    return p


def resolve(args) -> tuple[Config, Path]:
    cfg = Config.load(args.config, args.overrides)
    if args.seed is not None:
        cfg = cfg.updated({"seed": args.seed})
    out = Path(args.out or os.environ.get("LFL_OUT") or DEFAULT_OUT)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.txt").write_text(cfg.dumps())
    return cfg, out


def cmd_sim(args, cfg: Config, out: Path) -> int:
    setup = Setup.from_config(cfg)
    duration = cfg["duration"] if args.duration is None else args.duration
    if not duration > 0:
        raise UsageError("--duration must be > 0")
    result = run_scenario(setup, duration, cfg["seed"])
    with (out / "ticks.csv").open("w", newline="") as fh:
        write_ticks_csv(result.ticks, fh)
    with (out / "events.csv").open("w", newline="") as fh:
        write_events_csv(result.events, fh)
    s = lab.error_summary([r.lateral_error for r in result.ticks]) if result.ticks else None
    print(f"ticks {len(result.ticks)}  status {result.status}  events {len(result.events)}")
    if s is not None:
        print(f"|error| mean {s.mean:.3f} cm  std {s.std:.3f}  max {s.max:.3f}  "
              f"rmse {s.rmse:.3f}")
    print(f"wrote {out / 'ticks.csv'}")
    return EXIT_OK if result.status == "ok" else EXIT_FAIL


def cmd_calibrate(args, cfg: Config, out: Path) -> int:
    runs = lab.simulate_calibration(cfg)
    lines = []
    ok = True
    for r in runs:
        rec, con = r.record, r.consistency
        verdict = "pass" if con.passed else "FAIL"
        ok &= con.passed
        print(f"{r.channel}: white {rec.v_white_mean:.2f}  black {rec.v_black_mean:.2f}  "
              f"V_th {rec.v_threshold}  pooled std {rec.sample_std:.2f}  n {rec.sample_count}")
        print(f"{r.channel}: consistency std {con.std:.2f} LSB (< 8 LSB): {verdict}")
        lines += [f"ir.threshold_{r.channel} = {rec.v_threshold}",
                  f"# {r.channel}: white_mean {rec.v_white_mean!r} black_mean "
                  f"{rec.v_black_mean!r} sample_std {rec.sample_std!r} "
                  f"consistency_std {con.std!r} {verdict}"]
    (out / "calibration.txt").write_text("\n".join(lines) + "\n")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_tune(args, cfg: Config, out: Path) -> int:
    rng = args.kp_range or KP_RANGES[args.plant]
    loop = ReferencePlant() if args.plant == "reference" else RobotLoop(cfg)
    try:
        rep = find_critical_gain(loop, rng, args.tolerance)
    except TuningError as exc:
        print(f"tune failed: {exc}", file=sys.stderr)
        with (out / "tune_failure.csv").open("w") as fh:
            fh.write("kp,k,error\n")
            for kp, trace in sorted(exc.traces.items()):
                for k, v in enumerate(trace):
                    fh.write(f"{kp!r},{k},{v!r}\n")
        return EXIT_FAIL
    g = zn_gains(rep.ku, rep.tu, cfg["controller.period"])
    text = (f"plant = {args.plant}\nkp_range = {rng[0]!r}:{rng[1]!r}\n"
            f"ku = {rep.ku!r}\ntu = {rep.tu!r}\namplitude = {rep.amplitude!r}\n"
            f"classification = {rep.classification}\niterations = {rep.iterations}\n"
            f"pid.kp = {g.kp!r}\npid.ki = {g.ki!r}\npid.kd = {g.kd!r}\n")
    (out / "tune.txt").write_text(text)
    with (out / "tune_history.csv").open("w") as fh:
        fh.write("kp,verdict,ratio\n")
        for kp, verdict, ratio in rep.history:
            fh.write(f"{kp!r},{verdict},{ratio!r}\n")
    print(f"K_u = {rep.ku:.4f}  T_u = {rep.tu:.4f} s  ({rep.classification}, "
          f"{rep.iterations} bisections)")
    print(f"ZN gains: kp = {g.kp:.4f}  ki = {g.ki:.4f}  kd = {g.kd:.4f}")
    return EXIT_OK


def _study_failed(data: lab.StudyData) -> Optional[str]:
    for name, (header, rows) in data.tables.items():
        if "status" in header:
            i = header.index("status")
            bad = sum(1 for r in rows if r[i] != "ok")
            if bad:
                return f"{bad} run(s) in {name} did not finish on track"
    if data.study == "soak":
        kv = dict(data.tables["soak"][1])
        if kv["run1_violations"] or kv["run2_violations"] or not kv["identical"]:
            return (f"soak: violations {kv['run1_violations']}/{kv['run2_violations']}, "
                    f"identical {kv['identical']}; {kv['run1_first_violation']}")
    return None


def cmd_experiment(args, cfg: Config, out: Path) -> int:
    study = args.study
    fn = lab.STUDY_FUNCS[study]
    if study == "soak":
        data = fn(cfg, ticks=args.ticks or lab.SOAK_TICKS)
    elif study == "power":
        data = fn(cfg)
    else:
        n = args.trials or DEFAULT_TRIALS[study]
        kw = {"encounters": n} if study in ("detection", "fsm-timing") else {"trials": n}
        data = fn(cfg, jobs=args.jobs, **kw)
    for p in lab.write_data(data, out):
        print(f"wrote {p}")
    for p in report.render_report(out):
        print(f"wrote {p}")
    problem = _study_failed(data)
    if problem:
        print(f"study failed: {problem}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_report(args, cfg: Config, out: Path) -> int:
    try:
        paths = report.render_report(out)
    except report.ReportError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK


COMMANDS = {"sim": cmd_sim, "calibrate": cmd_calibrate, "tune": cmd_tune,
            "experiment": cmd_experiment, "report": cmd_report}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg, out = resolve(args)
        return COMMANDS[args.command](args, cfg, out)
    except (ConfigError, TrackError, UsageError) as exc:
        print(f"lfl: error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # invalid config values surface as ValueError when the setup is built
        print(f"lfl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
