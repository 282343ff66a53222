"""Command line entry point: validate, run, sweep and verify scenarios."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import metrics as metrics_mod
from .config import ConfigError, ScenarioConfig, bundled_scenarios, serialize, validate
from .engine import RunTrace
from .oracle import verify as oracle_verify
from .simulation import run as simulate

log = logging.getLogger("wsnguard")

EXIT_OK, EXIT_MISMATCH, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
OUT_ENV = "WSNGUARD_OUT"


def parse_seeds(text: str) -> range:
    """``seeds=3..7`` or ``3..7`` (inclusive) or a single seed."""
    body = text.split("=", 1)[1] if text.startswith("seeds=") else text
    lo, sep, hi = body.partition("..")
    try:
        a = int(lo)
        b = int(hi) if sep else a
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed range {text!r}, expected seeds=a..b") from None
    if b < a:
        raise argparse.ArgumentTypeError(f"empty seed range {text!r}")
    return range(a, b + 1)


def output_dir(flag: str | None, cfg: ScenarioConfig | None = None) -> Path:
    if flag:
        return Path(flag)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    if cfg is not None and cfg.output:
        return Path(cfg.output)
    return Path("out")


def _run_name(cfg: ScenarioConfig, detection: bool) -> str:
    return f"{cfg.name}-s{cfg.seed}-{'on' if detection else 'off'}"


def execute(cfg: ScenarioConfig, detection: bool, out: Path, check: bool) -> tuple[metrics_mod.RunMetrics, str | None]:
    """Run once, write trace and metrics; returns metrics and the oracle summary on failure."""
    trace = simulate(cfg, detection=detection)
    stem = out / _run_name(cfg, detection)
    trace.write(stem.with_suffix(".trace"))
    m = metrics_mod.compute(trace)
    stem.with_suffix(".metrics").write_text(m.to_kv(), encoding="utf-8")
    failure = None
    if check:
        report = oracle_verify(trace)
        if not report.ok:
            failure = report.summary()
    return m, failure


def _pair(cfg: ScenarioConfig, out: str, check: bool):
    on, fail_on = execute(cfg, True, Path(out), check)
    off, fail_off = execute(cfg, False, Path(out), check)
    return on, off, [f for f in (fail_on, fail_off) if f]


def cmd_validate(args) -> int:
    # applied defaults are part of this command's output
    logging.getLogger("wsnguard.config").setLevel(logging.INFO)
    cfg = validate(args.config)
    sys.stdout.write(serialize(cfg))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = validate(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    if args.sweep is not None:
        args.seeds = args.sweep
        return _sweep(cfg, args)
    out = output_dir(args.out, cfg)
    out.mkdir(parents=True, exist_ok=True)
    detection = False if args.no_detection else cfg.detection.enabled
    m, failure = execute(cfg, detection, out, args.verify)
    (out / f"{_run_name(cfg, detection)}.csv").write_text(
        metrics_mod.csv_header() + metrics_mod.csv_row(m), encoding="utf-8"
    )
    print(
        f"{_run_name(cfg, detection)}: end={m.end} first_death={m.lifetime_first_death} "
        f"half_dead={m.lifetime_half_dead} isolated={','.join(m.isolated) or '-'} "
        f"tp={m.tp} fp={m.fp} fn={m.fn} -> {out}"
    )
    if failure:
        print(failure, file=sys.stderr)
        return EXIT_MISMATCH
    if args.verify:
        print("oracle: OK")
    return EXIT_OK


def cmd_sweep(args) -> int:
    return _sweep(validate(args.config), args)


def _sweep(cfg: ScenarioConfig, args) -> int:
    out = output_dir(args.out, cfg)
    out.mkdir(parents=True, exist_ok=True)
    configs = [cfg.with_overrides(seed=s) for s in args.seeds]
    workers = max(1, args.workers or os.cpu_count() or 1)
    if workers == 1 or len(configs) == 1:
        results = [_pair(c, str(out), args.verify) for c in configs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_pair, configs, [str(out)] * len(configs), [args.verify] * len(configs)))

    rows = [metrics_mod.csv_header()]
    report_lines = []
    failures = []
    better = 0
    deltas = []
    for on, off, fails in results:
        rows += [metrics_mod.csv_row(on), metrics_mod.csv_row(off)]
        cmp = metrics_mod.compare(on, off)
        deltas.append(cmp.first_death_delta)
        better += not cmp.violation
        report_lines.append(cmp.to_kv())
        failures += fails
    (out / f"{cfg.name}-sweep.csv").write_text("".join(rows), encoding="utf-8")
    (out / f"{cfg.name}-compare.txt").write_text("\n".join(report_lines), encoding="utf-8")
    mean = sum(deltas) / len(deltas)
    print(
        f"{cfg.name}: {len(results)} pairs, detection-on lived at least as long in {better}, "
        f"mean first-death delta {mean:+.1f} ticks -> {out}"
    )
    for line in report_lines:
        if "violation=1" in line:
            print("violation: " + line.replace("\n", " ").strip())
    if failures:
        for f in failures:
            print(f, file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_verify(args) -> int:
    target = Path(args.target)
    if target.suffix == ".trace" and target.exists():
        trace = RunTrace.read(target)
    else:
        cfg = validate(args.target)
        trace = simulate(cfg, detection=False if args.no_detection else None)
    report = oracle_verify(trace)
    print(report.summary())
    return EXIT_OK if report.ok else EXIT_MISMATCH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wsnguard",
        description="Hierarchical sensor-network simulator with two-phase sleep-deprivation detection.",
        epilog="bundled scenarios: " + ", ".join(bundled_scenarios()),
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a scenario file and print it with defaults filled in")
    p.add_argument("config")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="simulate one scenario and write trace + metrics")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--no-detection", action="store_true", help="disable both detection phases")
    p.add_argument("--verify", action="store_true", help="replay the trace through the oracle")
    p.add_argument("--sweep", type=parse_seeds, metavar="seeds=A..B", help="paired on/off runs per seed")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", help=f"output directory (default ${OUT_ENV}, then config, then ./out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="paired detection-on/off runs over a seed range")
    p.add_argument("config")
    p.add_argument("--seeds", type=parse_seeds, required=True, metavar="A..B")
    p.add_argument("--verify", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("verify", help="run the trace-replay oracle on a .trace file or a scenario")
    p.add_argument("target")
    p.add_argument("--no-detection", action="store_true")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        for err in exc.errors:
            print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
