"""Command-line entry point: run, sweep, check, trace-replay.

Exit codes: 0 success, 1 failed check suite, 2 configuration error.  On a
configuration error nothing is written.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .env import ConfigError, instance_from_dict
from .harness import (CSV_COLUMNS, DELTA_POLICIES, RunConfig, run_episode, summarize, sweep,
                      write_events)
from .protocol import POLICIES

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mmab-sax", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, needs_config=True):
        p.add_argument("--config", required=needs_config, help="instance JSON file")
        p.add_argument("--seed", type=int)
        p.add_argument("--horizon", type=lambda s: int(float(s)))
        p.add_argument("--delta", type=float)
        p.add_argument("--feedback-mode", choices=("hard_sax", "aggregate_soft"))
        p.add_argument("--policy", choices=POLICIES)
        p.add_argument("--delta-policy", choices=DELTA_POLICIES)
        p.add_argument("--out", help="output path (default: stdout)")

    run = sub.add_parser("run", help="run one episode")
    common(run)
    run.add_argument("--trace", action="store_true",
                     help="also write OUT.trace.csv (per step) and OUT.events.jsonl")

    sw = sub.add_parser("sweep", help="regret over horizons and seeds")
    common(sw)
    sw.add_argument("--horizons", help="comma-separated horizons (overrides the config)")
    sw.add_argument("--seeds", type=int, help="number of seeds (overrides the config)")
    sw.add_argument("--jobs", type=int, help="worker processes (default: $MMAB_SAX_JOBS or 1)")
    sw.add_argument("--plot", action="store_true", help="write a PNG next to --out")

    ck = sub.add_parser("check", help="run the property suites")
    ck.add_argument("--suite", action="append", help="run only this suite (repeatable)")

    tr = sub.add_parser("trace-replay", help="pretty-print a stored trace")
    tr.add_argument("path")
    tr.add_argument("--limit", type=int, default=0, help="print at most this many records")
    return ap


def _load(args) -> tuple[dict, "RunConfig"]:
    try:
        doc = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    inst = instance_from_dict(doc).with_overrides(
        seed=args.seed, horizon=args.horizon, delta=args.delta, feedback_mode=args.feedback_mode)
    policy = args.policy or doc.get("policy", "acapella")
    if policy not in POLICIES:
        raise ConfigError(f"unknown policy {policy!r}")
    dp = args.delta_policy or doc.get("delta_policy", "explicit")
    if dp not in DELTA_POLICIES:
        raise ConfigError(f"unknown delta policy {dp!r}")
    return doc, RunConfig(inst, policy=policy, delta_policy=dp)


def _emit_csv(rows, path, columns=CSV_COLUMNS) -> None:
    fh = open(path, "w", newline="") if path else sys.stdout
    try:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    finally:
        if path:
            fh.close()


def cmd_run(args) -> int:
    _, cfg = _load(args)
    trace = args.trace and args.out
    if args.trace and not args.out:
        raise ConfigError("--trace needs --out")
    cfg = RunConfig(cfg.instance, cfg.policy, cfg.delta_policy, trace=bool(trace))
    out = Path(args.out) if args.out else None
    res = run_episode(cfg, trace_path=out.with_suffix(".trace.csv") if trace else None)
    _emit_csv([res.row()], out)
    summary = {
        "instance": cfg.effective_instance().to_dict(), "policy": cfg.policy,
        "cumulative_regret": res.cumulative_regret, "by_phase": res.by_phase,
        "final_assignment": res.final_assignment, "optimal_counts": res.optimal_counts,
        "good_event": res.good_event, "desync": res.desync, "incomplete": res.incomplete,
        "commit_time": res.commit_time, "phase1_steps": res.phase1_steps,
        "partition_epochs": res.partition_epochs, "timeline": res.timeline,
    }
    text = json.dumps(summary, indent=2)
    if out:
        out.with_suffix(".json").write_text(text + "\n")
        if trace:
            write_events(res, out.with_suffix(".events.jsonl"))
    else:
        print(text)
    return EXIT_OK


def cmd_sweep(args) -> int:
    doc, cfg = _load(args)
    spec = doc.get("sweep", {})
    try:
        horizons = ([int(float(h)) for h in args.horizons.split(",")] if args.horizons
                    else [int(float(h)) for h in spec.get("horizons", [cfg.instance.horizon])])
    except ValueError as exc:
        raise ConfigError(f"bad horizon list: {exc}") from exc
    n = args.seeds or int(spec.get("seeds", 1))
    if n < 1 or any(h < 1 for h in horizons):
        raise ConfigError("need at least one seed and positive horizons")
    if args.plot and not args.out:
        raise ConfigError("--plot needs --out")
    seeds = [cfg.instance.seed + s for s in range(n)]
    rows = sweep(horizons, seeds, cfg.instance, jobs=args.jobs, policy=cfg.policy,
                 delta_policy=cfg.delta_policy)
    _emit_csv(rows, args.out)
    summ = summarize(rows)
    for s in summ:
        print(f"T={s['horizon']:>10d}  n={s['n']:>3d}  regret {s['mean']:.1f} +/- {s['sd']:.1f}",
              file=sys.stderr)
    if args.plot:
        from .plotting import plot_sweep
        png = plot_sweep(summ, Path(args.out).with_suffix(".png"),
                         title=f"K={cfg.instance.K}, M={cfg.instance.M}")
        print(f"figure written to {png}", file=sys.stderr)
    return EXIT_OK


def cmd_check(args) -> int:
    from .checks import SUITES, run_checks
    names = args.suite or list(SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s): {', '.join(unknown)}")
    results = run_checks(names)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name:<12s} {detail}")
    return EXIT_OK if all(ok for _, ok, _ in results) else EXIT_CHECK


def cmd_replay(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise ConfigError(f"no such trace: {path}")
    shown = 0
    with path.open() as fh:
        if path.suffix == ".jsonl":
            for line in fh:
                ev = json.loads(line)
                rest = {k: v for k, v in ev.items() if k not in ("t", "player", "event")}
                extra = " ".join(f"{k}={v}" for k, v in rest.items())
                print(f"t={ev['t']:>10d}  player {ev['player']}  {ev['event']:<12s} {extra}")
                shown += 1
                if args.limit and shown >= args.limit:
                    break
        else:
            for row in csv.DictReader(fh):
                print(f"t={int(row['t']):>10d}  player {row['player']}  arm {row['arm']}  "
                      f"psi={row['psi']} pass={row['pass']} full={row['in_full_group']}  "
                      f"reward={row['reward']}")
                shown += 1
                if args.limit and shown >= args.limit:
                    break
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "check": cmd_check, "trace-replay": cmd_replay}


def main(argv=None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"mmab-sax: configuration error: {exc}", file=sys.stderr)
        ap.print_usage(sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
