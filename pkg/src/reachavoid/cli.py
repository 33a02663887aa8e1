"""Command-line entry point: ``reachavoid {simulate,bench,srs,verify}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .bench import run_bench
from .engine import ScenarioConfig, run_game, trace_csv, trace_summary_json
from .errors import ConfigError, UnsupportedDimensionError
from .scenarios import ATTACKS, DEFENSES, BenchSpec, load_config
from .verify import verify_scenario


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("config", help="JSON scenario or bench file")
    p.add_argument("--seed", type=int, help="RNG seed (overrides the file)")
    p.add_argument("--dt", type=float, help="time step in s")
    p.add_argument("--alloc-period", type=float, help="allocation period in s")
    p.add_argument("--t-max", type=float, help="time limit in s")
    p.add_argument("--out-dir", help="directory for traces, summaries and plots")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reachavoid", description="Multiplayer reach-avoid game simulator")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="play one game")
    _common(p)
    p.add_argument("--defense", choices=DEFENSES, default="mdea")
    p.add_argument("--attack", choices=ATTACKS, default="optimal")

    p = sub.add_parser("bench", help="run a batch of randomized trials")
    _common(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--defense", choices=DEFENSES, action="append",
                   help="repeat to build a policy matrix")
    p.add_argument("--attack", choices=ATTACKS, action="append")
    p.add_argument("--no-traces", action="store_true", help="skip per-trial CSV/JSON files")

    p = sub.add_parser("srs", help="plot the safe-reachable set (SVG in 2D, CSV point cloud in 3D)")
    p.add_argument("config")
    p.add_argument("--attacker", type=int, default=1)
    p.add_argument("--coalition", help="comma-separated defender ids (default: all)")
    p.add_argument("--out", help="output file")
    p.add_argument("--out-dir")

    p = sub.add_parser("verify", help="run the invariant suite on one scenario")
    _common(p)
    p.add_argument("--attack", choices=ATTACKS, default="optimal")
    return ap


def _scenario(args) -> ScenarioConfig:
    cfg = load_config(args.config)
    if not isinstance(cfg, ScenarioConfig):
        raise ConfigError(f"{args.config}: expected a scenario file, got a bench spec")
    upd = {}
    if getattr(args, "seed", None) is not None:
        upd["rng_seed"] = args.seed
    if getattr(args, "dt", None) is not None:
        upd["dt"] = args.dt
    if getattr(args, "alloc_period", None) is not None:
        upd["allocation_period"] = args.alloc_period
    if getattr(args, "t_max", None) is not None:
        upd["t_max"] = args.t_max
    if upd:
        cfg = replace(cfg, **upd)
        cfg.validate()
    return cfg


def cmd_simulate(args) -> int:
    cfg = _scenario(args)
    trace = run_game(cfg, args.defense, args.attack)
    text = trace_summary_json(trace)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "trace.csv").write_text(trace_csv(trace))
        (out / "summary.json").write_text(text + "\n")
        if cfg.dim == 2 and cfg.domain.box_bounds is not None:
            from .plotting import emit_trace_plot
            emit_trace_plot(trace, out / "trace.svg")
    s = trace.summary()
    print(f"payoff {s['payoff']}  captured {s['captures']}  reached {s['reached']}  "
          f"timeouts {s['timeouts']}  t {s['final_time']}  checks {s['check_count']}")
    return 0


def cmd_bench(args) -> int:
    spec = load_config(args.config)
    if not isinstance(spec, BenchSpec):
        raise ConfigError(f"{args.config}: expected a bench spec (a file with a 'template' key)")
    upd = {k: v for k, v in {
        "seed": args.seed, "trials": args.trials, "workers": args.workers, "dt": args.dt,
        "allocation_period": args.alloc_period, "t_max": args.t_max, "out_dir": args.out_dir,
        "defenses": tuple(args.defense) if args.defense else None,
        "attacks": tuple(args.attack) if args.attack else None,
    }.items() if v is not None}
    if args.no_traces:
        upd["write_traces"] = False
    spec = replace(spec, **upd)
    spec.validate()
    res = run_bench(spec)
    print(res.table(), end="")
    failed = []
    for (d, a), t in res.tallies.items():
        if t.trials != spec.trials:
            failed.append(f"{d}/{a}: tally does not sum to the trial count")
        if t.check_bound_violations:
            failed.append(f"{d}/{a}: {t.check_bound_violations} check-number bound violations")
        if any(s < 0 for s in t.payoff_bound_slack):
            failed.append(f"{d}/{a}: negative payoff-bound slack")
    for f in failed:
        print("FAIL", f, file=sys.stderr)
    return 1 if failed else 0


def cmd_srs(args) -> int:
    from .plotting import emit_srs_plot, emit_srs_point_cloud
    cfg = load_config(args.config)
    if not isinstance(cfg, ScenarioConfig):
        raise ConfigError(f"{args.config}: expected a scenario file")
    coal = [int(x) for x in args.coalition.split(",")] if args.coalition else None
    out_dir = Path(args.out_dir) if args.out_dir else Path(".")
    if cfg.dim == 2:
        path = Path(args.out) if args.out else out_dir / f"srs_attacker{args.attacker}.svg"
        path.parent.mkdir(parents=True, exist_ok=True)
        emit_srs_plot(cfg, args.attacker, coal, path)
    else:
        path = Path(args.out) if args.out else out_dir / f"srs_attacker{args.attacker}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        emit_srs_point_cloud(cfg, args.attacker, coal, path)
    print(path)
    return 0


def cmd_verify(args) -> int:
    cfg = _scenario(args)
    checks = verify_scenario(cfg, args.attack, seed=cfg.rng_seed)
    for c in checks:
        print(c.line())
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(json.dumps(
            [{"name": c.name, "ok": c.ok, "detail": c.detail} for c in checks], indent=2) + "\n")
    return 0 if all(c.ok for c in checks) else 1


COMMANDS = {"simulate": cmd_simulate, "bench": cmd_bench, "srs": cmd_srs, "verify": cmd_verify}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, UnsupportedDimensionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
