"""Command-line entry point: ``vnetmorl {train,eval,pareto,check}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import harness
from .checks import SUITES, run_suites
from .config import EXPERIMENT_PRESETS, load_config
from .env import ConfigurationError
from .neural import NetworkError, load_checkpoint
from .pareto import ReturnPoint, ccs, hypervolume, pareto_front, read_points, write_points


def _overrides(args) -> List[str]:
    out = list(args.set or [])
    if getattr(args, "seed", None) is not None:
        out.append(f"experiment.seed={args.seed}")
    if getattr(args, "episodes", None) is not None and args.command == "train":
        out.append(f"experiment.episodes={args.episodes}")
    return out


def _omegas(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    if text == "sweep":
        return harness.omega_sweep(11)
    values = [float(x) for x in text.split(",")]
    if any(not 0.0 <= v <= 1.0 for v in values):
        raise ConfigurationError("--omega values are the transport weight and must lie in [0, 1]")
    return values


def cmd_train(args) -> int:
    cfg = load_config(args.config, _overrides(args))
    out = Path(args.out)

    def progress(rec):
        if args.verbose:
            print(f"episode {rec.episode}: R_tran={rec.R_tran:.3f} R_tele={rec.R_tele:.1f} "
                  f"delta_e={rec.delta_e:.3f} xi_e={rec.xi_e:.3f}", file=sys.stderr)

    result = harness.train(cfg, out, progress=progress)
    summary = harness.summarize(result.records)
    print(json.dumps({"out": str(out), "algorithm": cfg.algorithm, **summary}, sort_keys=True))
    return 0


def cmd_eval(args) -> int:
    if args.episodes is not None and args.episodes < 1:
        raise ConfigurationError("--episodes must be >= 1")
    if args.config is None:
        cfg = harness.config_from_checkpoint(args.checkpoint, _overrides(args))
    else:
        cfg = load_config(args.config, _overrides(args))
    omegas = _omegas(args.omega)
    if omegas is not None and not harness.is_envelope(cfg):
        raise ConfigurationError("--omega applies to envelope checkpoints only")
    summary = harness.run_eval(cfg, args.checkpoint, args.out, args.episodes, omegas)
    print(json.dumps(summary["overall"], sort_keys=True))
    return 0


def cmd_pareto(args) -> int:
    if not args.inputs:
        raise ConfigurationError("pareto needs at least one CSV")
    ref = np.array([float(x) for x in args.reference.split(",")])
    if ref.shape != (2,):
        raise ConfigurationError("--reference needs two comma-separated values")
    groups = {}
    for path in args.inputs:
        pts = read_points(path)
        if not pts:
            raise ConfigurationError(f"{path} holds no return points")
        groups[Path(path).stem] = pts
    everything: List[ReturnPoint] = [p for pts in groups.values() for p in pts]
    front = pareto_front(everything)
    hull = ccs(everything)
    ranking = sorted(((name, hypervolume([p.value for p in pts], ref)) for name, pts in groups.items()),
                     key=lambda item: (-item[1], item[0]))
    report = {
        "reference": ref.tolist(),
        "front": [{"label": p.label, "R_tran": p.value[0], "R_tele": p.value[1]} for p in front],
        "ccs": [{"label": p.label, "R_tran": p.value[0], "R_tele": p.value[1]} for p in hull],
        "hypervolume_all": hypervolume([p.value for p in everything], ref),
        "ranking": [{"input": name, "hypervolume": hv} for name, hv in ranking],
    }
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_points(out / "front.csv", front)
        write_points(out / "ccs.csv", hull)
        (out / "pareto_report.json").write_text(json.dumps(report, indent=2), encoding="utf-8")
    print(json.dumps(report, indent=2))
    return 0


def cmd_check(args) -> int:
    names = list(SUITES) if args.suite == "all" else [args.suite]
    failed = False
    for name, ok, msg in run_suites(names):
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {msg}")
        failed |= not ok
    if args.checkpoint:
        try:
            networks, meta = load_checkpoint(args.checkpoint)
            print(f"[PASS] checkpoint: {args.checkpoint} loads ({', '.join(networks)}; "
                  f"{meta.get('algorithm', 'unknown algorithm')})")
        except NetworkError as exc:
            print(f"[FAIL] checkpoint: {exc}")
            failed = True
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vnetmorl", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, episodes_help: str):
        p.add_argument("--config", help=f"INI file or preset name ({', '.join(EXPERIMENT_PRESETS)})")
        p.add_argument("--seed", type=int)
        p.add_argument("--episodes", type=int, help=episodes_help)
        p.add_argument("--out", default="runs/latest")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config key (repeatable)")

    p = sub.add_parser("train", help="train an agent and write metrics and checkpoints")
    common(p, "training episodes")
    p.add_argument("--verbose", action="store_true", help="print one line per episode to stderr")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="greedy evaluation of a checkpoint")
    common(p, "evaluation episodes per preference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--omega", help="transport weight(s), comma separated, or 'sweep' for 0, 0.1, ..., 1")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("pareto", help="front, CCS and hypervolume of return-point CSVs")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--reference", default="0,0", help="hypervolume reference point R_tran,R_tele")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("check", help="run oracle self-checks")
    p.add_argument("--suite", default="all", choices=["all", *SUITES])
    p.add_argument("--checkpoint", help="also verify that this checkpoint loads")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, NetworkError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
