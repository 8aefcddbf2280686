"""Command-line entry point: run / compare / sweep / verify.

Seed precedence: --seed flag, then the SEQOPT_SEED environment variable,
then the config file. Failures print one machine-parseable line
``seqopt-error: <tag>: <message>`` to stderr and exit nonzero.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from . import harness
from .errors import ConfigError, EnvError, SeqoptError
from .verify import run_verification


def _parse_seeds(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(",") if part != "")
    except ValueError as exc:
        raise ConfigError(f"seeds: expected comma-separated integers, got {text!r}") from exc


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config)
    if args.variant is not None:
        cfg = replace(cfg, variant=args.variant)
    if args.iters is not None:
        cfg = replace(cfg, iterations=args.iters)
    env_seed = os.environ.get("SEQOPT_SEED")
    if env_seed is not None:
        cfg = replace(cfg, seeds=_parse_seeds(env_seed))
    if args.seed is not None:
        cfg = replace(cfg, seeds=_parse_seeds(args.seed))
    if args.out is not None:
        cfg = replace(cfg, out_dir=args.out)
    if getattr(args, "workers", None) is not None:
        cfg = replace(cfg, workers=args.workers)
    return cfg.validate()


def _cmd_run(args) -> int:
    cfg = _load(args)
    records = harness.run_experiment(cfg)
    for rec in records:
        print(f"seed={rec.seed} final_greedy={rec.final_greedy:.6g} "
              f"best_so_far={rec.best_so_far:.6g} wall={rec.wall_seconds:.2f}s")
    if cfg.out_dir:
        print(f"wrote curves and summaries to {cfg.out_dir}")
    return 0


def _cmd_compare(args) -> int:
    base = _load(args)
    names = [v for v in args.variants.split(",") if v]
    configs = [replace(base, variant=name, out_dir=None) for name in names]
    report = harness.compare_variants(configs, metric=args.metric, out_dir=base.out_dir)
    print(f"metric: {report.metric}")
    for row in report.rows:
        print(f"{row.label}: mean={row.mean:.6g} se={row.se:.6g}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    values = [float(v) for v in args.values.split(",") if v]
    report = harness.sweep(cfg, args.parameter, values, metric=args.metric, out_dir=cfg.out_dir)
    print(f"sweep over {report.parameter} ({report.metric}):")
    for row in report.rows:
        print(f"{row.value:g}: mean={row.mean:.6g} se={row.se:.6g}")
    return 0


def _cmd_verify(args) -> int:
    return 0 if run_verification(quick=args.quick) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqopt",
        description="Black-box token-sequence optimization experiments.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="path to a JSON experiment config")
        p.add_argument("--variant", default=None, help="override the variant name")
        p.add_argument("--iters", type=int, default=None, help="override the iteration count")
        p.add_argument("--seed", default=None, help="comma-separated seed list")
        p.add_argument("--out", default=None, help="output directory")

    p_run = sub.add_parser("run", help="run one experiment across its seeds")
    common(p_run)
    p_run.add_argument("--workers", type=int, default=None, help="parallel seed workers")
    p_run.set_defaults(func=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several variants on one environment")
    common(p_cmp)
    p_cmp.add_argument("--variants", required=True, help="comma-separated variant names")
    p_cmp.add_argument("--metric", default="best_so_far", choices=harness.METRICS)
    p_cmp.set_defaults(func=_cmd_compare)

    p_swp = sub.add_parser("sweep", help="sweep one hyperparameter")
    common(p_swp)
    p_swp.add_argument("--parameter", required=True, choices=harness.SWEEP_PARAMETERS)
    p_swp.add_argument("--values", required=True, help="comma-separated values")
    p_swp.add_argument("--metric", default="best_so_far", choices=harness.METRICS)
    p_swp.set_defaults(func=_cmd_sweep)

    p_ver = sub.add_parser("verify", help="run the built-in oracle checks")
    p_ver.add_argument("--quick", action="store_true", help="smaller sample counts")
    p_ver.set_defaults(func=_cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"seqopt-error: config: {exc}", file=sys.stderr)
        return 2
    except EnvError as exc:
        print(f"seqopt-error: environment: {exc}", file=sys.stderr)
        return 3
    except SeqoptError as exc:
        print(f"seqopt-error: internal: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
