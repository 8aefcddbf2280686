#!/usr/bin/env python3
"""Desk-scale comparison of all algorithm variants on the hidden-embedding task.

Writes per-variant learning curves, a long-format CSV for plotting, and a
summary table of best-so-far rewards. Expect a few minutes per variant at the
default budget.
"""

import argparse

from seqopt.agents import AgentConfig
from seqopt.harness import ExperimentConfig, ModelConfig, compare_variants

VARIANTS = ("pin", "pin_no_fluency", "rlprompt", "rlprompt_fluency",
            "rlprompt_rb", "rlprompt_rb_fluency")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/comparison")
    parser.add_argument("--iters", type=int, default=1500)
    parser.add_argument("--seeds", default="1,2,3")
    parser.add_argument("--vocab", type=int, default=2000)
    parser.add_argument("--length", type=int, default=8)
    parser.add_argument("--alpha", type=float, default=0.3)
    parser.add_argument("--variants", default=",".join(VARIANTS))
    args = parser.parse_args()

    seeds = tuple(int(s) for s in args.seeds.split(","))
    base = ExperimentConfig(
        environment={"kind": "hidden_embedding", "vocab_size": args.vocab,
                     "length": args.length, "seed": 11},
        model=ModelConfig(state_dim=32, hidden=256, learning_rate=1e-3, seed=0),
        agent=AgentConfig(alpha=args.alpha, top_k=max(2 * args.vocab // 5, 1),
                          batch_episodes=16, buffer_capacity=10_000,
                          polyak_rho=0.995),
        iterations=args.iters,
        seeds=seeds,
    )
    configs = [ExperimentConfig(**{**base.__dict__, "variant": name})
               for name in args.variants.split(",")]
    report = compare_variants(configs, metric="best_so_far", out_dir=args.out)
    print(f"\nbest-so-far reward after {args.iters} iterations "
          f"(mean +/- se over seeds {seeds}):")
    for row in report.rows:
        print(f"  {row.label:22s} {row.mean:.4f} +/- {row.se:.4f}")
    print(f"\ncurves: {args.out}/curves_long.csv")


if __name__ == "__main__":
    main()
