#!/usr/bin/env python3
"""Hyperparameter sweeps: sequence length, retention rank k, and reward scale.

Each sweep reruns the chosen variant across seeds for every value and writes
value-vs-metric CSVs under --out.
"""

import argparse

from seqopt.agents import AgentConfig
from seqopt.harness import ExperimentConfig, ModelConfig, sweep


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="runs/sweeps")
    parser.add_argument("--iters", type=int, default=800)
    parser.add_argument("--seeds", default="1,2,3")
    parser.add_argument("--variant", default="pin")
    parser.add_argument("--vocab", type=int, default=2000)
    args = parser.parse_args()

    base = ExperimentConfig(
        environment={"kind": "hidden_embedding", "vocab_size": args.vocab,
                     "length": 8, "seed": 11},
        model=ModelConfig(state_dim=32, hidden=256, learning_rate=1e-3, seed=0),
        agent=AgentConfig(alpha=0.3, top_k=max(args.vocab // 5, 1),
                          batch_episodes=16, buffer_capacity=10_000,
                          polyak_rho=0.995),
        variant=args.variant,
        iterations=args.iters,
        seeds=tuple(int(s) for s in args.seeds.split(",")),
    )
    sweeps = {
        "prompt_length": [2, 4, 8, 16],
        "top_k": sorted({max(args.vocab // 40, 1), max(args.vocab // 10, 1),
                         max(args.vocab // 2, 1), args.vocab}),
        "reward_scale": [0.5, 1.0, 2.0, 10.0],
    }
    for parameter, values in sweeps.items():
        report = sweep(base, parameter, values, metric="best_so_far",
                       out_dir=f"{args.out}/{parameter}")
        print(f"\n{parameter}:")
        for row in report.rows:
            print(f"  {row.value:g}: {row.mean:.4f} +/- {row.se:.4f}")


if __name__ == "__main__":
    main()
