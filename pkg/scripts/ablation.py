"""State-recipe and layer-order ablations on the synthetic task.

For each seed, trains one base model and runs AUBER with the default
(value, L1) state, the query/key/L2 variants and the reverse layer order.

    python scripts/ablation.py --seeds 3
"""

import argparse
from collections import defaultdict

import numpy as np

from auber.experiments import load_task, streams, synthetic_config, train_base
from auber.orchestrator import method_name, run_auber

VARIANTS = [("value", "forward"), ("query", "forward"), ("key", "forward"), ("l2", "forward"),
            ("value", "reverse")]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=3)
    parser.add_argument("--episodes", type=int, default=None, help="override agent.episodes")
    args = parser.parse_args()

    acc = defaultdict(list)
    pruned = defaultdict(list)
    for seed in range(args.seeds):
        cfg = synthetic_config(seed)
        if args.episodes is not None:
            cfg.agent.episodes = args.episodes
        train, dev = load_task(cfg)
        base_rng, _, _ = streams(seed)
        base = train_base(cfg, train, base_rng)
        for state, order in VARIANTS:
            cfg.state, cfg.order = state, order
            report, _ = run_auber(base.copy(), cfg, train, dev, streams(seed)[1])
            name = method_name(cfg)
            acc[name].append(report.post.accuracy)
            pruned[name].append(report.total_pruned)
            heads = [p.pruned_heads for p in sorted(report.layer_policies, key=lambda p: p.layer)]
            print(f"seed {seed} {name:<14} pruned {heads} dev acc {report.post.accuracy:.4f}", flush=True)
    print()
    print(f"{'Policy':<14} {'mean # pruned':>13} {'mean dev acc':>12}")
    for name in acc:
        print(f"{name:<14} {np.mean(pruned[name]):13.2f} {100 * np.mean(acc[name]):12.2f}")


if __name__ == "__main__":
    main()
