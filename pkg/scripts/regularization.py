"""AUBER vs unpruned vs random pruning on the noisy synthetic trigger task.

Every arm starts from the same overfit base model and shares the final
fine-tune stream. Prints one row per seed and the means.

    python scripts/regularization.py --seeds 5 --out-dir runs/reg
"""

import argparse
import json
from pathlib import Path

import numpy as np

from auber.experiments import regularization_trial, synthetic_config
from auber.persist import report_json


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seeds", type=int, default=5)
    parser.add_argument("--first-seed", type=int, default=0)
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    parser.add_argument("--out-dir", type=Path)
    args = parser.parse_args()

    rows = []
    print(f"{'seed':>4} {'train':>6} {'orig':>6} {'unp+ft':>6} {'auber':>6} {'random':>6} {'P':>2}")
    for seed in range(args.first_seed, args.first_seed + args.seeds):
        cfg = synthetic_config(seed)
        for item in args.set:
            key, value = item.split("=", 1)
            cfg.override(key, value)
        t = regularization_trial(cfg)
        rows.append((t.original, t.unpruned_finetuned, t.auber, t.random))
        print(f"{seed:>4} {t.train_accuracy:6.3f} {t.original:6.3f} {t.unpruned_finetuned:6.3f} "
              f"{t.auber:6.3f} {t.random:6.3f} {t.heads_pruned:>2}", flush=True)
        if args.out_dir:
            args.out_dir.mkdir(parents=True, exist_ok=True)
            (args.out_dir / f"auber_{seed}.json").write_text(report_json(t.auber_report))
            (args.out_dir / f"random_{seed}.json").write_text(report_json(t.random_report))
    mean = np.mean(rows, axis=0)
    print(f"mean        {mean[0]:6.3f} {mean[1]:6.3f} {mean[2]:6.3f} {mean[3]:6.3f}")
    print(f"auber - orig {mean[2] - mean[0]:+.4f}   auber - random {mean[2] - mean[3]:+.4f}")
    if args.out_dir:
        summary = dict(zip(["original", "unpruned_finetuned", "auber", "random"], map(float, mean)))
        (args.out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")


if __name__ == "__main__":
    main()
