"""Command-line entry point.

Subcommands::

    auber train    --seed S --out base.aubr
    auber auber    --seed S [--checkpoint base.aubr] --out report.json
    auber baseline --seed S --method gradient (--p 3 | --p-from report.json) --out b.json
    auber ablate   --seed S (--state key | --order reverse) --out a.json
    auber report   --compare a.json b.json

Every experiment subcommand accepts ``--config run.json`` and repeated
``--set section.field=value`` overrides. Without ``--checkpoint`` the base
model is trained in-process from the seed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence


from auber.baselines import (
    ScoreMethod,
    confidence_scores,
    gradient_importance,
    prune_by_scores,
    random_scores,
)
from auber.config import RunConfig
from auber.errors import AuberError, InputError
from auber.experiments import load_task, streams, train_base
from auber.orchestrator import run_auber
from auber.persist import (
    comparison_table,
    emit_report,
    load_checkpoint,
    load_report,
    save_checkpoint,
)
from auber.trainer import Dataset, MetricsLog, evaluate
from auber.transformer import EncoderModel

log = logging.getLogger("auber")


def _build_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    for item in args.set or []:
        if "=" not in item:
            raise InputError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        cfg.override(key.strip(), value.strip())
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _base_model(cfg: RunConfig, args, train: Dataset, base_rng, log_rows) -> EncoderModel:
    if getattr(args, "checkpoint", None):
        ckpt = load_checkpoint(args.checkpoint)
        if vars(ckpt.model.config) != vars(cfg.model):
            raise InputError("checkpoint model config differs from the run config")
        return ckpt.model
    return train_base(cfg, train, base_rng, log_rows)


def cmd_train(args) -> int:
    cfg = _build_config(args)
    cfg.mode = "train"
    cfg.validate()
    train, dev = load_task(cfg)
    base_rng, _, _ = streams(cfg.seed)
    log_rows = MetricsLog()
    model = train_base(cfg, train, base_rng, log_rows)
    save_checkpoint(model, cfg.to_dict(), args.out, rng=base_rng)
    m = evaluate(model, dev)
    print(f"train acc {evaluate(model, train).accuracy:.4f}  dev acc {m.accuracy:.4f}  dev mcc {m.mcc:.4f}")
    print(f"wrote {args.out}")
    return 0


def _run_auber(cfg: RunConfig, args) -> int:
    cfg.validate()
    train, dev = load_task(cfg)
    base_rng, run_rng, _ = streams(cfg.seed)
    log_rows = MetricsLog()
    model = _base_model(cfg, args, train, base_rng, log_rows)
    report, _ = run_auber(model, cfg, train, dev, run_rng, log_rows)
    emit_report(report, args.out, log_rows)
    _summary(report)
    print(f"wrote {args.out}")
    return 0


def cmd_auber(args) -> int:
    cfg = _build_config(args)
    cfg.mode = "auber"
    return _run_auber(cfg, args)


def cmd_ablate(args) -> int:
    cfg = _build_config(args)
    if args.state:
        cfg.state = args.state
        cfg.mode = f"ablate:{args.state}"
    else:
        cfg.order = "reverse"
        cfg.mode = "ablate:reverse"
    return _run_auber(cfg, args)


def cmd_baseline(args) -> int:
    cfg = _build_config(args)
    cfg.mode = f"baseline:{args.method}"
    cfg.validate()
    P = args.p if args.p is not None else int(load_report(args.p_from)["total_pruned"])
    train, dev = load_task(cfg)
    base_rng, run_rng, score_rng = streams(cfg.seed)
    log_rows = MetricsLog()
    model = _base_model(cfg, args, train, base_rng, log_rows)
    method = ScoreMethod(args.method)
    if method is ScoreMethod.RANDOM:
        table = random_scores(model, score_rng)
    elif method is ScoreMethod.CONFIDENCE:
        table = confidence_scores(model, train)
    else:
        table = gradient_importance(model, train)
    report, _ = prune_by_scores(model, table, P, train, dev, cfg.trainer, run_rng,
                                seed=cfg.seed, config=cfg.to_dict(), log_rows=log_rows)
    emit_report(report, args.out, log_rows)
    _summary(report)
    print(f"wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    reports = [load_report(p) for p in args.compare]
    for key in ("pre", "post", "total_pruned", "method"):
        for p, r in zip(args.compare, reports):
            if key not in r:
                raise InputError(f"{p}: report has no {key!r} field")
    print(comparison_table(reports))
    return 0


def _summary(report) -> None:
    for p in report.layer_policies:
        print(f"layer {p.layer}: pruned {p.pruned_heads}")
    print(f"{report.method}: {report.total_pruned} heads pruned, dev acc "
          f"{report.pre.accuracy:.4f} -> {report.post.accuracy:.4f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="auber", description="RL-driven attention head pruning")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name: str, help_: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--config", help="RunConfig JSON file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")
        p.add_argument("--out", required=True)
        return p

    p = experiment("train", "fit the base model and save a checkpoint")
    p.set_defaults(func=cmd_train)

    p = experiment("auber", "run the layer-wise DQN pruning pipeline")
    p.add_argument("--checkpoint", help="base model checkpoint (default: train from the seed)")
    p.set_defaults(func=cmd_auber)

    p = experiment("baseline", "prune P heads with a heuristic score")
    p.add_argument("--checkpoint")
    p.add_argument("--method", choices=[m.value for m in ScoreMethod], required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--p", type=int, help="number of heads to prune")
    g.add_argument("--p-from", help="take P from a report's total_pruned")
    p.set_defaults(func=cmd_baseline)

    p = experiment("ablate", "run AUBER with a different state recipe or layer order")
    p.add_argument("--checkpoint")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--state", choices=["query", "key", "l2"])
    g.add_argument("--order", choices=["reverse"])
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("report", help="render a comparison table from reports")
    p.add_argument("--compare", nargs="+", required=True, metavar="REPORT")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except AuberError as exc:
        print(f"error[{exc.category}]: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error[io]: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
