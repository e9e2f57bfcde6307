"""Shared experiment plumbing for the CLI and the scripts in ``scripts/``."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from auber.baselines import prune_by_scores, random_scores
from auber.config import RunConfig
from auber.data import generate_synthetic, load_dataset_tsv
from auber.errors import InputError
from auber.orchestrator import PruneReport, run_auber
from auber.tensor import make_rng
from auber.trainer import Dataset, MetricsLog, evaluate, fine_tune
from auber.transformer import EncoderModel, init_model


def load_task(cfg: RunConfig) -> tuple[Dataset, Dataset]:
    """Train/dev datasets from TSV paths, or the synthetic trigger task."""
    d, m = cfg.data, cfg.model
    if (d.train_path is None) != (d.dev_path is None):
        raise InputError("data.train_path and data.dev_path must be given together")
    if d.train_path is not None:
        train = load_dataset_tsv(d.train_path, m.vocab_size, m.max_len, m.num_classes)
        dev = load_dataset_tsv(d.dev_path, m.vocab_size, m.max_len, m.num_classes)
        return train, dev
    if d.seq_len > m.max_len:
        raise InputError(f"data.seq_len {d.seq_len} exceeds model.max_len {m.max_len}")
    if m.num_classes != 2:
        raise InputError("the synthetic task is binary; set model.num_classes=2")
    rng = make_rng(d.data_seed)
    train = generate_synthetic(d.n_train, d.seq_len, m.vocab_size, d.trigger_token, d.label_noise, rng)
    dev = generate_synthetic(d.n_dev, d.seq_len, m.vocab_size, d.trigger_token, d.label_noise, rng)
    return train, dev


def streams(seed: int) -> list[np.random.Generator]:
    """Independent base-training, pruning-run and head-scoring streams."""
    return make_rng(seed).spawn(3)


def train_base(cfg: RunConfig, train: Dataset, rng: np.random.Generator,
               log_rows: Optional[MetricsLog] = None) -> EncoderModel:
    model = init_model(cfg.model, rng)
    fine_tune(model, train, cfg.trainer.base_lr, cfg.trainer.base_epochs, rng,
              batch_size=cfg.trainer.batch_size, log=log_rows, phase="base")
    return model


def synthetic_config(seed: int) -> RunConfig:
    """The desk-scale overfitting setup: L=2, H=4, d=32 on 300/600 noisy trigger examples."""
    cfg = RunConfig(seed=seed)
    cfg.model.max_len = cfg.data.seq_len
    cfg.data.data_seed = 1000 + seed
    return cfg


@dataclass
class RegularizationTrial:
    seed: int
    train_accuracy: float
    original: float  # base model, no pruning, no further tuning
    unpruned_finetuned: float  # base model + the same final fine-tune, nothing pruned
    auber: float
    random: float  # random heads, P matched to the AUBER run
    heads_pruned: int
    auber_report: PruneReport
    random_report: PruneReport


def regularization_trial(cfg: RunConfig) -> RegularizationTrial:
    """One seed of the AUBER vs unpruned vs random comparison.

    All three arms start from the same base model and share the final
    fine-tune stream, so they differ only in which heads are gated off.
    """
    cfg.validate()
    train, dev = load_task(cfg)
    base_rng, _, score_rng = streams(cfg.seed)
    base = train_base(cfg, train, base_rng)

    def run_stream() -> np.random.Generator:
        # a fresh copy of the pruning-run stream for each arm
        return streams(cfg.seed)[1]

    table = random_scores(base, score_rng)
    unpruned, _ = prune_by_scores(base.copy(), table, 0, train, dev, cfg.trainer, run_stream(), seed=cfg.seed)
    auber, _ = run_auber(base.copy(), cfg, train, dev, run_stream())
    rand, _ = prune_by_scores(base.copy(), table, auber.total_pruned, train, dev, cfg.trainer, run_stream(),
                              seed=cfg.seed)
    return RegularizationTrial(
        seed=cfg.seed,
        train_accuracy=evaluate(base, train).accuracy,
        original=evaluate(base, dev).accuracy,
        unpruned_finetuned=unpruned.post.accuracy,
        auber=auber.post.accuracy,
        random=rand.post.accuracy,
        heads_pruned=auber.total_pruned,
        auber_report=auber,
        random_report=rand,
    )
