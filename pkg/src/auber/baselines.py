"""Heuristic head-pruning competitors: random, confidence, gradient importance.

Each method scores every head; :func:`prune_by_scores` then removes the P
lowest-scoring live heads across all layers (never emptying a layer) and
runs the same early-stopped final fine-tune as the RL pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from auber.config import TrainerConfig
from auber.errors import InputError
from auber.orchestrator import LayerPolicy, PruneReport, final_finetune
from auber.trainer import Dataset, MetricsLog, evaluate
from auber.transformer import EncoderModel, _length_buckets, attention_maps, backward_batch, forward_batch, prune_head


class ScoreMethod(str, Enum):
    RANDOM = "random"
    CONFIDENCE = "confidence"
    GRADIENT = "gradient"


@dataclass
class HeadScoreTable:
    scores: np.ndarray  # L x H
    method: ScoreMethod


def random_scores(model: EncoderModel, rng: np.random.Generator) -> HeadScoreTable:
    shape = (len(model.layers), model.config.num_heads)
    return HeadScoreTable(rng.random(shape), ScoreMethod.RANDOM)


def confidence_scores(model: EncoderModel, data: Dataset) -> HeadScoreTable:
    """Mean over every query row of every sequence of the row's maximum attention weight."""
    if len(data) == 0:
        raise InputError("confidence scores need a non-empty dataset")
    seqs = data.seqs
    L, H = len(model.layers), model.config.num_heads
    totals = np.zeros((L, H))
    rows = 0
    for _, idx in _length_buckets(seqs).items():
        maps = attention_maps(model, np.array([seqs[i] for i in idx]))
        for l, A in enumerate(maps):
            totals[l] += A.max(axis=-1).sum(axis=(0, 2))
        rows += len(idx) * len(seqs[idx[0]])
    scores = totals / rows
    scores[model.gate_matrix() == 0] = 0.0
    return HeadScoreTable(scores, ScoreMethod.CONFIDENCE)


def gradient_importance(model: EncoderModel, data: Dataset) -> HeadScoreTable:
    """Mean over examples of |d loss / d gate|, evaluated with every gate at 1."""
    if len(data) == 0:
        raise InputError("gradient importance needs a non-empty dataset")
    probe = model.copy()
    for layer in probe.layers:
        layer.gates[:] = 1.0
    seqs, labels = data.seqs, data.labels
    totals = np.zeros((len(probe.layers), probe.config.num_heads))
    for _, idx in _length_buckets(seqs).items():
        fwd = forward_batch(probe, np.array([seqs[i] for i in idx]))
        _, grads = backward_batch(probe, fwd, labels[idx])
        for l, per_example in enumerate(grads.gates_per_example):
            totals[l] += np.abs(per_example).sum(axis=0)
    return HeadScoreTable(totals / len(data), ScoreMethod.GRADIENT)


def select_prunes(model: EncoderModel, table: HeadScoreTable, P: int) -> list[tuple[int, int]]:
    """Pick P live heads by ascending score, skipping any that would empty its layer."""
    L, H = len(model.layers), model.config.num_heads
    if P < 0 or P > L * (H - 1):
        raise InputError(f"cannot prune {P} heads from {L} layers of {H} (max {L * (H - 1)})")
    live = {l: len(model.layers[l].live_heads()) for l in range(L)}
    candidates = sorted(
        (float(table.scores[l, h]), l, h) for l in range(L) for h in model.layers[l].live_heads()
    )
    chosen = []
    for _, l, h in candidates:
        if len(chosen) == P:
            break
        if live[l] >= 2:
            chosen.append((l, h))
            live[l] -= 1
    if len(chosen) < P:
        raise InputError(f"only {len(chosen)} heads can be pruned without emptying a layer, asked {P}")
    return chosen


def prune_by_scores(
    model: EncoderModel,
    table: HeadScoreTable,
    P: int,
    train: Dataset,
    dev: Dataset,
    tcfg: TrainerConfig,
    rng: np.random.Generator,
    seed: int = 0,
    config: dict | None = None,
    log_rows: MetricsLog | None = None,
) -> tuple[PruneReport, EncoderModel]:
    """Prune ``model`` in place, then early-stop fine-tune; returns report and best model."""
    _, final_rng = rng.spawn(2)
    pre = evaluate(model, dev)
    chosen = select_prunes(model, table, P)
    per_layer: dict[int, list[int]] = {l: [] for l in range(len(model.layers))}
    for l, h in chosen:
        prune_head(model, l, h)
        per_layer[l].append(h)
    final = final_finetune(model, train, dev, tcfg, final_rng, log_rows)
    report = PruneReport(
        method=f"baseline:{table.method.value}",
        layer_policies=[LayerPolicy(l, heads, None, None) for l, heads in per_layer.items()],
        order=list(range(len(model.layers))),
        pre=pre,
        post=evaluate(final.model, dev),
        seed=seed,
        config=dict(config or {}, scores=table.scores.tolist()),
        final_best_epoch=final.best_epoch,
    )
    return report, final.model
