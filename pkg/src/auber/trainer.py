"""Supervised fine-tuning, evaluation and dataset splitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from auber.errors import InputError, ShapeError
from auber.transformer import EncoderModel, loss_and_grads, predict_logits


@dataclass(frozen=True)
class Example:
    tokens: tuple[int, ...]
    label: int
    clean_label: Optional[int] = None  # set by the synthetic generator only


@dataclass
class Dataset:
    examples: list[Example]
    num_classes: int = 2

    def __post_init__(self):
        for i, ex in enumerate(self.examples):
            if len(ex.tokens) == 0:
                raise InputError(f"example {i} has an empty token sequence")
            if not 0 <= ex.label < self.num_classes:
                raise InputError(f"example {i} label {ex.label} outside [0, {self.num_classes})")

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def seqs(self) -> list[tuple[int, ...]]:
        return [ex.tokens for ex in self.examples]

    @property
    def labels(self) -> np.ndarray:
        return np.array([ex.label for ex in self.examples], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> "Dataset":
        return Dataset([self.examples[i] for i in indices], self.num_classes)


@dataclass
class SplitPair:
    mini_train: Dataset
    mini_val: Dataset


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    mcc: float

    def as_dict(self) -> dict:
        return {"acc": self.accuracy, "mcc": self.mcc}


@dataclass
class MetricsLog:
    """Rows of ``epoch,phase,accuracy,loss`` accumulated over a run."""

    rows: list[tuple[int, str, float, float]] = field(default_factory=list)

    def add(self, epoch: int, phase: str, accuracy: float, loss: float) -> None:
        self.rows.append((epoch, phase, accuracy, loss))


# ---------------------------------------------------------------------------
# metrics


def matthews_corrcoef(y_true, y_pred, num_classes: int = 2) -> float:
    """Multiclass MCC (reduces to the usual binary formula); 0 when undefined."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    s = float(len(y_true))
    c = float((y_true == y_pred).sum())
    t = np.bincount(y_true, minlength=num_classes).astype(float)
    p = np.bincount(y_pred, minlength=num_classes).astype(float)
    denom = math.sqrt((s * s - (p * p).sum()) * (s * s - (t * t).sum()))
    if denom == 0:
        return 0.0
    return (c * s - (p * t).sum()) / denom


def evaluate(model: EncoderModel, data: Dataset) -> Metrics:
    if len(data) == 0:
        raise InputError("cannot evaluate on an empty dataset")
    pred = predict_logits(model, data.seqs).argmax(axis=1)
    labels = data.labels
    return Metrics(float((pred == labels).sum()) / len(data), matthews_corrcoef(labels, pred, data.num_classes))


# ---------------------------------------------------------------------------
# splitting


def split_mini(data: Dataset, rng: np.random.Generator, small_part: str = "train") -> SplitPair:
    """Shuffle and cut 1:2. ``small_part`` says which side receives the third."""
    n = len(data)
    if n < 3:
        raise InputError(f"need at least 3 examples to split, got {n}")
    perm = rng.permutation(n)
    small, large = data.subset(perm[: n // 3]), data.subset(perm[n // 3:])
    if small_part == "train":
        return SplitPair(mini_train=small, mini_val=large)
    if small_part == "val":
        return SplitPair(mini_train=large, mini_val=small)
    raise InputError(f"small_part must be 'train' or 'val', got {small_part!r}")


# ---------------------------------------------------------------------------
# optimization


@dataclass
class OptimizerState:
    lr: float
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float) -> "OptimizerState":
        return cls(lr=lr, m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params])


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], opt: OptimizerState) -> None:
    """In-place bias-corrected Adam update."""
    if len(params) != len(grads) or len(params) != len(opt.m):
        raise ShapeError(f"{len(params)} params, {len(grads)} grads, {len(opt.m)} moment slots")
    for p, g, m in zip(params, grads, opt.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"param {p.shape} / grad {g.shape} / moment {m.shape} mismatch")
    opt.step += 1
    b1, b2 = opt.beta1, opt.beta2
    step_size = opt.lr / (1.0 - b1**opt.step)
    inv_sqrt_c2 = 1.0 / np.sqrt(1.0 - b2**opt.step)
    for p, g, m, v in zip(params, grads, opt.m, opt.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        tmp = np.multiply(g, g)
        tmp *= 1.0 - b2
        v += tmp
        np.sqrt(v, out=tmp)
        tmp *= inv_sqrt_c2
        tmp += opt.eps
        np.divide(m, tmp, out=tmp)
        tmp *= step_size
        p -= tmp


def _train_epoch(model, data, opt, rng, batch_size) -> float:
    params = [p for _, p in model.parameters()]
    names = [n for n, _ in model.parameters()]
    perm = rng.permutation(len(data))
    total = 0.0
    for start in range(0, len(perm), batch_size):
        idx = perm[start:start + batch_size]
        loss, grads = loss_and_grads(model, [data.examples[i].tokens for i in idx], [data.examples[i].label for i in idx])
        adam_step(params, [grads.params[n] for n in names], opt)
        total += loss * len(idx)
    return total / len(data)


def fine_tune(
    model: EncoderModel,
    data: Dataset,
    lr: float,
    epochs: int,
    rng: np.random.Generator,
    batch_size: int = 32,
    log: Optional[MetricsLog] = None,
    phase: str = "fine_tune",
    eval_data: Optional[Dataset] = None,
) -> float:
    """Adam over shuffled minibatches for ``epochs`` passes; gates are not touched.

    Returns the mean training loss of the last epoch (nan for zero epochs).
    """
    if len(data) == 0:
        raise InputError("cannot fine-tune on an empty dataset")
    if lr < 0:
        raise InputError(f"learning rate must be >= 0, got {lr}")
    opt = OptimizerState.for_params([p for _, p in model.parameters()], lr)
    loss = float("nan")
    for epoch in range(1, epochs + 1):
        loss = _train_epoch(model, data, opt, rng, batch_size)
        if log is not None:
            acc = evaluate(model, eval_data if eval_data is not None else data).accuracy
            log.add(epoch, phase, acc, loss)
    return loss


class EarlyStopper:
    """Track the best score; ties keep the earlier epoch."""

    def __init__(self, patience: int = 20):
        self.patience = patience
        self.best = -math.inf
        self.best_epoch = 0
        self.bad_epochs = 0

    def update(self, score: float, epoch: int) -> bool:
        """Record ``score``; return True if it is a new best."""
        if score > self.best:
            self.best, self.best_epoch, self.bad_epochs = score, epoch, 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


@dataclass
class EarlyStopResult:
    model: EncoderModel
    accuracy: float
    best_epoch: int
    history: list[float]


def early_stop_finetune(
    model: EncoderModel,
    train: Dataset,
    val: Dataset,
    lr: float,
    rng: np.random.Generator,
    patience: int = 20,
    max_epochs: int = 200,
    batch_size: int = 32,
    log: Optional[MetricsLog] = None,
    phase: str = "final",
) -> EarlyStopResult:
    """Fine-tune ``model`` in place and return a snapshot of its best-validation epoch."""
    if len(train) == 0 or len(val) == 0:
        raise InputError("early stopping needs non-empty train and validation sets")
    opt = OptimizerState.for_params([p for _, p in model.parameters()], lr)
    stopper = EarlyStopper(patience)
    best_model = model.copy()
    history = []
    for epoch in range(1, max_epochs + 1):
        loss = _train_epoch(model, train, opt, rng, batch_size)
        acc = evaluate(model, val).accuracy
        history.append(acc)
        if log is not None:
            log.add(epoch, phase, acc, loss)
        if stopper.update(acc, epoch):
            best_model = model.copy()
        if stopper.should_stop:
            break
    return EarlyStopResult(best_model, stopper.best, stopper.best_epoch, history)
