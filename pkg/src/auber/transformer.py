"""Toy BERT-shaped encoder classifier with per-head gates.

Block structure: multi-head self-attention (heads gated by a {0,1}
multiplier) -> residual -> layer norm -> ReLU feed-forward -> residual ->
layer norm. Sinusoidal positions (frozen), mean pooling, linear classifier.

Per-head projections of a layer are stored stacked, ``Wq[h]`` being the
d x n query matrix of head ``h``; ``layer.heads`` exposes them as
:class:`AttentionHead` views. Forward and backward passes run on a batch of
equal-length sequences, shape (B, N, d); :func:`loss_and_grads` and
:func:`predict_logits` bucket ragged inputs by length.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from auber.errors import InputError, PolicyError, ShapeError
from auber.tensor import DTYPE, as_matrix, row_softmax

LN_EPS = 1e-5
LAYER_PARAMS = ("Wq", "Wk", "Wv", "Wo", "W1", "b1", "W2", "b2", "ln1_g", "ln1_b", "ln2_g", "ln2_b")


@dataclass
class ModelConfig:
    num_layers: int = 2
    num_heads: int = 4
    d_model: int = 32
    d_query: int = 8
    d_value: int = 8
    d_ff: int = 64
    max_len: int = 32
    vocab_size: int = 64
    num_classes: int = 2

    def validate(self) -> None:
        for name, value in vars(self).items():
            if int(value) < 1:
                raise InputError(f"model.{name} must be >= 1, got {value}")
        if self.num_classes < 2:
            raise InputError("model.num_classes must be >= 2")


@dataclass
class AttentionHead:
    Wq: np.ndarray  # d x n
    Wk: np.ndarray  # d x n
    Wv: np.ndarray  # d x m

    def __post_init__(self):
        if self.Wq.shape != self.Wk.shape or self.Wq.shape[0] != self.Wv.shape[0]:
            raise ShapeError(
                f"inconsistent head shapes Wq{self.Wq.shape} Wk{self.Wk.shape} Wv{self.Wv.shape}"
            )


@dataclass
class EncoderLayer:
    Wq: np.ndarray  # H x d x n
    Wk: np.ndarray  # H x d x n
    Wv: np.ndarray  # H x d x m
    Wo: np.ndarray  # H*m x d
    W1: np.ndarray  # d x f
    b1: np.ndarray
    W2: np.ndarray  # f x d
    b2: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    gates: np.ndarray = field(default=None)  # H

    def __post_init__(self):
        if self.gates is None:
            self.gates = np.ones(self.num_heads, dtype=DTYPE)
        if self.Wo.shape[0] != self.num_heads * self.Wv.shape[2]:
            raise ShapeError(f"Wo has {self.Wo.shape[0]} rows, expected H*m = {self.num_heads * self.Wv.shape[2]}")

    @property
    def num_heads(self) -> int:
        return self.Wq.shape[0]

    @property
    def heads(self) -> list[AttentionHead]:
        return [AttentionHead(self.Wq[h], self.Wk[h], self.Wv[h]) for h in range(self.num_heads)]

    def live_heads(self) -> list[int]:
        return [h for h in range(self.num_heads) if self.gates[h] != 0]


@dataclass
class EncoderModel:
    config: ModelConfig
    embed: np.ndarray  # vocab x d
    positional: np.ndarray  # max_len x d, frozen
    layers: list[EncoderLayer]
    classifier: np.ndarray  # d x num_classes
    classifier_bias: np.ndarray

    def parameters(self) -> list[tuple[str, np.ndarray]]:
        """Trainable arrays in declared order (positional encodings and gates excluded)."""
        out = [("embed", self.embed)]
        for i, layer in enumerate(self.layers):
            out.extend((f"layers.{i}.{p}", getattr(layer, p)) for p in LAYER_PARAMS)
        out.append(("classifier", self.classifier))
        out.append(("classifier_bias", self.classifier_bias))
        return out

    def copy(self) -> "EncoderModel":
        return copy.deepcopy(self)

    def gate_matrix(self) -> np.ndarray:
        return np.stack([layer.gates for layer in self.layers])

    def num_pruned(self) -> int:
        return int(sum((layer.gates == 0).sum() for layer in self.layers))


@dataclass
class GradientSet:
    params: dict[str, np.ndarray]
    gates: list[np.ndarray]
    gates_per_example: Optional[list[np.ndarray]] = None  # B x H per layer, batch calls only

    @classmethod
    def zeros_like(cls, model: EncoderModel) -> "GradientSet":
        return cls(
            {name: np.zeros_like(p) for name, p in model.parameters()},
            [np.zeros_like(layer.gates) for layer in model.layers],
        )

    def scale_(self, c: float) -> None:
        for g in self.params.values():
            g *= c
        for g in self.gates:
            g *= c


class ForwardResult(NamedTuple):
    logits: np.ndarray
    cache: dict


def sinusoidal_positions(max_len: int, d: int) -> np.ndarray:
    pos = np.arange(max_len, dtype=DTYPE)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


def _xavier(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[-2], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_model(config: ModelConfig, rng: np.random.Generator) -> EncoderModel:
    config.validate()
    H, d, n, m, f = config.num_heads, config.d_model, config.d_query, config.d_value, config.d_ff
    layers = []
    for _ in range(config.num_layers):
        layers.append(
            EncoderLayer(
                Wq=_xavier(rng, (H, d, n)),
                Wk=_xavier(rng, (H, d, n)),
                Wv=_xavier(rng, (H, d, m)),
                Wo=_xavier(rng, (H * m, d)),
                W1=_xavier(rng, (d, f)),
                b1=np.zeros(f),
                W2=_xavier(rng, (f, d)),
                b2=np.zeros(d),
                ln1_g=np.ones(d),
                ln1_b=np.zeros(d),
                ln2_g=np.ones(d),
                ln2_b=np.zeros(d),
            )
        )
    return EncoderModel(
        config=config,
        embed=_xavier(rng, (config.vocab_size, d)),
        positional=sinusoidal_positions(config.max_len, d),
        layers=layers,
        classifier=_xavier(rng, (d, config.num_classes)),
        classifier_bias=np.zeros(config.num_classes),
    )


# ---------------------------------------------------------------------------
# single-example reference operations


def head_forward(head: AttentionHead, X) -> tuple[np.ndarray, np.ndarray]:
    """Return (attention N x N, output N x m) of one self-attention head."""
    X = as_matrix(X)
    if X.shape[1] != head.Wq.shape[0]:
        raise ShapeError(f"input has {X.shape[1]} columns, head expects d = {head.Wq.shape[0]}")
    n = head.Wq.shape[1]
    att = row_softmax((X @ head.Wq) @ (X @ head.Wk).T / math.sqrt(n))
    return att, att @ (X @ head.Wv)


def layer_forward(layer: EncoderLayer, X) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] != layer.Wq.shape[1]:
        raise ShapeError(f"input has {X.shape[1]} columns, layer expects d = {layer.Wq.shape[1]}")
    y, _ = _layer_fwd(layer, X[None])
    return y[0]


# ---------------------------------------------------------------------------
# batched internals


def _ln_fwd(z, g, b):
    mu = z.mean(-1, keepdims=True)
    xc = z - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv)


def _ln_bwd(dy, g, cache):
    xhat, inv = cache
    dg = (dy * xhat).sum(axis=(0, 1))
    db = dy.sum(axis=(0, 1))
    dxhat = dy * g
    dz = inv * (dxhat - dxhat.mean(-1, keepdims=True) - xhat * (dxhat * xhat).mean(-1, keepdims=True))
    return dz, dg, db


def _layer_fwd(layer: EncoderLayer, X: np.ndarray):
    B, N, _ = X.shape
    H, _, n = layer.Wq.shape
    m = layer.Wv.shape[2]
    Xh = X[:, None]
    Q = Xh @ layer.Wq  # B,H,N,n
    K = Xh @ layer.Wk
    V = Xh @ layer.Wv  # B,H,N,m
    A = row_softmax(Q @ K.swapaxes(-1, -2) / math.sqrt(n))  # B,H,N,N
    O = A @ V
    C = (O * layer.gates[None, :, None, None]).transpose(0, 2, 1, 3).reshape(B, N, H * m)
    y1, ln1 = _ln_fwd(X + C @ layer.Wo, layer.ln1_g, layer.ln1_b)
    a = y1 @ layer.W1 + layer.b1
    h = np.maximum(a, 0.0)
    y, ln2 = _ln_fwd(y1 + h @ layer.W2 + layer.b2, layer.ln2_g, layer.ln2_b)
    cache = dict(X=X, Q=Q, K=K, V=V, A=A, O=O, C=C, y1=y1, a=a, h=h, ln1=ln1, ln2=ln2)
    return y, cache


def _layer_bwd(layer: EncoderLayer, dy: np.ndarray, c: dict):
    """Backprop one layer. Returns (dX, {param: grad}, per-example gate grads B x H)."""
    B, N, d = dy.shape
    H, _, n = layer.Wq.shape
    m = layer.Wv.shape[2]
    f = layer.W1.shape[1]
    g = {}
    dz2, g["ln2_g"], g["ln2_b"] = _ln_bwd(dy, layer.ln2_g, c["ln2"])
    g["W2"] = c["h"].reshape(-1, f).T @ dz2.reshape(-1, d)
    g["b2"] = dz2.sum(axis=(0, 1))
    da = (dz2 @ layer.W2.T) * (c["a"] > 0)
    g["W1"] = c["y1"].reshape(-1, d).T @ da.reshape(-1, f)
    g["b1"] = da.sum(axis=(0, 1))
    dy1 = dz2 + da @ layer.W1.T
    dz1, g["ln1_g"], g["ln1_b"] = _ln_bwd(dy1, layer.ln1_g, c["ln1"])
    g["Wo"] = c["C"].reshape(-1, H * m).T @ dz1.reshape(-1, d)
    dG = (dz1 @ layer.Wo.T).reshape(B, N, H, m).transpose(0, 2, 1, 3)
    dgates = (dG * c["O"]).sum(axis=(2, 3))
    dO = dG * layer.gates[None, :, None, None]
    A, Q, K, V = c["A"], c["Q"], c["K"], c["V"]
    dA = dO @ V.swapaxes(-1, -2)
    dV = A.swapaxes(-1, -2) @ dO
    dS = A * (dA - (dA * A).sum(-1, keepdims=True)) / math.sqrt(n)
    dQ = dS @ K
    dK = dS.swapaxes(-1, -2) @ Q
    Xt = c["X"][:, None].swapaxes(-1, -2)  # B,1,d,N
    g["Wq"] = (Xt @ dQ).sum(0)
    g["Wk"] = (Xt @ dK).sum(0)
    g["Wv"] = (Xt @ dV).sum(0)
    dX = (
        dz1
        + (dQ @ layer.Wq.swapaxes(-1, -2)).sum(1)
        + (dK @ layer.Wk.swapaxes(-1, -2)).sum(1)
        + (dV @ layer.Wv.swapaxes(-1, -2)).sum(1)
    )
    return dX, g, dgates


def _check_tokens(model: EncoderModel, tokens: np.ndarray) -> None:
    cfg = model.config
    if tokens.ndim != 2 or tokens.shape[1] == 0:
        raise InputError("token sequences must be non-empty")
    if tokens.shape[1] > cfg.max_len:
        raise InputError(f"sequence length {tokens.shape[1]} exceeds max_len {cfg.max_len}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise InputError(f"token id out of range [0, {cfg.vocab_size})")


def forward_batch(model: EncoderModel, tokens) -> ForwardResult:
    """Logits (B x num_classes) for a batch of equal-length token sequences."""
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None]
    _check_tokens(model, tokens)
    N = tokens.shape[1]
    X = model.embed[tokens] + model.positional[:N]
    caches = []
    for layer in model.layers:
        X, c = _layer_fwd(layer, X)
        caches.append(c)
    pooled = X.mean(axis=1)
    logits = pooled @ model.classifier + model.classifier_bias
    return ForwardResult(logits, dict(tokens=tokens, layers=caches, pooled=pooled))


def backward_batch(model: EncoderModel, fwd: ForwardResult, labels) -> tuple[float, GradientSet]:
    """Summed cross-entropy over the batch and its exact gradient."""
    labels = np.asarray(labels, dtype=np.int64)
    logits, cache = fwd
    B = logits.shape[0]
    if labels.shape != (B,) or labels.min() < 0 or labels.max() >= model.config.num_classes:
        raise InputError(f"labels must be {B} class indices in [0, {model.config.num_classes})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - log_z
    rows = np.arange(B)
    loss = float(-logp[rows, labels].sum())
    dlogits = np.exp(logp)
    dlogits[rows, labels] -= 1.0

    grads = GradientSet.zeros_like(model)
    grads.gates_per_example = [None] * len(model.layers)
    grads.params["classifier"] += cache["pooled"].T @ dlogits
    grads.params["classifier_bias"] += dlogits.sum(0)
    N = cache["tokens"].shape[1]
    dX = np.broadcast_to((dlogits @ model.classifier.T)[:, None, :] / N, (B, N, model.config.d_model))
    for i in reversed(range(len(model.layers))):
        dX, g, dgates = _layer_bwd(model.layers[i], dX, cache["layers"][i])
        for name, value in g.items():
            grads.params[f"layers.{i}.{name}"] += value
        grads.gates[i] += dgates.sum(0)
        grads.gates_per_example[i] = dgates
    np.add.at(grads.params["embed"], cache["tokens"], dX)
    return loss, grads


# ---------------------------------------------------------------------------
# public entry points


def model_forward(model: EncoderModel, tokens: Sequence[int]) -> ForwardResult:
    """Single sequence -> (logits vector, cache)."""
    fwd = forward_batch(model, np.asarray(tokens, dtype=np.int64)[None])
    return ForwardResult(fwd.logits[0], fwd.cache)


def model_backward(model: EncoderModel, tokens: Sequence[int], label: int) -> tuple[float, GradientSet]:
    if not 0 <= int(label) < model.config.num_classes:
        raise InputError(f"label {label} outside [0, {model.config.num_classes})")
    fwd = forward_batch(model, np.asarray(tokens, dtype=np.int64)[None])
    return backward_batch(model, fwd, [label])


def _length_buckets(seqs: Sequence[Sequence[int]]) -> dict[int, list[int]]:
    buckets: dict[int, list[int]] = {}
    for i, s in enumerate(seqs):
        buckets.setdefault(len(s), []).append(i)
    return dict(sorted(buckets.items()))


def loss_and_grads(model: EncoderModel, seqs: Sequence[Sequence[int]], labels: Sequence[int]) -> tuple[float, GradientSet]:
    """Mean cross-entropy over ragged sequences and its gradient."""
    if len(seqs) == 0:
        raise InputError("empty batch")
    total = GradientSet.zeros_like(model)
    loss = 0.0
    for _, idx in _length_buckets(seqs).items():
        toks = np.array([seqs[i] for i in idx], dtype=np.int64)
        l, g = backward_batch(model, forward_batch(model, toks), [labels[i] for i in idx])
        loss += l
        for name, value in g.params.items():
            total.params[name] += value
        for acc, value in zip(total.gates, g.gates):
            acc += value
    total.scale_(1.0 / len(seqs))
    return loss / len(seqs), total


def predict_logits(model: EncoderModel, seqs: Sequence[Sequence[int]], chunk: int = 512) -> np.ndarray:
    out = np.empty((len(seqs), model.config.num_classes))
    for _, idx in _length_buckets(seqs).items():
        for start in range(0, len(idx), chunk):
            part = idx[start:start + chunk]
            toks = np.array([seqs[i] for i in part], dtype=np.int64)
            out[part] = forward_batch(model, toks).logits
    return out


def attention_maps(model: EncoderModel, tokens) -> list[np.ndarray]:
    """Per-layer attention arrays (B, H, N, N) for a batch of equal-length sequences."""
    fwd = forward_batch(model, tokens)
    return [c["A"] for c in fwd.cache["layers"]]


def prune_head(model: EncoderModel, layer: int, head: int) -> None:
    if not 0 <= layer < len(model.layers):
        raise PolicyError(f"layer {layer} out of range")
    lay = model.layers[layer]
    if not 0 <= head < lay.num_heads:
        raise PolicyError(f"head {head} out of range")
    if lay.gates[head] == 0:
        raise PolicyError(f"head {head} of layer {layer} is already pruned")
    if len(lay.live_heads()) < 2:
        raise PolicyError(f"refusing to prune the last live head of layer {layer}")
    lay.gates[head] = 0.0
