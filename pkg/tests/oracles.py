"""Independent reference implementations used as test oracles.

Everything here is written with plain Python loops or by explicit per-head
slicing so it shares no code path with the batched numpy implementation.
"""

from __future__ import annotations

import math

import numpy as np

from auber.tensor import make_rng
from auber.transformer import LN_EPS, EncoderModel, ModelConfig, init_model


def loop_matmul(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            s = 0.0
            for k in range(a.shape[1]):
                s += a[i, k] * b[k, j]
            out[i, j] = s
    return out


def scalar_head(Wq, Wk, Wv, X):
    """Self-attention of one head, one scalar at a time."""
    N, d = X.shape
    n, m = Wq.shape[1], Wv.shape[1]

    def proj(W, cols):
        return [[sum(X[t, k] * W[k, c] for k in range(d)) for c in range(cols)] for t in range(N)]

    Q, K, V = proj(Wq, n), proj(Wk, n), proj(Wv, m)
    att = np.zeros((N, N))
    for i in range(N):
        logits = [sum(Q[i][c] * K[j][c] for c in range(n)) / math.sqrt(n) for j in range(N)]
        top = max(logits)
        ex = [math.exp(z - top) for z in logits]
        tot = sum(ex)
        for j in range(N):
            att[i, j] = ex[j] / tot
    out = np.zeros((N, m))
    for i in range(N):
        for c in range(m):
            out[i, c] = sum(att[i, j] * V[j][c] for j in range(N))
    return att, out


def _layernorm_rows(Z, g, b):
    out = np.empty_like(Z)
    for r in range(Z.shape[0]):
        row = Z[r]
        mu = sum(row) / len(row)
        var = sum((x - mu) ** 2 for x in row) / len(row)
        out[r] = [(x - mu) / math.sqrt(var + LN_EPS) * gi + bi for x, gi, bi in zip(row, g, b)]
    return out


def sliced_layer(layer, X):
    """Layer output as a sum of per-head contributions through row slices of Wo."""
    H, _, m = layer.Wv.shape
    mha = np.zeros_like(X)
    for h in range(H):
        if layer.gates[h] == 0:
            continue
        _, o = scalar_head(layer.Wq[h], layer.Wk[h], layer.Wv[h], X)
        mha += layer.gates[h] * (o @ layer.Wo[h * m:(h + 1) * m])
    y1 = _layernorm_rows(X + mha, layer.ln1_g, layer.ln1_b)
    ffn = np.maximum(y1 @ layer.W1 + layer.b1, 0.0) @ layer.W2 + layer.b2
    return _layernorm_rows(y1 + ffn, layer.ln2_g, layer.ln2_b)


def unrolled_logits(model: EncoderModel, tokens):
    X = np.array([model.embed[t] + model.positional[i] for i, t in enumerate(tokens)])
    for layer in model.layers:
        X = sliced_layer(layer, X)
    pooled = X.sum(axis=0) / X.shape[0]
    return np.array([
        sum(pooled[k] * model.classifier[k, c] for k in range(len(pooled))) + model.classifier_bias[c]
        for c in range(model.classifier.shape[1])
    ])


def perturbed_model(model: EncoderModel, seed: int, scale: float = 0.3) -> EncoderModel:
    """Copy with layer-norm and bias parameters moved off their trivial init."""
    rng = make_rng(seed)
    out = model.copy()
    for layer in out.layers:
        for name in ("b1", "b2", "ln1_b", "ln2_b"):
            arr = getattr(layer, name)
            arr += scale * rng.standard_normal(arr.shape)
        for name in ("ln1_g", "ln2_g"):
            arr = getattr(layer, name)
            arr += scale * rng.standard_normal(arr.shape)
    out.classifier_bias += scale * rng.standard_normal(out.classifier_bias.shape)
    return out


def small_model(seed: int, L=2, H=2, d=8, n=4, m=4, f=12, max_len=8, vocab=16, classes=2) -> EncoderModel:
    cfg = ModelConfig(num_layers=L, num_heads=H, d_model=d, d_query=n, d_value=m, d_ff=f,
                      max_len=max_len, vocab_size=vocab, num_classes=classes)
    return perturbed_model(init_model(cfg, make_rng(seed)), seed + 10_000)


def rel_err(a, b, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor), elementwise."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def central_diff(f, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    grad = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return grad
