"""Layer observations for the pruning agent, built from per-head weight norms.

The observation of a layer is ``softmax(standardize(norms))`` where
``norms[i]`` is the entrywise L1 (or L2) norm of one projection matrix of
head ``i``. Pruned heads have their entry set to zero without
renormalizing the remaining ones.

:func:`lemma1_check` evaluates the bound ``||O_i||_1 <= N ||X||_1 ||Wv_i||_1``
that motivates the value-matrix L1 norm as a head feature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from auber.errors import StateError
from auber.tensor import as_matrix, entrywise_norm, row_softmax, standardize
from auber.transformer import EncoderLayer, EncoderModel, head_forward


class MatrixKind(str, Enum):
    VALUE = "value"
    QUERY = "query"
    KEY = "key"


class NormKind(str, Enum):
    L1 = "l1"
    L2 = "l2"


@dataclass(frozen=True)
class StateRecipe:
    matrix_kind: MatrixKind = MatrixKind.VALUE
    norm_kind: NormKind = NormKind.L1

    @classmethod
    def from_name(cls, name: str) -> "StateRecipe":
        """``value`` (default), ``query``, ``key`` or ``l2`` (value matrix, L2 norm)."""
        name = name.lower()
        if name == "l2":
            return cls(MatrixKind.VALUE, NormKind.L2)
        return cls(MatrixKind(name), NormKind.L1)

    @property
    def name(self) -> str:
        if self.norm_kind is NormKind.L2:
            return "l2" if self.matrix_kind is MatrixKind.VALUE else f"{self.matrix_kind.value}-l2"
        return self.matrix_kind.value


@dataclass
class LayerState:
    values: np.ndarray
    pruned_mask: np.ndarray = field(default=None)
    layer: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.pruned_mask is None:
            self.pruned_mask = np.zeros(self.values.shape, dtype=bool)

    @property
    def num_pruned(self) -> int:
        return int(self.pruned_mask.sum())


_WEIGHT = {MatrixKind.VALUE: "Wv", MatrixKind.QUERY: "Wq", MatrixKind.KEY: "Wk"}


def head_norms(layer: EncoderLayer, recipe: StateRecipe = StateRecipe()) -> np.ndarray:
    stacked = getattr(layer, _WEIGHT[recipe.matrix_kind])
    p = 1 if recipe.norm_kind is NormKind.L1 else 2
    return np.array([entrywise_norm(w, p) for w in stacked])


def layer_state(model: EncoderModel, l: int, recipe: StateRecipe = StateRecipe()) -> LayerState:
    if not 0 <= l < len(model.layers):
        raise StateError(f"layer {l} out of range")
    layer = model.layers[l]
    if np.any(layer.gates != 1):
        raise StateError(f"layer {l} is partially pruned; initial state needs all heads live")
    values = row_softmax(standardize(head_norms(layer, recipe)))
    return LayerState(values=values, layer=l)


def mark_pruned(state: LayerState, i: int) -> LayerState:
    if state.pruned_mask[i]:
        raise StateError(f"head {i} already marked pruned")
    values = state.values.copy()
    mask = state.pruned_mask.copy()
    values[i] = 0.0
    mask[i] = True
    return LayerState(values=values, pruned_mask=mask, layer=state.layer)


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    ok: bool


def lemma1_check(layer: EncoderLayer, X) -> list[BoundCheck]:
    """Per-head check of ``||O_i||_1 <= N ||X||_1 ||Wv_i||_1`` (self-attention, V = X)."""
    X = as_matrix(X)
    c = X.shape[0] * entrywise_norm(X, 1)
    out = []
    for head in layer.heads:
        _, o = head_forward(head, X)
        lhs = entrywise_norm(o, 1)
        rhs = c * entrywise_norm(head.Wv, 1)
        out.append(BoundCheck(lhs, rhs, lhs <= rhs * (1 + 1e-9)))
    return out
