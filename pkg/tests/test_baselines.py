import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import auber.baselines as bl
from auber.baselines import (
    HeadScoreTable,
    ScoreMethod,
    confidence_scores,
    gradient_importance,
    prune_by_scores,
    random_scores,
    select_prunes,
)
from auber.config import TrainerConfig
from auber.errors import InputError
from auber.tensor import make_rng
from auber.trainer import Dataset, Example
from auber.transformer import loss_and_grads
from oracles import central_diff, rel_err, small_model


def _data(n, seed, length=5, vocab=16):
    rng = make_rng(seed)
    return Dataset([Example(tuple(int(t) for t in rng.integers(0, vocab, length)), int(rng.integers(0, 2)))
                    for _ in range(n)])


def test_sort_and_skip_trace():
    model = small_model(0, L=1, H=4)
    table = HeadScoreTable(np.array([[0.4, 0.1, 0.3, 0.2]]), ScoreMethod.RANDOM)
    assert select_prunes(model, table, 3) == [(0, 1), (0, 3), (0, 2)]


def test_sort_skips_heads_that_would_empty_a_layer():
    model = small_model(1, L=2, H=2)
    table = HeadScoreTable(np.array([[0.1, 0.2], [0.3, 0.4]]), ScoreMethod.RANDOM)
    assert select_prunes(model, table, 2) == [(0, 0), (1, 0)]
    with pytest.raises(InputError):
        select_prunes(model, table, 3)


def test_equal_scores_break_ties_by_layer_then_head():
    model = small_model(2, L=2, H=3)
    table = HeadScoreTable(np.zeros((2, 3)), ScoreMethod.RANDOM)
    assert select_prunes(model, table, 3) == [(0, 0), (0, 1), (1, 0)]


def test_single_token_confidence_is_one():
    model = small_model(3, H=3)
    data = Dataset([Example((t,), t % 2) for t in range(6)])
    np.testing.assert_array_equal(confidence_scores(model, data).scores, np.ones((2, 3)))


def test_confidence_is_mean_of_row_maxima(monkeypatch):
    A = np.array([[0.9, 0.1], [0.2, 0.8]])
    monkeypatch.setattr(bl, "attention_maps", lambda model, toks: [A[None, None]])
    model = small_model(4, L=1, H=1)
    model.layers[0].gates[:] = 1.0
    score = confidence_scores(model, Dataset([Example((1, 2), 0)])).scores
    assert score[0, 0] == pytest.approx(0.85, abs=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 8))
def test_confidence_bounds(seed, N):
    model = small_model(seed, H=2, max_len=8)
    scores = confidence_scores(model, _data(5, seed, length=N)).scores
    assert np.all(scores >= 1.0 / N - 1e-12) and np.all(scores <= 1.0 + 1e-12)


def test_gradient_importance_matches_finite_differences():
    model = small_model(5, L=2, H=2)
    data = _data(6, 1)
    got = gradient_importance(model, data).scores
    for l in range(2):
        for h in range(2):
            per_example = []
            for ex in data.examples:
                def f():
                    return loss_and_grads(model, [ex.tokens], [ex.label])[0]

                gate = model.layers[l].gates[h:h + 1]
                per_example.append(abs(central_diff(f, gate, step=1e-4)[0]))
            assert rel_err(got[l, h], np.mean(per_example)) < 1e-4


def test_zero_value_head_has_zero_importance():
    model = small_model(6, H=3)
    model.layers[1].Wv[2] = 0.0
    assert gradient_importance(model, _data(5, 2)).scores[1, 2] == 0.0


def test_duplicate_heads_score_equally():
    model = small_model(7, L=1, H=2)
    layer = model.layers[0]
    for name in ("Wq", "Wk", "Wv"):
        getattr(layer, name)[1] = getattr(layer, name)[0]
    m = layer.Wv.shape[2]
    layer.Wo[m:2 * m] = layer.Wo[:m]
    scores = gradient_importance(model, _data(8, 3)).scores
    assert abs(scores[0, 0] - scores[0, 1]) < 1e-9
    conf = confidence_scores(model, _data(8, 3)).scores
    assert abs(conf[0, 0] - conf[0, 1]) < 1e-12


def test_random_scores_are_reproducible():
    model = small_model(8, L=2, H=4)
    a = select_prunes(model, random_scores(model, make_rng(1)), 3)
    b = select_prunes(model, random_scores(model, make_rng(1)), 3)
    assert a == b


def test_prune_by_scores_report():
    model = small_model(9, L=2, H=3)
    tcfg = TrainerConfig(patience=2, max_epochs=3)
    table = HeadScoreTable(np.array([[0.5, 0.1, 0.2], [0.9, 0.3, 0.8]]), ScoreMethod.GRADIENT)
    report, final = prune_by_scores(model, table, 3, _data(20, 4), _data(20, 5), tcfg, make_rng(0))
    assert report.pruned_set() == {(0, 1), (0, 2), (1, 1)}
    assert report.total_pruned == 3 == final.num_pruned()
    assert report.method == "baseline:gradient"
    assert all(p.final_mini_val_accuracy is None for p in report.layer_policies)


def test_zero_prunes_keep_gates():
    model = small_model(10, L=2, H=3)
    tcfg = TrainerConfig(patience=1, max_epochs=2)
    report, final = prune_by_scores(model, random_scores(model, make_rng(0)), 0, _data(10, 6), _data(10, 7),
                                    tcfg, make_rng(0))
    assert report.total_pruned == 0
    assert all(p.pruned_heads == [] for p in report.layer_policies)
    np.testing.assert_array_equal(final.gate_matrix(), np.ones((2, 3)))
