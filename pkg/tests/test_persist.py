import csv
import io
import json
import struct

import numpy as np
import pytest

from auber.errors import FormatError
from auber.orchestrator import LayerPolicy, PruneReport
from auber.persist import (
    MAGIC,
    checkpoint_bytes,
    comparison_table,
    emit_report,
    load_checkpoint,
    load_report,
    metrics_csv,
    parse_checkpoint,
    save_checkpoint,
)
from auber.tensor import make_rng
from auber.trainer import Metrics, MetricsLog
from auber.transformer import model_forward, prune_head
from oracles import small_model


def test_round_trip_is_bit_identical(tmp_path):
    model = small_model(0, L=2, H=3)
    prune_head(model, 1, 2)
    rng = make_rng(9)
    rng.random(3)
    path = tmp_path / "m.aubr"
    save_checkpoint(model, {"seed": 9}, path, rng=rng)
    ckpt = load_checkpoint(path)
    for (na, a), (nb, b) in zip(model.parameters(), ckpt.model.parameters()):
        assert na == nb and a.tobytes() == b.tobytes()
    np.testing.assert_array_equal(ckpt.model.gate_matrix(), model.gate_matrix())
    tokens = [1, 4, 2]
    assert model_forward(model, tokens).logits.tobytes() == model_forward(ckpt.model, tokens).logits.tobytes()
    assert ckpt.config == {"seed": 9}
    np.testing.assert_array_equal(ckpt.restore_rng().random(4), rng.random(4))


def test_layout_header():
    raw = checkpoint_bytes(small_model(1), {})
    assert raw[:4] == MAGIC
    assert struct.unpack_from("<I", raw, 4)[0] == 1
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    header = json.loads(raw[16:16 + hlen])
    assert header["blocks"][0][0] == "embed"


def test_bad_magic_version_and_truncation():
    raw = checkpoint_bytes(small_model(2), {})
    with pytest.raises(FormatError, match="magic"):
        parse_checkpoint(b"XXXX" + raw[4:])
    with pytest.raises(FormatError, match="version 2"):
        parse_checkpoint(raw[:4] + struct.pack("<I", 2) + raw[8:])
    for cut in (10, 40, len(raw) - 1):
        with pytest.raises(FormatError):
            parse_checkpoint(raw[:cut])
    with pytest.raises(FormatError, match="trailing"):
        parse_checkpoint(raw + b"\0")


def _report(pruned):
    policies = [LayerPolicy(l, heads, 0.8, 0.75) for l, heads in enumerate(pruned)]
    return PruneReport("auber", policies, [0, 1], Metrics(0.7, 0.4), Metrics(0.75, 0.5), seed=3)


def test_emit_report_schema(tmp_path):
    log = MetricsLog()
    log.add(1, "final", 0.5, 0.69)
    log.add(2, "final", 0.6, 0.5)
    path = tmp_path / "r.json"
    emit_report(_report([[1], [0, 2]]), path, log)
    d = load_report(path)
    for key in ("config", "layer_policies", "total_pruned", "pre", "post", "order", "seed"):
        assert key in d
    assert d["total_pruned"] == 3 == sum(len(p["pruned_heads"]) for p in d["layer_policies"])
    assert d["pre"] == {"acc": 0.7, "mcc": 0.4}
    rows = list(csv.reader(io.StringIO((tmp_path / "r.metrics.csv").read_text())))
    assert rows[0] == ["epoch", "phase", "accuracy", "loss"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2]


def test_empty_report():
    d = _report([[], []]).as_dict()
    assert d["total_pruned"] == 0
    assert all(p["pruned_heads"] == [] for p in d["layer_policies"])


def test_metrics_csv_round_trips_floats():
    log = MetricsLog()
    log.add(1, "base", 1 / 3, 0.1 + 0.2)
    row = metrics_csv(log).splitlines()[1].split(",")
    assert float(row[2]) == 1 / 3 and float(row[3]) == 0.1 + 0.2


def test_comparison_table_columns():
    a = _report([[1], [0, 2]]).as_dict()
    b = _report([[0], [1, 2]]).as_dict()
    b["method"] = "baseline:random"
    b["post"] = {"acc": 0.7, "mcc": 0.45}
    lines = comparison_table([a, b]).splitlines()
    assert lines[0].split() == ["Policy", "#", "of", "heads", "pruned", "dev", "acc", "dev", "mcc"]
    assert lines[2].split() == ["Original", "-", "70.00", "40.00"]
    assert lines[3].split() == ["auber", "3", "75.00", "50.00"]
    assert lines[4].split() == ["baseline:random", "3", "70.00", "45.00"]
