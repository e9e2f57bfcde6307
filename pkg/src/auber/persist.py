"""Binary checkpoints, JSON reports, metrics CSV and comparison tables.

Checkpoint layout (all integers little-endian)::

    b"AUBR" | u32 version | u64 header length | header (UTF-8 JSON)
    | float64 blocks in declared order | one byte per gate, layer-major

The header records the run config, model config, block names/shapes and
optionally the generator state.
"""

from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from auber.errors import FormatError
from auber.trainer import MetricsLog
from auber.transformer import LAYER_PARAMS, EncoderLayer, EncoderModel, ModelConfig

MAGIC = b"AUBR"
VERSION = 1


def atomic_write(path, data: bytes) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _blocks(model: EncoderModel) -> list[tuple[str, np.ndarray]]:
    out = [("embed", model.embed), ("positional", model.positional)]
    for i, layer in enumerate(model.layers):
        out.extend((f"layers.{i}.{p}", getattr(layer, p)) for p in LAYER_PARAMS)
    out.append(("classifier", model.classifier))
    out.append(("classifier_bias", model.classifier_bias))
    return out


def _jsonable_rng_state(state) -> object:
    if isinstance(state, dict):
        return {k: _jsonable_rng_state(v) for k, v in state.items()}
    if isinstance(state, np.ndarray):
        return {"__ndarray__": state.tolist(), "dtype": str(state.dtype)}
    if isinstance(state, np.integer):
        return int(state)
    return state


def _restore_rng_state(state) -> object:
    if isinstance(state, dict):
        if "__ndarray__" in state:
            return np.array(state["__ndarray__"], dtype=state["dtype"])
        return {k: _restore_rng_state(v) for k, v in state.items()}
    return state


@dataclass
class Checkpoint:
    model: EncoderModel
    config: dict
    rng_state: Optional[dict]
    version: int = VERSION

    def restore_rng(self) -> Optional[np.random.Generator]:
        if self.rng_state is None:
            return None
        bitgen = np.random.Philox()
        bitgen.state = self.rng_state
        return np.random.Generator(bitgen)


def checkpoint_bytes(model: EncoderModel, cfg: dict, rng: Optional[np.random.Generator] = None) -> bytes:
    blocks = _blocks(model)
    header = {
        "config": cfg,
        "model_config": vars(model.config),
        "blocks": [[name, list(arr.shape)] for name, arr in blocks],
        "num_gates": [int(layer.gates.size) for layer in model.layers],
        "rng_state": None if rng is None else _jsonable_rng_state(rng.bit_generator.state),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<Q", len(head)))
    buf.write(head)
    for _, arr in blocks:
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    for layer in model.layers:
        buf.write(np.asarray(layer.gates != 0, dtype=np.uint8).tobytes())
    return buf.getvalue()


def save_checkpoint(model: EncoderModel, cfg: dict, path, rng: Optional[np.random.Generator] = None) -> None:
    atomic_write(path, checkpoint_bytes(model, cfg, rng))


def parse_checkpoint(raw: bytes) -> Checkpoint:
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise FormatError("not an AUBR checkpoint (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (this build reads {VERSION})")
    (hlen,) = struct.unpack_from("<Q", raw, 8)
    pos = 16
    if pos + hlen > len(raw):
        raise FormatError("truncated checkpoint header")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}") from None
    pos += hlen
    arrays = {}
    for name, shape in header["blocks"]:
        nbytes = 8 * int(np.prod(shape))
        if pos + nbytes > len(raw):
            raise FormatError(f"truncated checkpoint in block {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=nbytes // 8, offset=pos).reshape(shape).astype(np.float64)
        pos += nbytes
    gates = []
    for count in header["num_gates"]:
        if pos + count > len(raw):
            raise FormatError("truncated checkpoint in gate section")
        gates.append(np.frombuffer(raw, dtype=np.uint8, count=count, offset=pos).astype(np.float64))
        pos += count
    if pos != len(raw):
        raise FormatError(f"{len(raw) - pos} trailing bytes after checkpoint payload")
    mcfg = ModelConfig(**header["model_config"])
    layers = []
    for i, g in enumerate(gates):
        layers.append(EncoderLayer(**{p: arrays[f"layers.{i}.{p}"] for p in LAYER_PARAMS}, gates=g))
    model = EncoderModel(
        config=mcfg,
        embed=arrays["embed"],
        positional=arrays["positional"],
        layers=layers,
        classifier=arrays["classifier"],
        classifier_bias=arrays["classifier_bias"],
    )
    rng_state = header.get("rng_state")
    return Checkpoint(model, header["config"], None if rng_state is None else _restore_rng_state(rng_state), version)


def load_checkpoint(path) -> Checkpoint:
    return parse_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# reports


def report_json(report) -> str:
    return json.dumps(report.as_dict(), sort_keys=True, indent=2) + "\n"


def metrics_csv(log: MetricsLog) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["epoch", "phase", "accuracy", "loss"])
    for epoch, phase, acc, loss in log.rows:
        w.writerow([epoch, phase, repr(float(acc)), repr(float(loss))])
    return buf.getvalue()


def emit_report(report, path, log: Optional[MetricsLog] = None) -> None:
    """Write the report JSON to ``path`` and, if given, metrics to ``<stem>.metrics.csv``."""
    path = Path(path)
    atomic_write(path, report_json(report).encode("utf-8"))
    if log is not None:
        atomic_write(path.with_suffix(".metrics.csv"), metrics_csv(log).encode("utf-8"))


def load_report(path) -> dict:
    return json.loads(Path(path).read_text())


def comparison_table(reports: Sequence[dict]) -> str:
    """Policy / # of heads pruned / dev accuracy / dev MCC, with an Original row."""
    rows = [("Original", "-", reports[0]["pre"]["acc"], reports[0]["pre"]["mcc"])]
    for r in reports:
        rows.append((r["method"], str(r["total_pruned"]), r["post"]["acc"], r["post"]["mcc"]))
    width = max(len(r[0]) for r in rows)
    lines = [f"{'Policy':<{width}}  {'# of heads pruned':>17}  {'dev acc':>8}  {'dev mcc':>8}"]
    lines.append("-" * len(lines[0]))
    for name, pruned, acc, mcc in rows:
        lines.append(f"{name:<{width}}  {pruned:>17}  {100 * acc:8.2f}  {100 * mcc:8.2f}")
    return "\n".join(lines)
