"""Binary checkpoints: "CATN1" header, named float64 tensors, embedded config.

Layout, all integers little-endian uint32:

    b"CATN1\n"
    tensor_count
    per tensor: name_len, name (UTF-8), rank, extents..., values (f8, LE, C order)
    meta_len, meta JSON (UTF-8)

The meta document carries the run config plus the vocabularies (and merge
rules when subword segmentation was used), so translation and embedding
need nothing beyond the checkpoint file.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .config import RunConfig
from .data import BpeModel, Vocabulary
from .errors import DataError
from .model import build_model
from .tensor import Tensor

MAGIC = b"CATN1\n"


def save_tensors(path: str | Path, named: Sequence[tuple[str, Tensor]],
                 meta: dict[str, Any]) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", len(named)))
        for name, tensor in named:
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(tensor.data, dtype="<f8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes(order="C"))
        blob = json.dumps(meta, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)


def load_tensors(path: str | Path) -> tuple[list[tuple[str, np.ndarray]], dict[str, Any]]:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"checkpoint not found: {p}")
    buf = p.read_bytes()
    if not buf.startswith(MAGIC):
        raise DataError(f"{p} is not a checkpoint (bad header)")
    off = len(MAGIC)

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(buf):
            raise DataError(f"{p}: truncated checkpoint")
        vals = struct.unpack_from(fmt, buf, off)
        off += size
        return vals

    (count,) = take("<I")
    tensors: list[tuple[str, np.ndarray]] = []
    for _ in range(count):
        (name_len,) = take("<I")
        name = buf[off : off + name_len].decode("utf-8")
        off += name_len
        (rank,) = take("<I")
        shape = take(f"<{rank}I") if rank else ()
        n = int(np.prod(shape)) if shape else 1
        end = off + 8 * n
        if end > len(buf):
            raise DataError(f"{p}: truncated tensor {name!r}")
        arr = np.frombuffer(buf[off:end], dtype="<f8").reshape(shape).copy()
        off = end
        tensors.append((name, arr))
    (meta_len,) = take("<I")
    try:
        meta = json.loads(buf[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise DataError(f"{p}: corrupt metadata block: {e}") from e
    return tensors, meta


def save_model(path: str | Path, model, run_config: RunConfig,
               src_vocab: Vocabulary, tgt_vocab: Vocabulary,
               bpe: BpeModel | None = None) -> None:
    meta = {
        "config": run_config.to_dict(),
        "source_vocab": src_vocab.tokens(),
        "target_vocab": tgt_vocab.tokens(),
        "bpe_merges": [list(m) for m in bpe.merges] if bpe is not None else None,
    }
    save_tensors(path, list(model.named_parameters()), meta)


def load_model(path: str | Path):
    """Rebuild (model, run_config, src_vocab, tgt_vocab, bpe) from a file."""
    tensors, meta = load_tensors(path)
    if "config" not in meta:
        raise DataError(f"{path}: checkpoint metadata lacks a config")
    run_config = RunConfig.from_dict(meta["config"])
    src_vocab = Vocabulary(meta.get("source_vocab") or [])
    tgt_vocab = Vocabulary(meta.get("target_vocab") or [])
    merges = meta.get("bpe_merges")
    bpe = BpeModel([tuple(m) for m in merges]) if merges is not None else None
    model = build_model(run_config.model, len(src_vocab), len(tgt_vocab),
                        seed=run_config.seed)
    stored = dict(tensors)
    for name, param in model.named_parameters():
        if name not in stored:
            raise DataError(f"{path}: checkpoint lacks tensor {name!r}")
        arr = stored.pop(name)
        if arr.shape != param.data.shape:
            raise DataError(
                f"{path}: tensor {name!r} has shape {arr.shape}, "
                f"model expects {param.data.shape}")
        param.data = arr
    if stored:
        raise DataError(
            f"{path}: checkpoint holds unknown tensors: {sorted(stored)[:4]}")
    return model, run_config, src_vocab, tgt_vocab, bpe
