"""Binary checkpoint format.

Layout: magic, u16 format version, u32 header length, JSON header, little-endian float32
tensor payload, SHA-256 of everything before it.
"""

from __future__ import annotations

import hashlib
import json
import logging
import struct
from pathlib import Path

import numpy as np

from unlearning_lab.exceptions import (
    CheckpointChecksumError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    MissingArtifactError,
)
from unlearning_lab.schemas import ModelConfig
from unlearning_lab.services.lm.transformer import LoRAAdapters, TransformerLM

logger = logging.getLogger(__name__)

MAGIC = b"ULABCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")
_DIGEST_SIZE = 32


def _tensor_directory(tensors: dict[str, np.ndarray], start: int) -> tuple[list[dict], int]:
    entries = []
    offset = start
    for name in sorted(tensors):
        value = tensors[name]
        entries.append({"name": name, "shape": list(value.shape), "offset": offset})
        offset += int(value.size)
    return entries, offset


def encode_checkpoint(model: TransformerLM) -> bytes:
    base_entries, end = _tensor_directory(model.params, 0)
    adapter_meta = None
    adapter_entries: list[dict] = []
    if model.adapters is not None:
        adapter_entries, end = _tensor_directory(model.adapters.tensors, end)
        adapter_meta = {
            "rank": model.adapters.rank,
            "alpha": model.adapters.alpha,
            "dropout": model.adapters.dropout,
            "targets": list(model.adapters.targets),
            "enabled": model.adapters_enabled,
        }
    header = {
        "config": model.config.model_dump(),
        "tensors": base_entries,
        "adapter_tensors": adapter_entries,
        "adapters": adapter_meta,
        "count": end,
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = [model.params[e["name"]] for e in base_entries]
    if model.adapters is not None:
        payload += [model.adapters.tensors[e["name"]] for e in adapter_entries]
    body = b"".join(
        [
            _PREFIX.pack(MAGIC, FORMAT_VERSION, len(header_bytes)),
            header_bytes,
            *(np.ascontiguousarray(t, dtype="<f4").tobytes() for t in payload),
        ]
    )
    return body + hashlib.sha256(body).digest()


def save_checkpoint(model: TransformerLM, path: Path) -> str:
    """Write the checkpoint and return its SHA-256 hex digest."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = encode_checkpoint(model)
    path.write_bytes(data)
    logger.info("saved checkpoint %s (%d bytes)", path, len(data))
    return hashlib.sha256(data).hexdigest()


def decode_checkpoint(data: bytes) -> TransformerLM:
    if len(data) < _PREFIX.size + _DIGEST_SIZE:
        raise CheckpointTruncatedError("checkpoint is shorter than its fixed prefix")
    magic, version, header_length = _PREFIX.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointVersionError("file is not a lab checkpoint (bad magic bytes)")
    header_end = _PREFIX.size + header_length
    if header_end + _DIGEST_SIZE > len(data):
        raise CheckpointTruncatedError("checkpoint header extends past the end of the file")
    try:
        header = json.loads(data[_PREFIX.size : header_end])
        expected = header_end + 4 * int(header["count"]) + _DIGEST_SIZE
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointChecksumError("checkpoint header is corrupted") from exc
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    if hashlib.sha256(body).digest() != digest:
        if len(data) < expected:
            raise CheckpointTruncatedError(
                f"checkpoint holds {len(data)} bytes, header declares {expected}"
            )
        raise CheckpointChecksumError("checkpoint checksum mismatch")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {version}, this build reads {FORMAT_VERSION}"
        )
    if len(data) != expected:
        raise CheckpointTruncatedError(
            f"checkpoint holds {len(data)} bytes, header declares {expected}"
        )

    values = np.frombuffer(data, dtype="<f4", count=int(header["count"]), offset=header_end)

    def _read(entries: list[dict]) -> dict[str, np.ndarray]:
        tensors = {}
        for entry in entries:
            count = int(np.prod(entry["shape"], dtype=np.int64))
            chunk = values[entry["offset"] : entry["offset"] + count]
            tensors[entry["name"]] = chunk.reshape(entry["shape"]).astype(np.float32)
        return tensors

    model = TransformerLM(ModelConfig.model_validate(header["config"]), _read(header["tensors"]))
    meta = header["adapters"]
    if meta is not None:
        model.adapters = LoRAAdapters(
            rank=meta["rank"],
            alpha=meta["alpha"],
            dropout=meta["dropout"],
            targets=tuple(meta["targets"]),
            tensors=_read(header["adapter_tensors"]),
        )
        model.adapters_enabled = meta["enabled"]
    return model


def load_checkpoint(path: Path, *, merge: bool = False) -> TransformerLM:
    if not path.exists():
        raise MissingArtifactError(f"checkpoint does not exist: {path}")
    model = decode_checkpoint(path.read_bytes())
    if merge and model.adapters is not None:
        model.merge_adapters()
    return model
