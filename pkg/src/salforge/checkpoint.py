"""Versioned checkpoint container: magic, format version, JSON config, then
the torch state dict. The JSON block keeps configs inspectable without
deserializing any tensors."""
from __future__ import annotations

import io as _stdio
import json
import struct
from pathlib import Path

from .errors import CheckpointError

MAGIC = b"SFCK"
FORMAT_VERSION = 1


def save_checkpoint(path, kind: str, config: dict, state_dict) -> Path:
    import torch

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = json.dumps({"kind": kind, "config": config}).encode()
    payload = _stdio.BytesIO()
    torch.save(state_dict, payload)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack(">II", FORMAT_VERSION, len(header)))
        fh.write(header)
        fh.write(payload.getvalue())
    return path


def load_checkpoint(path, expected_kind: str | None = None) -> tuple[str, dict, dict]:
    import torch

    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path} is not a recognized checkpoint")
    version, header_len = struct.unpack(">II", raw[4:12])
    if version > FORMAT_VERSION:
        raise CheckpointError(
            f"{path} has format version {version}; this build reads up to {FORMAT_VERSION}"
        )
    try:
        header = json.loads(raw[12 : 12 + header_len])
        state = torch.load(_stdio.BytesIO(raw[12 + header_len :]), weights_only=True)
    except (ValueError, RuntimeError, EOFError) as exc:
        raise CheckpointError(f"{path} is corrupt: {exc}") from exc
    kind = header.get("kind")
    if expected_kind is not None and kind != expected_kind:
        raise CheckpointError(f"{path} holds a {kind!r} checkpoint, expected {expected_kind!r}")
    return kind, header.get("config", {}), state
