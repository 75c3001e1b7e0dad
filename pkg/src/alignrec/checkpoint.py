"""Binary checkpoint serialization.

Layout (little-endian): magic ``CGMK``, u32 version, u8 phase, u32 config
length + UTF-8 config text, u32 tensor count, then per tensor a u16 name
length + UTF-8 name, u8 rank, u32 per dimension, f64 values; finally 32
bytes of RNG state. Writes are atomic (temp file + rename) and reloads are
bit-exact.
"""

from __future__ import annotations

import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterSet
from .config import EncoderConfig, TrainConfig, config_text, parse_config_text
from .errors import CheckpointFormatError, CheckpointVersionError

MAGIC = b"CGMK"
VERSION = 1
PHASES = {"pretrained": 0, "finetuned": 1}
PHASE_NAMES = {v: k for k, v in PHASES.items()}


@dataclass
class Checkpoint:
    train_cfg: TrainConfig
    enc_cfg: EncoderConfig
    params: ParameterSet
    rng_state: bytes
    phase: str


def save_checkpoint(
    path: str,
    params: ParameterSet,
    train_cfg: TrainConfig,
    enc_cfg: EncoderConfig,
    rng_state: bytes,
    phase: str,
) -> None:
    if phase not in PHASES:
        raise CheckpointFormatError(f"unknown phase {phase!r}")
    if len(rng_state) != 32:
        raise CheckpointFormatError(f"rng state must be 32 bytes, got {len(rng_state)}")
    cfg_bytes = config_text(train_cfg, enc_cfg).encode("utf-8")
    chunks = [
        MAGIC,
        struct.pack("<I", VERSION),
        struct.pack("<B", PHASES[phase]),
        struct.pack("<I", len(cfg_bytes)),
        cfg_bytes,
        struct.pack("<I", len(params.entries)),
    ]
    for name in params.names():
        tensor = params[name]
        name_bytes = name.encode("utf-8")
        chunks.append(struct.pack("<H", len(name_bytes)))
        chunks.append(name_bytes)
        chunks.append(struct.pack("<B", tensor.data.ndim))
        for dim in tensor.shape:
            chunks.append(struct.pack("<I", dim))
        chunks.append(tensor.data.astype("<f8").tobytes())
    chunks.append(rng_state)
    blob = b"".join(chunks)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointFormatError("checkpoint truncated")
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path: str) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    reader = _Reader(blob)
    if reader.take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic, not a checkpoint")
    version = reader.u32()
    if version != VERSION:
        raise CheckpointVersionError(
            f"{path}: version {version} unsupported (expected {VERSION})"
        )
    phase_code = reader.u8()
    if phase_code not in PHASE_NAMES:
        raise CheckpointFormatError(f"{path}: unknown phase code {phase_code}")
    cfg_len = reader.u32()
    cfg_text = reader.take(cfg_len).decode("utf-8")
    train_cfg, enc_cfg = parse_config_text(cfg_text, source=f"{path}#config")
    count = reader.u32()
    params = ParameterSet(train_cfg.seed)
    for _ in range(count):
        name = reader.take(reader.u16()).decode("utf-8")
        rank = reader.u8()
        dims = tuple(reader.u32() for _ in range(rank))
        size = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(reader.take(8 * size), dtype="<f8").reshape(dims)
        params.add(name, values)
    rng_state = reader.take(32)
    if reader.pos != len(blob):
        raise CheckpointFormatError(f"{path}: {len(blob) - reader.pos} trailing bytes")
    return Checkpoint(
        train_cfg=train_cfg,
        enc_cfg=enc_cfg,
        params=params,
        rng_state=rng_state,
        phase=PHASE_NAMES[phase_code],
    )
