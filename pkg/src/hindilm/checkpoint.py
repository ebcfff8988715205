"""Binary checkpoint format.

Layout (little-endian): magic ``HLLM``, u32 version, a length-prefixed
config block of ``key=value`` UTF-8 lines, a tensor table, one optimizer
presence byte (the optimizer section is a u64 step count plus a second
tensor table of first/second moments), and a trailing CRC32 of everything
before it. A tensor-table entry is u32 name length, name bytes, u32 rank,
rank u64 dims, then raw float32 data.

Writes are atomic: temp file in the target directory, then rename.
"""

from __future__ import annotations

import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .autograd import Tensor
from .errors import DataError
from .model import ModelConfig, TransformerLM

MAGIC = b"HLLM"
VERSION = 1


@dataclass
class OptimState:
    """AdamW first/second moments per parameter plus the shared step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, Tensor]
    step: int
    tokenizer_digest: str
    optim: OptimState | None = None

    def model(self) -> TransformerLM:
        return TransformerLM(self.config, self.params)


def _pack_tensor_table(arrays: dict[str, np.ndarray]) -> bytes:
    parts = [struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        data = np.ascontiguousarray(arr, dtype="<f4")
        name_b = name.encode("utf-8")
        parts.append(struct.pack("<I", len(name_b)))
        parts.append(name_b)
        parts.append(struct.pack("<I", data.ndim))
        parts.append(struct.pack(f"<{data.ndim}Q", *data.shape))
        parts.append(data.tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise DataError("checkpoint truncated")
        out = self.raw[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]


def _unpack_tensor_table(r: _Reader) -> dict[str, np.ndarray]:
    count = r.u32()
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}Q", r.take(8 * rank))
        size = 1
        for d in dims:
            size *= d
        data = np.frombuffer(r.take(4 * size), dtype="<f4").reshape(dims).copy()
        arrays[name] = data
    return arrays


def save_checkpoint(
    path: str | Path,
    model: TransformerLM,
    step: int,
    tokenizer_digest: str,
    optim: OptimState | None = None,
) -> None:
    cfg = model.config
    config_lines = (
        f"vocab_size={cfg.vocab_size}\n"
        f"embed_dim={cfg.embed_dim}\n"
        f"layers={cfg.layers}\n"
        f"heads={cfg.heads}\n"
        f"n_ctx={cfg.n_ctx}\n"
        f"tie_output={int(cfg.tie_output)}\n"
        f"step={step}\n"
        f"tokenizer_digest={tokenizer_digest}\n"
    ).encode("utf-8")

    body = [MAGIC, struct.pack("<I", VERSION)]
    body.append(struct.pack("<I", len(config_lines)))
    body.append(config_lines)
    body.append(_pack_tensor_table({k: v.data for k, v in model.params.items()}))
    if optim is None:
        body.append(b"\x00")
    else:
        body.append(b"\x01")
        body.append(struct.pack("<Q", optim.step))
        moments = {f"m:{k}": v for k, v in optim.m.items()}
        moments.update({f"v:{k}": v for k, v in optim.v.items()})
        body.append(_pack_tensor_table(moments))
    blob = b"".join(body)
    blob += struct.pack("<I", zlib.crc32(blob) & 0xFFFFFFFF)

    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 12:
        raise DataError(f"{path}: checkpoint truncated")
    stored_crc = struct.unpack("<I", raw[-4:])[0]
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise DataError(f"{path}: CRC mismatch, checkpoint is corrupt")
    r = _Reader(raw[:-4])
    if r.take(4) != MAGIC:
        raise DataError(f"{path}: bad magic, not a checkpoint file")
    version = r.u32()
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    config_raw = r.take(r.u32()).decode("utf-8")
    fields: dict[str, str] = {}
    for line in config_raw.splitlines():
        key, _, value = line.partition("=")
        fields[key] = value
    try:
        cfg = ModelConfig(
            vocab_size=int(fields["vocab_size"]),
            embed_dim=int(fields["embed_dim"]),
            layers=int(fields["layers"]),
            heads=int(fields["heads"]),
            n_ctx=int(fields["n_ctx"]),
            tie_output=bool(int(fields.get("tie_output", "1"))),
        )
        step = int(fields["step"])
        digest = fields.get("tokenizer_digest", "")
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad config block: {exc}") from exc

    arrays = _unpack_tensor_table(r)
    params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    optim = None
    presence = r.take(1)
    if presence == b"\x01":
        opt_step = r.u64()
        moments = _unpack_tensor_table(r)
        m = {k[2:]: v for k, v in moments.items() if k.startswith("m:")}
        v = {k[2:]: val for k, val in moments.items() if k.startswith("v:")}
        optim = OptimState(m=m, v=v, step=opt_step)
    elif presence != b"\x00":
        raise DataError(f"{path}: bad optimizer presence byte")
    if r.pos != len(r.raw):
        raise DataError(f"{path}: {len(r.raw) - r.pos} trailing bytes")
    return Checkpoint(config=cfg, params=params, step=step, tokenizer_digest=digest, optim=optim)
