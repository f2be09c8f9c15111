"""Binary tensor checkpoints.

Layout (little-endian): magic ``R2SNN01``; u32 tensor count; then per tensor
u16 name length, UTF-8 name, u8 rank, rank x u32 dims, raw f32 data.
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

MAGIC = b"R2SNN01"


def encode(tensors: Mapping[str, torch.Tensor | np.ndarray]) -> bytes:
    out = [MAGIC, struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        arr = value.detach().cpu().numpy() if isinstance(value, torch.Tensor) else np.asarray(value)
        arr = np.ascontiguousarray(arr, dtype="<f4")
        raw_name = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw_name)))
        out.append(raw_name)
        out.append(struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def decode(blob: bytes) -> dict[str, np.ndarray]:
    if blob[: len(MAGIC)] != MAGIC:
        raise ValueError("not an R2SNN01 checkpoint")
    pos = len(MAGIC)
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    tensors = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<B", blob, pos)
        pos += 1
        dims = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        size = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(dims).copy()
        pos += 4 * size
    if pos != len(blob):
        raise ValueError(f"trailing bytes in checkpoint ({len(blob) - pos})")
    return tensors


def save(path: str | Path, tensors: Mapping[str, torch.Tensor | np.ndarray]) -> None:
    Path(path).write_bytes(encode(tensors))


def load(path: str | Path) -> dict[str, np.ndarray]:
    return decode(Path(path).read_bytes())


def module_tensors(module: torch.nn.Module, prefix: str = "") -> dict[str, torch.Tensor]:
    return {prefix + k: v for k, v in module.state_dict().items()}


def load_module(module: torch.nn.Module, tensors: Mapping[str, np.ndarray], prefix: str = "") -> None:
    state = {k[len(prefix):]: torch.from_numpy(np.array(v)) for k, v in tensors.items() if k.startswith(prefix)}
    missing = set(module.state_dict()) - set(state)
    if missing:
        raise KeyError(f"checkpoint lacks {sorted(missing)} (prefix {prefix!r})")
    module.load_state_dict(state)
