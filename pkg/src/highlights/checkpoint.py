"""Versioned binary checkpoints: config block + named float32 tensors.

Layout (little-endian): magic b"PGCK", version u16, config-JSON length u32 +
UTF-8 JSON, tensor count u32; per tensor: name length u16 + UTF-8 name,
ndim u8, dims u32 each, then float32 data. Tensor names are sorted so a
save -> load -> save round trip is byte-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np
import torch

from .corpus import Vocabulary
from .embedding import LearnedProvider
from .model import ModelConfig, PointerGeneratorNetwork

MAGIC = b"PGCK"
VERSION = 1


class CheckpointError(Exception):
    pass


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    provider_kind: str
    tensors: dict[str, np.ndarray]


def save_checkpoint(path, net: PointerGeneratorNetwork) -> None:
    meta = {
        "config": net.config.as_dict(),
        "provider_kind": net.provider.kind,
        "vocab": net.vocab.tokens,
    }
    blob = json.dumps(meta, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", VERSION, len(blob)))
        fh.write(blob)
        state = {k: v.detach().cpu().numpy().astype("<f4")
                 for k, v in net.state_dict().items()}
        fh.write(struct.pack("<I", len(state)))
        for name in sorted(state):
            arr = state[name]
            raw = name.encode("utf-8")
            fh.write(struct.pack("<HB", len(raw), arr.ndim))
            fh.write(raw)
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    try:
        version, blob_len = struct.unpack_from("<HI", data, 4)
        if version != VERSION:
            raise CheckpointError(f"{path}: unsupported version {version}")
        pos = 10
        meta = json.loads(data[pos:pos + blob_len].decode("utf-8"))
        pos += blob_len
        (count,) = struct.unpack_from("<I", data, pos)
        pos += 4
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            name_len, ndim = struct.unpack_from("<HB", data, pos)
            pos += 3
            name = data[pos:pos + name_len].decode("utf-8")
            pos += name_len
            shape = struct.unpack_from(f"<{ndim}I", data, pos)
            pos += 4 * ndim
            n = int(np.prod(shape)) if ndim else 1
            end = pos + 4 * n
            if end > len(data):
                raise CheckpointError(f"{path}: truncated tensor {name!r}")
            tensors[name] = np.frombuffer(data[pos:end], dtype="<f4").reshape(shape).copy()
            pos = end
    except (struct.error, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CheckpointError(f"{path}: corrupt checkpoint: {exc}") from exc
    try:
        config = ModelConfig(**meta["config"])
        vocab = Vocabulary(meta["vocab"])
        provider_kind = meta["provider_kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"{path}: invalid checkpoint metadata: {exc}") from exc
    return Checkpoint(config=config, vocab=vocab,
                      provider_kind=provider_kind, tensors=tensors)


def restore_network(path, provider=None,
                    dtype: torch.dtype = torch.float32) -> PointerGeneratorNetwork:
    """Rebuild a network from a checkpoint.

    For the learned provider kind a fresh table is built and overwritten by
    the stored weights; cache-backed providers must be passed in (the cache
    file is not embedded in the checkpoint).
    """
    ckpt = load_checkpoint(path)
    if provider is None:
        if ckpt.provider_kind != "learned":
            raise CheckpointError(
                f"checkpoint uses provider {ckpt.provider_kind!r}; pass the "
                "matching provider to restore_network")
        provider = LearnedProvider(ckpt.vocab, dim=ckpt.config.emb_dim,
                                   dtype=dtype)
    if provider.dim != ckpt.config.emb_dim:
        raise CheckpointError(
            f"provider dim {provider.dim} != checkpoint emb_dim "
            f"{ckpt.config.emb_dim}")
    net = PointerGeneratorNetwork(ckpt.config, provider, ckpt.vocab, dtype=dtype)
    state = net.state_dict()
    if set(state) != set(ckpt.tensors):
        missing = set(state) ^ set(ckpt.tensors)
        raise CheckpointError(f"parameter name mismatch: {sorted(missing)}")
    for name, arr in ckpt.tensors.items():
        if tuple(state[name].shape) != arr.shape:
            raise CheckpointError(
                f"shape mismatch for {name!r}: checkpoint {arr.shape}, "
                f"model {tuple(state[name].shape)}")
    net.load_state_dict({k: torch.as_tensor(v, dtype=dtype)
                         for k, v in ckpt.tensors.items()})
    return net
