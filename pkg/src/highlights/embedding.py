"""Embedding providers behind a uniform contract, plus the on-disk vector cache.

Two main backends:
  * LearnedProvider -- a trainable lookup table (default dim 128).
  * CacheProvider   -- frozen contextual vectors read from a cache file
    (dim fixed by the cache, typically 768), with a trainable
    identity-initialized affine adapter standing in for fine-tuning.

Cache file layout (little-endian):
  magic b"EMBC", version u16, dim u32, record count u64; then per record:
  id length u16, UTF-8 id, input-type byte, token count u32, and
  (token_count + 1) * dim float32 values row-major. Row 0 is a
  sentence-level vector slot; rows 1.. align 1:1 with the composed tokens.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from .corpus import InputType, Vocabulary

MAGIC = b"EMBC"
VERSION = 1

_INPUT_TYPE_BYTE = {it: i for i, it in enumerate(InputType)}
_BYTE_INPUT_TYPE = {i: it for it, i in _INPUT_TYPE_BYTE.items()}

CacheKey = tuple[str, InputType]


class CacheError(Exception):
    pass


class CacheMissError(CacheError):
    def __init__(self, key: CacheKey):
        super().__init__(f"no cached embeddings for document {key[0]!r} "
                         f"with input type {key[1].value!r}")
        self.key = key


class DimensionMismatchError(CacheError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"embedding dimension mismatch: expected {expected}, got {got}")


@dataclass
class CacheRecord:
    doc_id: str
    input_type: InputType
    matrix: np.ndarray  # (token_count + 1, dim); row 0 = sentence-level slot

    @property
    def token_count(self) -> int:
        return self.matrix.shape[0] - 1

    @property
    def token_vectors(self) -> np.ndarray:
        return self.matrix[1:]


@dataclass
class EmbeddingCache:
    dim: int
    records: dict[CacheKey, CacheRecord]

    @property
    def vector_count(self) -> int:
        return sum(r.matrix.shape[0] for r in self.records.values())


def write_cache(path, dim: int, records: Sequence[CacheRecord]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HIQ", VERSION, dim, len(records)))
        for rec in records:
            if rec.matrix.ndim != 2 or rec.matrix.shape[1] != dim:
                raise DimensionMismatchError(dim, rec.matrix.shape[-1])
            raw = rec.doc_id.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<BI", _INPUT_TYPE_BYTE[rec.input_type],
                                 rec.token_count))
            fh.write(np.ascontiguousarray(rec.matrix, dtype="<f4").tobytes())


def read_cache(path) -> EmbeddingCache:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4 + 14 or data[:4] != MAGIC:
        raise CacheError(f"{path}: not an embedding cache file")
    version, dim, count = struct.unpack_from("<HIQ", data, 4)
    if version != VERSION:
        raise CacheError(f"{path}: unsupported cache version {version}")
    pos = 4 + 14
    records: dict[CacheKey, CacheRecord] = {}
    for _ in range(count):
        try:
            (id_len,) = struct.unpack_from("<H", data, pos)
            pos += 2
            doc_id = data[pos:pos + id_len].decode("utf-8")
            pos += id_len
            it_byte, n_tokens = struct.unpack_from("<BI", data, pos)
            pos += 5
            n_floats = (n_tokens + 1) * dim
            end = pos + 4 * n_floats
            if end > len(data):
                raise CacheError(f"{path}: truncated record for {doc_id!r}")
            matrix = np.frombuffer(data[pos:end], dtype="<f4").reshape(n_tokens + 1, dim)
            pos = end
        except struct.error as exc:
            raise CacheError(f"{path}: corrupt record: {exc}") from exc
        it = _BYTE_INPUT_TYPE.get(it_byte)
        if it is None:
            raise CacheError(f"{path}: unknown input-type byte {it_byte}")
        records[(doc_id, it)] = CacheRecord(doc_id, it, matrix.copy())
    return EmbeddingCache(dim=dim, records=records)


class LearnedProvider(nn.Module):
    """Context-free trainable embedding table over a fixed vocabulary."""

    kind = "learned"

    def __init__(self, vocab: Vocabulary, dim: int = 128, seed: int = 0,
                 trainable: bool = True, dtype: torch.dtype = torch.float32):
        super().__init__()
        self.vocab = vocab
        self.dim = dim
        self.trainable = trainable
        gen = torch.Generator().manual_seed(seed)
        table = (torch.rand(len(vocab), dim, generator=gen, dtype=dtype) - 0.5) * 0.2
        self.table = nn.Parameter(table, requires_grad=trainable)

    def embed_ids(self, ids: torch.Tensor) -> torch.Tensor:
        return self.table[ids]

    def embed_tokens(self, tokens: Sequence[str]) -> torch.Tensor:
        ids = torch.tensor([self.vocab.id_of(t) for t in tokens], dtype=torch.long)
        return self.embed_ids(ids)

    def embed_token(self, token: str) -> torch.Tensor:
        return self.embed_tokens([token])[0]

    def embed_sequence(self, tokens: Sequence[str],
                       key: Optional[CacheKey] = None) -> torch.Tensor:
        return self.embed_tokens(tokens)


class CacheProvider(nn.Module):
    """Frozen cached contextual vectors plus a trainable affine adapter.

    Sequence vectors come from the cache record keyed by (doc id, input
    type). Per-token static vectors (used on the decoder side) are the mean
    of a token's occurrences across the registered sequences; tokens never
    seen in the cache share the UNK slot (a zero vector).
    """

    kind = "contextual-cache"

    def __init__(self, cache: EmbeddingCache, trainable: bool = True,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        self.cache = cache
        self.dim = cache.dim
        self.trainable = trainable
        self._dtype = dtype
        self.adapter = nn.Linear(cache.dim, cache.dim, dtype=dtype)
        with torch.no_grad():
            self.adapter.weight.copy_(torch.eye(cache.dim, dtype=dtype))
            self.adapter.bias.zero_()
        for p in self.adapter.parameters():
            p.requires_grad = trainable
        self._token_sum: dict[str, np.ndarray] = {}
        self._token_n: dict[str, int] = {}
        self._static: dict[str, torch.Tensor] = {}
        self._seq_tokens: dict[CacheKey, tuple[str, ...]] = {}

    def register_tokens(self, key: CacheKey, tokens: Sequence[str]) -> None:
        """Associate a cached record with its token sequence (needed for the
        static per-token table; the cache file stores vectors only)."""
        rec = self.cache.records.get(key)
        if rec is None:
            raise CacheMissError(key)
        if rec.token_count != len(tokens):
            raise CacheError(
                f"record {key[0]!r}/{key[1].value}: stored token count "
                f"{rec.token_count} != sequence length {len(tokens)}")
        if key in self._seq_tokens:
            return
        self._seq_tokens[key] = tuple(tokens)
        vecs = rec.token_vectors.astype(np.float64)
        for tok, vec in zip(tokens, vecs):
            if tok in self._token_sum:
                self._token_sum[tok] += vec
                self._token_n[tok] += 1
            else:
                self._token_sum[tok] = vec.copy()
                self._token_n[tok] = 1
        self._static.clear()

    def _base_token_vector(self, token: str) -> torch.Tensor:
        if token not in self._static:
            if token in self._token_sum:
                mean = self._token_sum[token] / self._token_n[token]
            else:
                mean = np.zeros(self.dim)  # UNK slot
            self._static[token] = torch.as_tensor(mean, dtype=self._dtype)
        return self._static[token]

    def embed_sequence(self, tokens: Sequence[str],
                       key: Optional[CacheKey] = None) -> torch.Tensor:
        if key is None:
            raise CacheError("CacheProvider.embed_sequence requires a (doc id, "
                             "input type) key")
        rec = self.cache.records.get(key)
        if rec is None:
            raise CacheMissError(key)
        if rec.token_count != len(tokens):
            raise CacheError(
                f"record {key[0]!r}/{key[1].value}: stored token count "
                f"{rec.token_count} != sequence length {len(tokens)}")
        base = torch.as_tensor(rec.token_vectors, dtype=self._dtype)
        return self.adapter(base)

    def embed_tokens(self, tokens: Sequence[str]) -> torch.Tensor:
        if tokens:
            base = torch.stack([self._base_token_vector(t) for t in tokens])
        else:
            base = torch.zeros(0, self.dim, dtype=self._dtype)
        return self.adapter(base)

    def embed_token(self, token: str) -> torch.Tensor:
        return self.embed_tokens([token])[0]

    def sentence_vector(self, key: CacheKey) -> torch.Tensor:
        """Stored sentence-level slot (recorded but unused by the model)."""
        rec = self.cache.records.get(key)
        if rec is None:
            raise CacheMissError(key)
        return torch.as_tensor(rec.matrix[0], dtype=self._dtype)


class HashProvider:
    """Deterministic context-free vectors derived from token hashes.

    Not trainable and not meaningful semantically; used as a hermetic
    default for embedding-based evaluation so scoring needs no downloads.
    """

    kind = "hash"
    trainable = False

    def __init__(self, dim: int = 32):
        self.dim = dim

    def embed_token(self, token: str) -> torch.Tensor:
        seed = int.from_bytes(token.encode("utf-8").ljust(8, b"\0")[:8], "little")
        rng = np.random.default_rng(seed)
        vec = rng.standard_normal(self.dim)
        return torch.as_tensor(vec, dtype=torch.float64)

    def embed_tokens(self, tokens: Sequence[str]) -> torch.Tensor:
        if not tokens:
            return torch.zeros(0, self.dim, dtype=torch.float64)
        return torch.stack([self.embed_token(t) for t in tokens])

    def embed_sequence(self, tokens: Sequence[str],
                       key: Optional[CacheKey] = None) -> torch.Tensor:
        return self.embed_tokens(tokens)


def check_provider_dim(provider, expected_dim: int) -> None:
    if provider.dim != expected_dim:
        raise DimensionMismatchError(expected_dim, provider.dim)
