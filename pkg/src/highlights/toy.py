"""Bundled synthetic corpus and cache builders for hermetic runs and tests."""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from typing import Sequence

import numpy as np

from .corpus import Document, InputType, compose_input
from .embedding import CacheRecord

SUBJECTS = ("computing", "biology", "chemistry", "physics")

_ADJECTIVES = ("robust", "scalable", "adaptive", "efficient", "hybrid",
               "sparse", "modular", "greedy", "unified", "fast")
_NOUNS = ("clustering", "routing", "caching", "scheduling", "ranking",
          "encoding", "sampling", "hashing", "pruning", "matching")
_TASKS = ("image retrieval", "network routing", "load balancing",
          "text search", "anomaly detection", "graph mining",
          "sensor fusion", "query planning", "stream processing",
          "protein folding")
_DATA = ("benchmark", "synthetic", "clinical", "sensor", "archival")


def _pick(pool, i):
    return pool[i % len(pool)]


def toy_documents(n: int = 40) -> list[Document]:
    """Deterministic templated documents with all sections populated."""
    docs = []
    for i in range(n):
        adj = _pick(_ADJECTIVES, i)
        noun = _pick(_NOUNS, i * 3 + 1)
        task = _pick(_TASKS, i * 7 + 2)
        data = _pick(_DATA, i * 5 + 3)
        abstract = (
            f"This paper presents a {adj} {noun} method for {task}. "
            f"The {adj} {noun} method reduces cost on {data} data. "
            f"Experiments show clear gains over strong baselines number {i}."
        )
        highlights = (
            f"A {adj} {noun} method for {task} is presented. "
            f"It reduces cost on {data} data."
        )
        introduction = (
            f"Prior work on {task} relies on fixed heuristics. "
            f"We revisit {noun} with a {adj} strategy and study {data} data."
        )
        conclusion = (
            f"We presented a {adj} {noun} method for {task} "
            f"and observed consistent gains on {data} data."
        )
        docs.append(Document(
            id=f"toy-{i:03d}",
            abstract=abstract,
            highlights=highlights,
            introduction=introduction,
            conclusion=conclusion,
            subject=_pick(SUBJECTS, i),
        ))
    return docs


def overfit_documents() -> list[Document]:
    """Eight short documents with near-copyable targets, for memorization runs."""
    docs = []
    for i in range(8):
        adj = _pick(_ADJECTIVES, i)
        noun = _pick(_NOUNS, i)
        task = _pick(_TASKS, i)
        abstract = (f"The {adj} {noun} method improves {task} "
                    f"with low cost in trial {i}.")
        highlights = f"{adj} {noun} improves {task}."
        docs.append(Document(
            id=f"mini-{i}",
            abstract=abstract,
            highlights=highlights,
            subject=_pick(SUBJECTS, i),
        ))
    return docs


def write_dataset(path, docs: Sequence[Document]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps({
                "id": doc.id,
                "abstract": doc.abstract,
                "introduction": doc.introduction,
                "conclusion": doc.conclusion,
                "highlights": doc.highlights,
                "subject": doc.subject,
            }) + "\n")


def toy_dataset_path():
    """Path to the toy corpus shipped inside the package."""
    return resources.files("highlights").joinpath("data/toy.jsonl")


def synthetic_cache_records(docs: Sequence[Document],
                            input_types: Sequence[InputType],
                            dim: int = 16, seed: int = 0) -> list[CacheRecord]:
    """Deterministic pseudo-contextual vectors for each (doc, input type).

    A token's vector is a stable per-identity draw plus small sequence-
    dependent noise, so identical tokens in different contexts differ
    slightly, as real contextual embeddings would.
    """
    records = []
    for doc in docs:
        for it in input_types:
            tokens = compose_input(doc, it)
            key = f"{seed}:{doc.id}:{it.value}".encode()
            rng = np.random.default_rng(
                int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(),
                               "little"))
            rows = [rng.standard_normal(dim)]  # sentence-level slot
            for tok in tokens:
                tok_key = f"{seed}:tok:{tok}".encode()
                tok_rng = np.random.default_rng(
                    int.from_bytes(hashlib.blake2b(tok_key, digest_size=8).digest(),
                                   "little"))
                rows.append(tok_rng.standard_normal(dim)
                            + 0.05 * rng.standard_normal(dim))
            records.append(CacheRecord(
                doc_id=doc.id, input_type=it,
                matrix=np.asarray(rows, dtype=np.float32)))
    return records
