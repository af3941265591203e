"""Dataset ingestion, text normalization, vocabulary and example encoding.

A dataset is a UTF-8 file with one JSON object per line:
{"id": str, "abstract": str, "introduction": str|null,
 "conclusion": str|null, "highlights": str, "subject": str|null}
Unknown fields are ignored.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

PAD = "<pad>"
UNK = "<unk>"
START = "<s>"
STOP = "</s>"
SPECIALS = (PAD, UNK, START, STOP)

MAX_TARGET_TOKENS = 100


class CorpusError(Exception):
    pass


class MissingSectionError(CorpusError):
    def __init__(self, doc_id: str, section: str):
        super().__init__(f"document {doc_id!r} has no {section!r} section")
        self.doc_id = doc_id
        self.section = section


@dataclass(frozen=True)
class Document:
    id: str
    abstract: str
    highlights: str
    introduction: Optional[str] = None
    conclusion: Optional[str] = None
    subject: Optional[str] = None

    def __post_init__(self):
        if not self.abstract.strip():
            raise CorpusError(f"document {self.id!r}: empty abstract")
        if not self.highlights.strip():
            raise CorpusError(f"document {self.id!r}: empty highlights")


class InputType(Enum):
    ABSTRACT = "abstract"
    CONCLUSION = "conclusion"
    INTRODUCTION = "introduction"
    ABSTRACT_CONCLUSION = "abstract+conclusion"
    INTRODUCTION_CONCLUSION = "introduction+conclusion"

    @property
    def cap(self) -> int:
        return _SOURCE_CAPS[self]

    @property
    def sections(self) -> tuple[str, ...]:
        return _SECTIONS[self]

    @classmethod
    def parse(cls, name: str) -> "InputType":
        for it in cls:
            if it.value == name:
                return it
        raise ValueError(f"unknown input type {name!r}; expected one of "
                         f"{[it.value for it in cls]}")


_SOURCE_CAPS = {
    InputType.ABSTRACT: 400,
    InputType.CONCLUSION: 800,
    InputType.INTRODUCTION: 1200,
    InputType.ABSTRACT_CONCLUSION: 1500,
    InputType.INTRODUCTION_CONCLUSION: 1500,
}

_SECTIONS = {
    InputType.ABSTRACT: ("abstract",),
    InputType.CONCLUSION: ("conclusion",),
    InputType.INTRODUCTION: ("introduction",),
    InputType.ABSTRACT_CONCLUSION: ("abstract", "conclusion"),
    InputType.INTRODUCTION_CONCLUSION: ("introduction", "conclusion"),
}

_TAG_RE = re.compile(r"<[^>]*>")
_NONWORD_RE = re.compile(r"[^a-z0-9]+")


def preprocess(raw: str) -> list[str]:
    """Lowercase, strip markup/parentheses/special characters, tokenize.

    Deterministic and total: tokens contain only [a-z0-9], so the function
    is idempotent under space-joining.
    """
    text = _TAG_RE.sub(" ", raw).lower()
    return [t for t in _NONWORD_RE.split(text) if t]


def compose_input(doc: Document, it: InputType) -> list[str]:
    """Concatenate the preprocessed sections for `it` and truncate at the cap."""
    tokens = compose_input_untruncated(doc, it)
    return tokens[: it.cap]


def compose_input_untruncated(doc: Document, it: InputType) -> list[str]:
    tokens: list[str] = []
    for section in it.sections:
        text = getattr(doc, section)
        if text is None or not text.strip():
            raise MissingSectionError(doc.id, section)
        tokens.extend(preprocess(text))
    return tokens


def load_dataset(path, strict: bool = False) -> list[Document]:
    """Load documents from a JSON-lines file.

    Records without a non-empty abstract or highlights are dropped
    (strict=False) or abort the load (strict=True). The number of dropped
    records is reported via the returned list's `.dropped` attribute
    (see DocumentList).
    """
    docs = DocumentList()
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(rec, dict):
                raise CorpusError(f"{path}:{lineno}: record is not an object")
            doc_id = rec.get("id")
            if not isinstance(doc_id, str) or not doc_id:
                raise CorpusError(f"{path}:{lineno}: missing or invalid 'id'")
            if doc_id in seen:
                raise CorpusError(f"{path}:{lineno}: duplicate id {doc_id!r}")
            abstract = rec.get("abstract") or ""
            highlights = rec.get("highlights") or ""
            if not str(abstract).strip() or not str(highlights).strip():
                if strict:
                    raise CorpusError(
                        f"{path}:{lineno}: record {doc_id!r} lacks abstract or highlights")
                docs.dropped += 1
                continue
            seen.add(doc_id)
            docs.append(Document(
                id=doc_id,
                abstract=str(abstract),
                highlights=str(highlights),
                introduction=rec.get("introduction"),
                conclusion=rec.get("conclusion"),
                subject=rec.get("subject"),
            ))
    return docs


class DocumentList(list):
    """A list of Documents that also carries the drop count from loading."""

    def __init__(self, items: Iterable[Document] = ()):
        super().__init__(items)
        self.dropped = 0


@dataclass
class Vocabulary:
    """Frequency-ranked token<->id bijection with reserved specials at ids 0..3."""

    tokens: list[str]
    index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise CorpusError("vocabulary contains duplicate tokens")

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def __contains__(self, token: str) -> bool:
        return token in self.index

    @property
    def pad_id(self) -> int:
        return self.index[PAD]

    @property
    def unk_id(self) -> int:
        return self.index[UNK]

    @property
    def start_id(self) -> int:
        return self.index[START]

    @property
    def stop_id(self) -> int:
        return self.index[STOP]


def build_vocabulary(corpora: Iterable[Sequence[str]], max_size: int = 50000) -> Vocabulary:
    """Keep the `max_size` most frequent tokens, ties broken by first occurrence."""
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    order = 0
    for seq in corpora:
        for tok in seq:
            counts[tok] += 1
            if tok not in first_seen:
                first_seen[tok] = order
                order += 1
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts, key=lambda t: (-counts[t], first_seen[t]))
    return Vocabulary(list(SPECIALS) + ranked[:max_size])


@dataclass
class ExampleEncoding:
    """A (source, target) pair encoded against a vocabulary.

    OOV source tokens get consecutive extended ids len(vocab), len(vocab)+1,
    ... in order of first appearance; target tokens reuse a source OOV's
    extended id when they match, else UNK. target ids carry a trailing STOP.
    """

    doc_id: str
    input_type: InputType
    source_tokens: list[str]
    source_ids: list[int]
    source_ext_ids: list[int]
    target_ids: list[int]
    target_ext_ids: list[int]
    oov_tokens: list[str]

    @property
    def n_oov(self) -> int:
        return len(self.oov_tokens)


def encode_example(source: Sequence[str], target: Sequence[str], vocab: Vocabulary,
                   doc_id: str = "", input_type: InputType = InputType.ABSTRACT,
                   max_target: int = MAX_TARGET_TOKENS) -> ExampleEncoding:
    if not source:
        raise CorpusError("source must be non-empty")
    base = len(vocab)
    oov_tokens: list[str] = []
    oov_index: dict[str, int] = {}
    source_ids: list[int] = []
    source_ext_ids: list[int] = []
    for tok in source:
        if tok in vocab:
            tid = vocab.id_of(tok)
            source_ids.append(tid)
            source_ext_ids.append(tid)
        else:
            source_ids.append(vocab.unk_id)
            if tok not in oov_index:
                oov_index[tok] = base + len(oov_tokens)
                oov_tokens.append(tok)
            source_ext_ids.append(oov_index[tok])
    target = list(target)[:max_target]
    target_ids = [vocab.id_of(t) for t in target] + [vocab.stop_id]
    target_ext_ids = [
        vocab.id_of(t) if t in vocab else oov_index.get(t, vocab.unk_id)
        for t in target
    ] + [vocab.stop_id]
    return ExampleEncoding(
        doc_id=doc_id,
        input_type=input_type,
        source_tokens=list(source),
        source_ids=source_ids,
        source_ext_ids=source_ext_ids,
        target_ids=target_ids,
        target_ext_ids=target_ext_ids,
        oov_tokens=oov_tokens,
    )


def decode_ext_ids(ext_ids: Sequence[int], vocab: Vocabulary,
                   oov_tokens: Sequence[str]) -> list[str]:
    """Map extended-vocabulary ids back to token strings."""
    out = []
    for i in ext_ids:
        if i < len(vocab):
            out.append(vocab.token_of(i))
        else:
            out.append(oov_tokens[i - len(vocab)])
    return out


def encode_document(doc: Document, it: InputType, vocab: Vocabulary) -> ExampleEncoding:
    source = compose_input(doc, it)
    target = preprocess(doc.highlights)
    return encode_example(source, target, vocab, doc_id=doc.id, input_type=it)


def split(corpus: Sequence, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> tuple[list, list, list]:
    """Deterministic shuffled train/val/test split.

    Sizes are floor(n * ratio) with the remainder distributed by largest
    fractional part (ties toward the earlier bucket).
    """
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must sum to 1")
    n = len(corpus)
    if n < 3:
        raise CorpusError("corpus too small to split three ways")
    idx = list(range(n))
    random.Random(seed).shuffle(idx)
    sizes = [int(n * r) for r in ratios]
    fracs = [n * r - s for r, s in zip(ratios, sizes)]
    for _ in range(n - sum(sizes)):
        k = max(range(3), key=lambda j: (fracs[j], -j))
        sizes[k] += 1
        fracs[k] = -1.0
    out = []
    pos = 0
    for s in sizes:
        out.append([corpus[i] for i in idx[pos:pos + s]])
        pos += s
    return out[0], out[1], out[2]


def kfold_partitions(corpus: Sequence, k: int, seed: int = 0) -> list[tuple[list, list]]:
    """k near-equal disjoint folds; pair i = (all but fold i, fold i)."""
    n = len(corpus)
    if k < 2:
        raise ValueError("k must be >= 2")
    if k > n:
        raise CorpusError(f"k={k} exceeds corpus size {n}")
    idx = list(range(n))
    random.Random(seed).shuffle(idx)
    base, extra = divmod(n, k)
    folds = []
    pos = 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(idx[pos:pos + size])
        pos += size
    pairs = []
    for i in range(k):
        test = [corpus[j] for j in folds[i]]
        train = [corpus[j] for f, fold in enumerate(folds) if f != i for j in fold]
        pairs.append((train, test))
    return pairs


@dataclass
class CorpusStats:
    n_docs: int
    avg_source_words: float
    avg_highlight_words: float
    frac_compression_ge_1_5: float

    def as_dict(self) -> dict:
        return {
            "n_docs": self.n_docs,
            "avg_source_words": self.avg_source_words,
            "avg_highlight_words": self.avg_highlight_words,
            "frac_compression_ge_1_5": self.frac_compression_ge_1_5,
        }


def corpus_stats(corpus: Sequence[Document], it: InputType) -> CorpusStats:
    """Token-count statistics over untruncated composed sources and highlights."""
    if not corpus:
        raise CorpusError("corpus is empty")
    src_lens, hl_lens, compressed = [], [], 0
    for doc in corpus:
        src = len(compose_input_untruncated(doc, it))
        hl = len(preprocess(doc.highlights))
        src_lens.append(src)
        hl_lens.append(hl)
        if hl > 0 and src / hl >= 1.5:
            compressed += 1
    n = len(corpus)
    return CorpusStats(
        n_docs=n,
        avg_source_words=sum(src_lens) / n,
        avg_highlight_words=sum(hl_lens) / n,
        frac_compression_ge_1_5=compressed / n,
    )
