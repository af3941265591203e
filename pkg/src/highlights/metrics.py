"""Summarization metrics: ROUGE-n, ROUGE-L, METEOR, and embedding BERTScore.

All scores are kept in [0, 1]; report rendering multiplies by 100 to match
the usual table convention.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class PRF:
    recall: float
    precision: float
    f1: float

    @staticmethod
    def from_pr(precision: float, recall: float) -> "PRF":
        denom = precision + recall
        f1 = 2 * precision * recall / denom if denom > 0 else 0.0
        return PRF(recall=recall, precision=precision, f1=f1)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> PRF:
    """Clipped n-gram overlap."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngrams(candidate, n)
    ref = _ngrams(reference, n)
    matched = sum(min(c, ref[g]) for g, c in cand.items())
    n_cand = sum(cand.values())
    n_ref = sum(ref.values())
    precision = matched / n_cand if n_cand else 0.0
    recall = matched / n_ref if n_ref else 0.0
    return PRF.from_pr(precision, recall)


def _lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[-1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> PRF:
    """Longest-common-subsequence overlap over the flat token sequences."""
    lcs = _lcs_length(candidate, reference)
    precision = lcs / len(candidate) if candidate else 0.0
    recall = lcs / len(reference) if reference else 0.0
    return PRF.from_pr(precision, recall)


EXHAUSTIVE_CHUNK_LIMIT = 12


def _min_chunks_exhaustive(candidate: Sequence[str], reference: Sequence[str],
                           total_matches: int) -> int:
    """Fewest chunks over all maximum-cardinality unigram alignments."""
    ref_positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        ref_positions.setdefault(tok, []).append(j)

    n_cand = len(candidate)
    # max matches achievable from candidate position i onward, per remaining
    # availability, is bounded by count of matchable tokens; use a loose bound
    suffix_matchable = [0] * (n_cand + 1)
    for i in range(n_cand - 1, -1, -1):
        suffix_matchable[i] = suffix_matchable[i + 1] + (
            1 if candidate[i] in ref_positions else 0)

    best = [total_matches + 1]
    used = [False] * len(reference)

    def dfs(i: int, matched: int, chunks: int, prev_ref: int) -> None:
        if chunks >= best[0]:
            return
        if matched + suffix_matchable[i] < total_matches:
            return
        if i == n_cand:
            if matched == total_matches:
                best[0] = min(best[0], chunks)
            return
        tok = candidate[i]
        for j in ref_positions.get(tok, ()):
            if used[j]:
                continue
            used[j] = True
            extends = prev_ref == j - 1
            dfs(i + 1, matched + 1, chunks + (0 if extends else 1), j)
            used[j] = False
        dfs(i + 1, matched, chunks, -2)  # leave this position unmatched

    dfs(0, 0, 0, -2)
    return best[0]


def _chunks_greedy(candidate: Sequence[str], reference: Sequence[str]) -> int:
    ref_positions: dict[str, list[int]] = {}
    for j, tok in enumerate(reference):
        ref_positions.setdefault(tok, []).append(j)
    ref_counts = Counter(reference)
    budget = {t: min(c, ref_counts[t])
              for t, c in Counter(candidate).items() if t in ref_counts}
    used: set[int] = set()
    chunks = 0
    prev_ref = -2
    for tok in candidate:
        if budget.get(tok, 0) <= 0:
            prev_ref = -2
            continue
        options = [j for j in ref_positions[tok] if j not in used]
        if not options:
            prev_ref = -2
            continue
        j = prev_ref + 1 if prev_ref + 1 in options else options[0]
        if j != prev_ref + 1:
            chunks += 1
        used.add(j)
        budget[tok] -= 1
        prev_ref = j
    return chunks


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Exact-unigram METEOR: recall-weighted harmonic mean with a cubed
    fragmentation penalty over the fewest-chunks alignment."""
    cand_counts = Counter(candidate)
    ref_counts = Counter(reference)
    matched = sum(min(c, ref_counts[t]) for t, c in cand_counts.items())
    if matched == 0:
        return 0.0
    precision = matched / len(candidate)
    recall = matched / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    if matched <= EXHAUSTIVE_CHUNK_LIMIT:
        chunks = _min_chunks_exhaustive(candidate, reference, matched)
    else:
        chunks = _chunks_greedy(candidate, reference)
    penalty = 0.5 * (chunks / matched) ** 3
    return f_mean * (1.0 - penalty)


def bertscore(candidate_vectors, reference_vectors,
              paper_normalization: bool = False) -> PRF:
    """Greedy max-cosine matching between token embedding matrices.

    Rows are unit-normalized internally. With paper_normalization=True the
    sums over reference and candidate rows are divided by the *other* side's
    length (the literal published form); default is the standard convention.
    """
    cand = np.asarray(candidate_vectors, dtype=np.float64)
    ref = np.asarray(reference_vectors, dtype=np.float64)
    if cand.ndim != 2 or ref.ndim != 2 or cand.shape[0] == 0 or ref.shape[0] == 0:
        raise ValueError("embedding matrices must be non-empty and 2-D")
    if cand.shape[1] != ref.shape[1]:
        raise ValueError(f"dimension mismatch: candidate {cand.shape[1]} vs "
                         f"reference {ref.shape[1]}")
    for name, mat in (("candidate", cand), ("reference", ref)):
        norms = np.linalg.norm(mat, axis=1)
        if np.any(norms == 0):
            raise ValueError(f"{name} matrix contains a zero row; cosine "
                             "similarity undefined")
    cand = cand / np.linalg.norm(cand, axis=1, keepdims=True)
    ref = ref / np.linalg.norm(ref, axis=1, keepdims=True)
    sim = ref @ cand.T  # [n_ref, n_cand]
    ref_max = sim.max(axis=1)   # best candidate for each reference row
    cand_max = sim.max(axis=0)  # best reference for each candidate row
    if paper_normalization:
        recall = float(ref_max.sum() / cand.shape[0])
        precision = float(cand_max.sum() / ref.shape[0])
    else:
        recall = float(ref_max.mean())
        precision = float(cand_max.mean())
    return PRF.from_pr(precision, recall)


@dataclass
class MetricReport:
    rouge1: PRF
    rouge2: PRF
    rougeL: PRF
    meteor: float
    bertscore: Optional[PRF]
    n_examples: int

    def as_dict(self) -> dict:
        out = {
            "n_examples": self.n_examples,
            "rouge1": vars(self.rouge1),
            "rouge2": vars(self.rouge2),
            "rougeL": vars(self.rougeL),
            "meteor": self.meteor,
        }
        if self.bertscore is not None:
            out["bertscore"] = vars(self.bertscore)
        return out


def _mean_prf(values: list[PRF]) -> PRF:
    n = len(values)
    return PRF(
        recall=sum(v.recall for v in values) / n,
        precision=sum(v.precision for v in values) / n,
        f1=sum(v.f1 for v in values) / n,
    )


def evaluate_corpus(pairs: Sequence[tuple[Sequence[str], Sequence[str]]],
                    eval_provider=None) -> MetricReport:
    """Arithmetic-mean metrics over (candidate, reference) token pairs.

    eval_provider supplies token embeddings for BERTScore; when omitted the
    embedding metric is skipped. Empty candidates score zero overlap.
    """
    if not pairs:
        raise ValueError("no evaluation pairs")
    r1, r2, rl, bs = [], [], [], []
    meteors = []
    for cand, ref in pairs:
        r1.append(rouge_n(cand, ref, 1))
        r2.append(rouge_n(cand, ref, 2))
        rl.append(rouge_l(cand, ref))
        meteors.append(meteor(cand, ref))
        if eval_provider is not None:
            if cand and ref:
                cvec = eval_provider.embed_tokens(list(cand)).numpy()
                rvec = eval_provider.embed_tokens(list(ref)).numpy()
                bs.append(bertscore(cvec, rvec))
            else:
                bs.append(PRF(0.0, 0.0, 0.0))
    return MetricReport(
        rouge1=_mean_prf(r1),
        rouge2=_mean_prf(r2),
        rougeL=_mean_prf(rl),
        meteor=sum(meteors) / len(meteors),
        bertscore=_mean_prf(bs) if bs else None,
        n_examples=len(pairs),
    )


def format_report(report: MetricReport, label: str = "") -> str:
    """One table row, values x100 with two decimals."""
    cells = [
        f"{report.rouge1.f1 * 100:.2f}",
        f"{report.rouge2.f1 * 100:.2f}",
        f"{report.rougeL.f1 * 100:.2f}",
        f"{report.meteor * 100:.2f}",
        f"{report.bertscore.f1 * 100:.2f}" if report.bertscore else "-",
    ]
    header = f"{'Label':<20}{'ROUGE-1':>10}{'ROUGE-2':>10}{'ROUGE-L':>10}" \
             f"{'METEOR':>10}{'BERTScore':>11}"
    row = f"{label or 'all':<20}" + "".join(f"{c:>10}" for c in cells[:4]) \
        + f"{cells[4]:>11}"
    return header + "\n" + row
