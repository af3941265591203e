"""Two-phase training loop: plain NLL first, then coverage-augmented loss.

The optimizer (Adagrad, lr 0.15, accumulator init 0.1) and its state carry
over from phase 1 into phase 2; only the coverage-loss weight changes.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from typing import Optional, Sequence

import torch

from .corpus import ExampleEncoding, Vocabulary
from .model import ModelConfig, PointerGeneratorNetwork, make_batch

LEARNING_RATE = 0.15
ACCUMULATOR_INIT = 0.1


class TrainingDivergedError(Exception):
    pass


@dataclass
class TrainResult:
    net: PointerGeneratorNetwork
    log: list[dict]
    best_val_loss: Optional[float] = None


class _BatchSampler:
    """Cycles through shuffled epochs deterministically."""

    def __init__(self, n: int, batch_size: int, seed: int):
        self.n = n
        self.batch_size = min(batch_size, n)
        self.rng = random.Random(seed)
        self.order: list[int] = []
        self.pos = 0

    def next_indices(self) -> list[int]:
        out = []
        while len(out) < self.batch_size:
            if self.pos >= len(self.order):
                self.order = list(range(self.n))
                self.rng.shuffle(self.order)
                self.pos = 0
            out.append(self.order[self.pos])
            self.pos += 1
        return out


def evaluate_nll(net: PointerGeneratorNetwork, encodings: Sequence[ExampleEncoding],
                 lambda_cov: float = 0.0, batch_size: int = 16) -> float:
    """Mean teacher-forced loss over a split."""
    total, count = 0.0, 0
    with torch.no_grad():
        for i in range(0, len(encodings), batch_size):
            chunk = encodings[i:i + batch_size]
            batch = make_batch(chunk, net.vocab, net.provider, dtype=net.dtype_)
            res = net.forward_sequence(batch, lambda_cov)
            total += float(res.loss) * len(chunk)
            count += len(chunk)
    return total / max(count, 1)


def train(encodings: Sequence[ExampleEncoding], config: ModelConfig, provider,
          vocab: Vocabulary, seed: int = 0,
          val_encodings: Optional[Sequence[ExampleEncoding]] = None,
          checkpoint_path=None, checkpoint_every: int = 0,
          log_path=None, dtype: torch.dtype = torch.float32) -> TrainResult:
    if not encodings:
        raise ValueError("empty training split")
    torch.manual_seed(seed)
    net = PointerGeneratorNetwork(config, provider, vocab, dtype=dtype)
    optimizer = torch.optim.Adagrad(
        net.parameters(), lr=LEARNING_RATE,
        initial_accumulator_value=ACCUMULATOR_INIT)
    sampler = _BatchSampler(len(encodings), config.batch_size, seed)

    log: list[dict] = []
    best_val = None
    log_fh = open(log_path, "w", encoding="utf-8") if log_path else None
    total_iters = config.phase1_iters + config.phase2_iters
    try:
        for it in range(1, total_iters + 1):
            phase = 1 if it <= config.phase1_iters else 2
            lam = 0.0 if phase == 1 else config.lambda_coverage
            idx = sampler.next_indices()
            batch = make_batch([encodings[i] for i in idx], vocab, provider,
                               dtype=dtype)
            optimizer.zero_grad()
            res = net.forward_sequence(batch, lam)
            if not math.isfinite(float(res.loss.detach())):
                raise TrainingDivergedError(
                    f"non-finite loss at iteration {it} (phase {phase})")
            res.loss.backward()
            grad_norm = float(torch.nn.utils.clip_grad_norm_(
                net.parameters(), config.max_grad_norm))
            optimizer.step()

            entry = {
                "iter": it,
                "phase": phase,
                "loss": float(res.loss.detach()),
                "nll": float(res.nll.detach()),
                "cov_loss": float(res.cov_loss.detach()),
                "grad_norm": grad_norm,
            }
            if res.prob_floor_hits:
                entry["prob_floor_hits"] = res.prob_floor_hits
            log.append(entry)
            if log_fh:
                log_fh.write(json.dumps(entry) + "\n")

            at_cadence = checkpoint_every and (it % checkpoint_every == 0
                                               or it == total_iters)
            if checkpoint_path and at_cadence:
                from .checkpoint import save_checkpoint
                if val_encodings:
                    val = evaluate_nll(net, val_encodings, lam)
                    if best_val is None or val < best_val:
                        best_val = val
                        save_checkpoint(checkpoint_path, net)
                else:
                    save_checkpoint(checkpoint_path, net)
    finally:
        if log_fh:
            log_fh.close()
    return TrainResult(net=net, log=log, best_val_loss=best_val)
