"""Beam-search decoding over the extended vocabulary."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

from .corpus import START, UNK, ExampleEncoding, decode_ext_ids
from .model import PointerGeneratorNetwork, make_batch

NEG_INF = float("-inf")


@dataclass
class _Hypothesis:
    tokens: list[int]            # emitted extended ids (STOP excluded)
    log_prob: float
    state: tuple[torch.Tensor, torch.Tensor]
    coverage: torch.Tensor
    finished: bool = False

    def score(self) -> float:
        return self.log_prob / max(len(self.tokens), 1)


def decode_beam(net: PointerGeneratorNetwork, encoding: ExampleEncoding,
                beam_size: Optional[int] = None,
                max_len: Optional[int] = None,
                p_gen_override: Optional[float] = None) -> list[str]:
    """Decode one example; returns token strings (no STOP, length <= max_len)."""
    cfg = net.config
    beam_size = beam_size or cfg.beam_size
    max_len = max_len or cfg.max_decode_len
    vocab = net.vocab

    with torch.no_grad():
        batch = make_batch([encoding], vocab, net.provider, dtype=net.dtype_)
        enc_states, state0 = net.encode(batch.enc_emb, batch.enc_mask)
        enc_feat = net.attn_enc(enc_states)
        L = enc_states.shape[1]
        dtype = enc_states.dtype

        start = _Hypothesis([], 0.0, (state0[0][0], state0[1][0]),
                            torch.zeros(L, dtype=dtype))
        live = [start]
        finished: list[_Hypothesis] = []

        banned = [vocab.pad_id, vocab.start_id]
        for _ in range(max_len):
            if not live:
                break
            n = len(live)
            last = [
                UNK if h.tokens and h.tokens[-1] >= len(vocab)
                else (vocab.token_of(h.tokens[-1]) if h.tokens else START)
                for h in live
            ]
            x_emb = net.provider.embed_tokens(last).to(dtype)
            h_s = torch.stack([h.state[0] for h in live])
            c_s = torch.stack([h.state[1] for h in live])
            cov = torch.stack([h.coverage for h in live])
            attention, _, _, dist, (h_new, c_new) = net.decode_step(
                x_emb, (h_s, c_s),
                enc_states.expand(n, -1, -1), batch.enc_mask.expand(n, -1),
                cov, batch.src_ext_ids.expand(n, -1), batch.max_oov,
                enc_feat.expand(n, -1, -1), p_gen_override)
            log_dist = torch.log(dist.clamp_min(1e-30))
            for j in banned:
                log_dist[:, j] = NEG_INF
            # never emit UNK while any other candidate has nonzero probability
            unk = vocab.unk_id
            has_other = (dist > 0).sum(dim=1) > (dist[:, unk] > 0).long()
            log_dist[has_other, unk] = NEG_INF

            k = min(beam_size, log_dist.shape[1])
            top_lp, top_ids = log_dist.topk(k, dim=1)
            candidates: list[_Hypothesis] = []
            for i, hyp in enumerate(live):
                for lp, tok in zip(top_lp[i].tolist(), top_ids[i].tolist()):
                    if lp == NEG_INF:
                        continue
                    new = _Hypothesis(
                        tokens=hyp.tokens + [tok],
                        log_prob=hyp.log_prob + lp,
                        state=(h_new[i], c_new[i]),
                        coverage=hyp.coverage + attention[i],
                    )
                    candidates.append(new)
            candidates.sort(key=lambda h: h.log_prob, reverse=True)
            live = []
            for hyp in candidates:
                if hyp.tokens[-1] == vocab.stop_id:
                    hyp.tokens = hyp.tokens[:-1]
                    hyp.finished = True
                    finished.append(hyp)
                else:
                    live.append(hyp)
                if len(live) >= beam_size:
                    break
            if len(finished) >= beam_size:
                break
        finished.extend(live)  # length-capped hypotheses compete too

    if not finished:
        return []
    best = max(finished, key=_Hypothesis.score)
    return decode_ext_ids(best.tokens, vocab, encoding.oov_tokens)


def decode_greedy(net: PointerGeneratorNetwork, encoding: ExampleEncoding,
                  max_len: Optional[int] = None) -> list[str]:
    return decode_beam(net, encoding, beam_size=1, max_len=max_len)
