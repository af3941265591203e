"""Pointer-generator network with additive attention and coverage.

Per decoder step t:
  attention   a_t = softmax_i v^T tanh(W_e enc_i + W_d s_t + w_c c_{t,i} + b)
  context     h*_t = sum_i a_{t,i} enc_i
  gen gate    p_gen = sigmoid(W_h*^T h*_t + W_s^T s_t + W_x^T x_t + b_ptr)
  output      P(w) = p_gen P_vocab(w) + (1 - p_gen) sum_{i: w_i = w} a_{t,i}
  coverage    c_{t+1} = c_t + a_t,  c_0 = 0
  loss        -log P(y*_t) + lambda * sum_i min(a_{t,i}, c_{t,i})
Sequence loss is the mean of step losses over the target length.

The coverage feature is always part of the attention computation; training
phases differ only in the loss weight lambda.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import torch
from torch import nn
from torch.nn.utils.rnn import pack_padded_sequence, pad_packed_sequence

from .corpus import ExampleEncoding, Vocabulary
from .embedding import check_provider_dim

PROB_EPS = 1e-12  # floor inside log; triggering it is flagged in diagnostics


@dataclass
class ModelConfig:
    vocab_size: int
    hidden_size: int = 256
    emb_dim: int = 128
    batch_size: int = 16
    max_grad_norm: float = 1.2
    lambda_coverage: float = 1.0
    beam_size: int = 4
    max_decode_len: int = 100
    phase1_iters: int = 20000
    phase2_iters: int = 1000

    def __post_init__(self):
        for name in ("vocab_size", "hidden_size", "emb_dim", "batch_size",
                     "beam_size", "max_decode_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_grad_norm <= 0:
            raise ValueError("max_grad_norm must be positive")
        if self.lambda_coverage < 0:
            raise ValueError("lambda_coverage must be >= 0")

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class Batch:
    """Padded tensors for a list of encodings."""

    encodings: list[ExampleEncoding]
    enc_emb: torch.Tensor       # [B, L, E]
    enc_mask: torch.Tensor      # [B, L] bool
    src_ext_ids: torch.Tensor   # [B, L] long
    dec_emb: torch.Tensor       # [B, T, E] teacher-forcing inputs (START first)
    dec_tokens: list[list[str]]
    target_ext: torch.Tensor    # [B, T] long
    dec_mask: torch.Tensor      # [B, T] bool
    max_oov: int


def make_batch(encodings: Sequence[ExampleEncoding], vocab: Vocabulary,
               provider, dtype: torch.dtype = torch.float32) -> Batch:
    from .corpus import PAD, START

    B = len(encodings)
    L = max(len(e.source_ids) for e in encodings)
    T = max(len(e.target_ids) for e in encodings)
    max_oov = max((e.n_oov for e in encodings), default=0)
    dim = provider.dim

    enc_emb = torch.zeros(B, L, dim, dtype=dtype)
    enc_mask = torch.zeros(B, L, dtype=torch.bool)
    src_ext = torch.zeros(B, L, dtype=torch.long)
    dec_emb = torch.zeros(B, T, dim, dtype=dtype)
    target_ext = torch.zeros(B, T, dtype=torch.long)
    dec_mask = torch.zeros(B, T, dtype=torch.bool)
    dec_tokens: list[list[str]] = []

    for b, enc in enumerate(encodings):
        n = len(enc.source_ids)
        key = (enc.doc_id, enc.input_type)
        emb = provider.embed_sequence(enc.source_tokens, key=key)
        enc_emb[b, :n] = emb.to(dtype)
        enc_mask[b, :n] = True
        src_ext[b, :n] = torch.tensor(enc.source_ext_ids, dtype=torch.long)

        tokens = [START] + [vocab.token_of(i) for i in enc.target_ids[:-1]]
        t_len = len(enc.target_ids)
        pad_tokens = tokens + [PAD] * (T - t_len)
        dec_tokens.append(pad_tokens)
        dec_emb[b, :t_len] = provider.embed_tokens(tokens).to(dtype)
        target_ext[b, :t_len] = torch.tensor(enc.target_ext_ids, dtype=torch.long)
        dec_mask[b, :t_len] = True

    return Batch(list(encodings), enc_emb, enc_mask, src_ext, dec_emb,
                 dec_tokens, target_ext, dec_mask, max_oov)


def update_coverage(coverage: torch.Tensor, attention: torch.Tensor) -> torch.Tensor:
    """c_{t+1} = c_t + a_t (elementwise, same-order summation)."""
    return coverage + attention


def extended_distribution(p_vocab: torch.Tensor, attention: torch.Tensor,
                          p_gen: torch.Tensor, src_ext_ids: torch.Tensor,
                          max_oov: int) -> torch.Tensor:
    """Mix generation and copy distributions over vocab + per-example OOVs.

    p_vocab [B, V], attention [B, L], p_gen [B, 1], src_ext_ids [B, L].
    Returns [B, V + max_oov].
    """
    B, V = p_vocab.shape
    out = torch.zeros(B, V + max_oov, dtype=p_vocab.dtype, device=p_vocab.device)
    out[:, :V] = p_gen * p_vocab
    return out.scatter_add(1, src_ext_ids, (1.0 - p_gen) * attention)


def step_loss(extended_dist: torch.Tensor, target_ext_id: int,
              attention: torch.Tensor, coverage: torch.Tensor,
              lam: float) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """Single-example step loss: (nll, coverage loss, total)."""
    p = extended_dist[..., target_ext_id]
    nll = -torch.log(torch.clamp(p, min=PROB_EPS))
    cov = torch.minimum(attention, coverage).sum(-1)
    return nll, cov, nll + lam * cov


@dataclass
class StepOutput:
    attention: torch.Tensor      # [B, L]
    coverage: torch.Tensor       # [B, L] (value before this step's update)
    context: torch.Tensor        # [B, 2H]
    p_gen: torch.Tensor          # [B, 1]
    extended_dist: torch.Tensor  # [B, V + max_oov]
    nll: torch.Tensor            # [B]
    cov_loss: torch.Tensor       # [B]


@dataclass
class SequenceResult:
    steps: list[StepOutput]
    loss: torch.Tensor           # scalar, mean over examples of per-step means
    nll: torch.Tensor            # scalar diagnostic
    cov_loss: torch.Tensor       # scalar diagnostic
    prob_floor_hits: int = 0


class PointerGeneratorNetwork(nn.Module):
    def __init__(self, config: ModelConfig, provider, vocab: Vocabulary,
                 dtype: torch.dtype = torch.float32):
        super().__init__()
        check_provider_dim(provider, config.emb_dim)
        if len(vocab) != config.vocab_size:
            raise ValueError(f"vocab size {len(vocab)} != config.vocab_size "
                             f"{config.vocab_size}")
        self.config = config
        self.provider = provider
        self.vocab = vocab
        self.dtype_ = dtype
        H, E, V = config.hidden_size, config.emb_dim, config.vocab_size
        A = 2 * H  # attention feature width

        self.encoder = nn.LSTM(E, H, batch_first=True, bidirectional=True)
        self.reduce_h = nn.Linear(2 * H, H)
        self.reduce_c = nn.Linear(2 * H, H)
        self.decoder_cell = nn.LSTMCell(E, H)

        self.attn_enc = nn.Linear(2 * H, A, bias=False)
        self.attn_dec = nn.Linear(2 * H, A, bias=True)
        self.attn_cov = nn.Linear(1, A, bias=False)
        self.attn_v = nn.Linear(A, 1, bias=False)

        self.out_hidden = nn.Linear(3 * H, H)
        self.out_vocab = nn.Linear(H, V)

        self.ptr_context = nn.Linear(2 * H, 1, bias=False)
        self.ptr_state = nn.Linear(2 * H, 1, bias=False)
        self.ptr_input = nn.Linear(E, 1, bias=False)
        self.ptr_bias = nn.Parameter(torch.zeros(1))

        self.to(dtype)

    # --- encoder ---

    def encode(self, enc_emb: torch.Tensor, enc_mask: torch.Tensor
               ) -> tuple[torch.Tensor, tuple[torch.Tensor, torch.Tensor]]:
        if not torch.isfinite(enc_emb).all():
            raise ValueError("non-finite encoder input")
        lengths = enc_mask.sum(1).cpu()
        if int(lengths.min()) == enc_emb.shape[1]:
            # no padding: packing is a no-op, skip its overhead
            enc_states, (h_n, c_n) = self.encoder(enc_emb)
        else:
            packed = pack_padded_sequence(enc_emb, lengths, batch_first=True,
                                          enforce_sorted=False)
            out, (h_n, c_n) = self.encoder(packed)
            enc_states, _ = pad_packed_sequence(out, batch_first=True,
                                                total_length=enc_emb.shape[1])
        h_cat = torch.cat([h_n[0], h_n[1]], dim=1)
        c_cat = torch.cat([c_n[0], c_n[1]], dim=1)
        h0 = torch.relu(self.reduce_h(h_cat))
        c0 = torch.relu(self.reduce_c(c_cat))
        return enc_states, (h0, c0)

    # --- per-step pieces ---

    def attend(self, s_cat: torch.Tensor, enc_states: torch.Tensor,
               enc_mask: torch.Tensor, coverage: torch.Tensor,
               enc_feat: Optional[torch.Tensor] = None
               ) -> tuple[torch.Tensor, torch.Tensor]:
        if enc_feat is None:
            enc_feat = self.attn_enc(enc_states)
        feat = enc_feat + self.attn_dec(s_cat).unsqueeze(1) \
            + self.attn_cov(coverage.unsqueeze(-1))
        energy = self.attn_v(torch.tanh(feat)).squeeze(-1)
        energy = energy.masked_fill(~enc_mask, float("-inf"))
        attention = torch.softmax(energy, dim=1)
        context = torch.bmm(attention.unsqueeze(1), enc_states).squeeze(1)
        return attention, context

    def generation_probability(self, context: torch.Tensor, s_cat: torch.Tensor,
                               x_emb: torch.Tensor) -> torch.Tensor:
        logit = (self.ptr_context(context) + self.ptr_state(s_cat)
                 + self.ptr_input(x_emb) + self.ptr_bias)
        return torch.sigmoid(logit)

    def vocab_distribution(self, dec_h: torch.Tensor,
                           context: torch.Tensor) -> torch.Tensor:
        hidden = self.out_hidden(torch.cat([dec_h, context], dim=1))
        return torch.softmax(self.out_vocab(hidden), dim=1)

    def decode_step(self, x_emb: torch.Tensor,
                    state: tuple[torch.Tensor, torch.Tensor],
                    enc_states: torch.Tensor, enc_mask: torch.Tensor,
                    coverage: torch.Tensor, src_ext_ids: torch.Tensor,
                    max_oov: int, enc_feat: Optional[torch.Tensor] = None,
                    p_gen_override: Optional[float] = None):
        h, c = self.decoder_cell(x_emb, state)
        s_cat = torch.cat([h, c], dim=1)
        attention, context = self.attend(s_cat, enc_states, enc_mask,
                                         coverage, enc_feat)
        p_vocab = self.vocab_distribution(h, context)
        if p_gen_override is None:
            p_gen = self.generation_probability(context, s_cat, x_emb)
        else:
            p_gen = torch.full((x_emb.shape[0], 1), p_gen_override,
                               dtype=x_emb.dtype)
        dist = extended_distribution(p_vocab, attention, p_gen,
                                     src_ext_ids, max_oov)
        return attention, context, p_gen, dist, (h, c)

    # --- full teacher-forced / free-running pass ---

    def forward_sequence(self, batch: Batch, lambda_cov: float,
                         teacher_forcing: bool = True,
                         p_gen_override: Optional[float] = None
                         ) -> SequenceResult:
        from .corpus import UNK

        B, T = batch.target_ext.shape
        enc_states, state = self.encode(batch.enc_emb, batch.enc_mask)
        enc_feat = self.attn_enc(enc_states)
        coverage = torch.zeros_like(batch.src_ext_ids, dtype=enc_states.dtype)

        steps: list[StepOutput] = []
        nll_acc = torch.zeros(B, dtype=enc_states.dtype)
        cov_acc = torch.zeros(B, dtype=enc_states.dtype)
        floor_hits = 0
        x_emb = batch.dec_emb[:, 0]
        vocab_size = self.config.vocab_size
        for t in range(T):
            attention, context, p_gen, dist, state = self.decode_step(
                x_emb, state, enc_states, batch.enc_mask, coverage,
                batch.src_ext_ids, batch.max_oov, enc_feat, p_gen_override)
            p_target = dist.gather(1, batch.target_ext[:, t:t + 1]).squeeze(1)
            floor_hits += int((p_target < PROB_EPS).sum())
            nll_t = -torch.log(torch.clamp(p_target, min=PROB_EPS))
            cov_t = torch.minimum(attention, coverage).sum(1)
            mask_t = batch.dec_mask[:, t].to(nll_t.dtype)
            nll_acc = nll_acc + nll_t * mask_t
            cov_acc = cov_acc + cov_t * mask_t
            steps.append(StepOutput(attention, coverage, context, p_gen,
                                    dist, nll_t, cov_t))
            coverage = update_coverage(coverage, attention)
            if t + 1 < T:
                if teacher_forcing:
                    x_emb = batch.dec_emb[:, t + 1]
                else:
                    # OOV decoder inputs are fed as UNK embeddings
                    prev = dist.argmax(dim=1)
                    tokens = [
                        UNK if int(i) >= vocab_size else self.vocab.token_of(int(i))
                        for i in prev
                    ]
                    x_emb = self.provider.embed_tokens(tokens).to(enc_states.dtype)

        n_steps = batch.dec_mask.sum(1).to(nll_acc.dtype)
        per_ex_nll = nll_acc / n_steps
        per_ex_cov = cov_acc / n_steps
        loss = (per_ex_nll + lambda_cov * per_ex_cov).mean()
        return SequenceResult(steps=steps, loss=loss, nll=per_ex_nll.mean(),
                              cov_loss=per_ex_cov.mean(),
                              prob_floor_hits=floor_hits)
