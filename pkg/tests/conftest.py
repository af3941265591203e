"""Shared fixtures: micro models, finite-difference gradient checks, and
independent brute-force metric oracles."""

import itertools
import random
import zlib
from collections import Counter

import torch

from highlights.corpus import SPECIALS, Vocabulary, encode_example
from highlights.embedding import LearnedProvider
from highlights.model import ModelConfig, PointerGeneratorNetwork, make_batch

MICRO = dict(vocab_size=20, hidden_size=8, emb_dim=6)
MICRO_SRC_LEN = 5
MICRO_TGT_LEN = 4


def micro_vocab(size=20):
    return Vocabulary(list(SPECIALS) + [f"w{i}" for i in range(size - len(SPECIALS))])


def micro_net(seed=0, dtype=torch.float64, **overrides):
    cfg = ModelConfig(**{**MICRO, **overrides})
    vocab = micro_vocab(cfg.vocab_size)
    torch.manual_seed(seed)
    provider = LearnedProvider(vocab, dim=cfg.emb_dim, seed=seed, dtype=dtype)
    net = PointerGeneratorNetwork(cfg, provider, vocab, dtype=dtype)
    return net, vocab, provider


def micro_encodings(vocab, seed=0, n=1, src_len=MICRO_SRC_LEN,
                    tgt_len=MICRO_TGT_LEN, oov_rate=0.3):
    """Random short (source, target) encodings; targets favor copyable tokens."""
    rng = random.Random(seed)
    words = [t for t in vocab.tokens if t not in SPECIALS]
    encodings = []
    for i in range(n):
        source = [
            f"oov{rng.randrange(3)}" if rng.random() < oov_rate
            else rng.choice(words)
            for _ in range(src_len)
        ]
        target = [rng.choice(source) if rng.random() < 0.5 else rng.choice(words)
                  for _ in range(tgt_len - 1)]
        encodings.append(encode_example(source, target, vocab, doc_id=f"r{i}"))
    return encodings


def fd_gradient_errors(net, encodings, lam=1.0, eps=1e-5, max_entries=None,
                       sample_seed=0):
    """Per-tensor relative error between analytic and central-FD gradients.

    The batch is rebuilt inside the closure so perturbations of embedding
    provider parameters reach the loss. With max_entries set, tensors larger
    than that are checked on a deterministic coordinate sample (the error is
    then taken over the sampled coordinates).
    """
    def loss_value(fresh_batch):
        batch = (make_batch(encodings, net.vocab, net.provider,
                            dtype=net.dtype_) if fresh_batch else fixed_batch)
        return net.forward_sequence(batch, lam).loss

    net.zero_grad()
    loss_value(True).backward()
    errors = {}
    with torch.no_grad():
        fixed_batch = make_batch(encodings, net.vocab, net.provider,
                                 dtype=net.dtype_)
        for name, param in net.named_parameters():
            # provider parameters reach the loss through batch construction
            fresh = name.startswith("provider.")
            analytic = (param.grad.clone() if param.grad is not None
                        else torch.zeros_like(param)).view(-1)
            flat = param.view(-1)
            n = flat.numel()
            if max_entries is not None and n > max_entries:
                gen = torch.Generator().manual_seed(
                    sample_seed + zlib.crc32(name.encode()))
                coords = torch.randperm(n, generator=gen)[:max_entries].tolist()
            else:
                coords = range(n)
            fd_vals, an_vals = [], []
            for k in coords:
                orig = flat[k].item()
                flat[k] = orig + eps
                up = loss_value(fresh).item()
                flat[k] = orig - eps
                down = loss_value(fresh).item()
                flat[k] = orig
                fd_vals.append((up - down) / (2 * eps))
                an_vals.append(analytic[k].item())
            fd = torch.tensor(fd_vals, dtype=torch.float64)
            an = torch.tensor(an_vals, dtype=torch.float64)
            num = (fd - an).norm().item()
            den = max(fd.norm().item() + an.norm().item(), 1e-12)
            errors[name] = num / den if num > 0 else 0.0
    return errors


# --- independent metric oracles (deliberately naive) ---

def oracle_ngram_prf(cand, ref, n):
    """Clipped n-gram overlap via explicit multiset intersection."""
    cg = [tuple(cand[i:i + n]) for i in range(len(cand) - n + 1)]
    rg = [tuple(ref[i:i + n]) for i in range(len(ref) - n + 1)]
    inter = Counter(cg) & Counter(rg)
    matched = sum(inter.values())
    p = matched / len(cg) if cg else 0.0
    r = matched / len(rg) if rg else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return r, p, f


def oracle_lcs(a, b):
    """LCS length by enumerating all subsequences of the shorter sequence."""
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    best = 0
    for mask in range(1 << len(short)):
        sub = [short[i] for i in range(len(short)) if mask >> i & 1]
        if len(sub) <= best:
            continue
        it = iter(long_)
        if all(tok in it for tok in sub):
            best = len(sub)
    return best


def all_sequences(alphabet, max_len):
    for length in range(max_len + 1):
        yield from itertools.product(alphabet, repeat=length)
