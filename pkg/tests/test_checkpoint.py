import numpy as np
import pytest
import torch

from highlights.checkpoint import (CheckpointError, MAGIC,
                                   load_checkpoint, restore_network,
                                   save_checkpoint)
from highlights.corpus import InputType
from highlights.embedding import CacheProvider, CacheRecord, LearnedProvider, \
    write_cache, read_cache
from highlights.model import ModelConfig, PointerGeneratorNetwork, make_batch

from conftest import micro_encodings, micro_net, micro_vocab


def f32_net(seed=0):
    net, vocab, provider = micro_net(seed=seed, dtype=torch.float32)
    return net, vocab


class TestRoundTrip:
    def test_byte_exact_save_load_save(self, tmp_path):
        net, vocab = f32_net()
        p1, p2 = tmp_path / "a.bin", tmp_path / "b.bin"
        save_checkpoint(p1, net)
        restored = restore_network(p1)
        save_checkpoint(p2, restored)
        assert p1.read_bytes() == p2.read_bytes()

    def test_magic(self, tmp_path):
        net, _ = f32_net()
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        assert path.read_bytes()[:4] == MAGIC

    def test_metadata_preserved(self, tmp_path):
        net, vocab = f32_net()
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        ckpt = load_checkpoint(path)
        assert ckpt.config == net.config
        assert ckpt.vocab.tokens == vocab.tokens
        assert ckpt.provider_kind == "learned"

    def test_restored_forward_identical(self, tmp_path):
        net, vocab = f32_net(seed=2)
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        restored = restore_network(path)
        encs = micro_encodings(vocab, seed=2, n=2)
        with torch.no_grad():
            a = net.forward_sequence(
                make_batch(encs, vocab, net.provider, torch.float32), 1.0)
            b = restored.forward_sequence(
                make_batch(encs, vocab, restored.provider, torch.float32), 1.0)
        assert a.loss.item() == b.loss.item()

    def test_tensor_names_sorted_in_file(self, tmp_path):
        net, _ = f32_net()
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        ckpt = load_checkpoint(path)
        assert list(ckpt.tensors) == sorted(ckpt.tensors)


class TestErrors:
    def test_not_a_checkpoint(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"garbage here")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_truncated(self, tmp_path):
        net, _ = f32_net()
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CheckpointError, match="truncated"):
            load_checkpoint(path)

    def test_corrupt_meta(self, tmp_path):
        net, _ = f32_net()
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        raw = bytearray(path.read_bytes())
        raw[12] ^= 0xFF  # flip a byte inside the JSON block
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_cache_checkpoint_needs_provider(self, tmp_path):
        vocab = micro_vocab()
        rec = CacheRecord("d0", InputType.ABSTRACT,
                          np.zeros((4, 6), dtype=np.float32))
        cache_path = tmp_path / "cache.bin"
        write_cache(cache_path, 6, [rec])
        provider = CacheProvider(read_cache(cache_path))
        cfg = ModelConfig(vocab_size=20, hidden_size=8, emb_dim=6)
        net = PointerGeneratorNetwork(cfg, provider, vocab)
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        with pytest.raises(CheckpointError, match="provider"):
            restore_network(path)
        restored = restore_network(path, provider=provider)
        assert restored.provider is provider

    def test_provider_dim_mismatch(self, tmp_path):
        net, vocab = f32_net()
        path = tmp_path / "c.bin"
        save_checkpoint(path, net)
        wrong = LearnedProvider(vocab, dim=12)
        with pytest.raises(CheckpointError, match="dim"):
            restore_network(path, provider=wrong)
