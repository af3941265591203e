import numpy as np
import pytest
import torch

from highlights.corpus import InputType
from highlights.embedding import (CacheError, CacheMissError, CacheProvider,
                                  CacheRecord, DimensionMismatchError,
                                  HashProvider, LearnedProvider, MAGIC,
                                  check_provider_dim, read_cache, write_cache)

from conftest import micro_vocab


def record(doc_id="d0", it=InputType.ABSTRACT, n_tokens=3, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return CacheRecord(doc_id, it, rng.standard_normal(
        (n_tokens + 1, dim)).astype(np.float32))


class TestCacheFile:
    def test_roundtrip(self, tmp_path):
        recs = [record("d0"), record("d1", InputType.CONCLUSION, n_tokens=5, seed=1)]
        path = tmp_path / "c.bin"
        write_cache(path, 4, recs)
        cache = read_cache(path)
        assert cache.dim == 4
        assert set(cache.records) == {("d0", InputType.ABSTRACT),
                                      ("d1", InputType.CONCLUSION)}
        got = cache.records[("d0", InputType.ABSTRACT)]
        np.testing.assert_array_equal(got.matrix, recs[0].matrix)

    def test_header_magic(self, tmp_path):
        path = tmp_path / "c.bin"
        write_cache(path, 4, [record()])
        assert path.read_bytes()[:4] == MAGIC

    def test_not_a_cache(self, tmp_path):
        path = tmp_path / "junk.bin"
        path.write_bytes(b"nope" * 10)
        with pytest.raises(CacheError):
            read_cache(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "c.bin"
        write_cache(path, 4, [record()])
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(CacheError, match="truncated"):
            read_cache(path)

    def test_dim_mismatch_on_write(self, tmp_path):
        with pytest.raises(DimensionMismatchError):
            write_cache(tmp_path / "c.bin", 8, [record(dim=4)])

    def test_unicode_doc_id(self, tmp_path):
        path = tmp_path / "c.bin"
        write_cache(path, 4, [record(doc_id="döc-ü")])
        assert ("döc-ü", InputType.ABSTRACT) in read_cache(path).records


class TestLearnedProvider:
    def setup_method(self):
        self.vocab = micro_vocab()

    def test_shape_and_determinism(self):
        a = LearnedProvider(self.vocab, dim=6, seed=3)
        b = LearnedProvider(self.vocab, dim=6, seed=3)
        assert torch.equal(a.table, b.table)
        assert a.embed_tokens(["w0", "w1"]).shape == (2, 6)

    def test_init_range(self):
        p = LearnedProvider(self.vocab, dim=16, seed=0)
        assert p.table.abs().max() <= 0.1

    def test_seed_changes_table(self):
        a = LearnedProvider(self.vocab, dim=6, seed=0)
        b = LearnedProvider(self.vocab, dim=6, seed=1)
        assert not torch.equal(a.table, b.table)

    def test_unknown_token_maps_to_unk_row(self):
        p = LearnedProvider(self.vocab, dim=6)
        unk_row = p.table[self.vocab.unk_id]
        assert torch.equal(p.embed_token("never-seen"), unk_row)

    def test_trainable_flag(self):
        frozen = LearnedProvider(self.vocab, dim=6, trainable=False)
        assert not frozen.table.requires_grad

    def test_gradient_flows(self):
        p = LearnedProvider(self.vocab, dim=6, dtype=torch.float64)
        out = p.embed_tokens(["w0", "w1"]).sum()
        out.backward()
        assert p.table.grad is not None
        assert p.table.grad[self.vocab.id_of("w0")].abs().sum() > 0


class TestCacheProvider:
    def setup_method(self, tmp_path=None):
        self.tokens = ["alpha", "beta", "alpha"]
        self.rec = record("d0", n_tokens=3, dim=4)
        self.key = ("d0", InputType.ABSTRACT)

    def make(self, tmp_path):
        path = tmp_path / "c.bin"
        write_cache(path, 4, [self.rec])
        return CacheProvider(read_cache(path))

    def test_embed_sequence_applies_identity_adapter(self, tmp_path):
        p = self.make(tmp_path)
        out = p.embed_sequence(self.tokens, key=self.key)
        np.testing.assert_allclose(out.detach().numpy(),
                                   self.rec.matrix[1:], rtol=1e-6)

    def test_requires_key(self, tmp_path):
        with pytest.raises(CacheError, match="key"):
            self.make(tmp_path).embed_sequence(self.tokens)

    def test_cache_miss(self, tmp_path):
        with pytest.raises(CacheMissError):
            self.make(tmp_path).embed_sequence(
                self.tokens, key=("other", InputType.ABSTRACT))

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(CacheError, match="token count"):
            self.make(tmp_path).embed_sequence(["just", "two"], key=self.key)

    def test_static_table_is_mean_of_occurrences(self, tmp_path):
        p = self.make(tmp_path)
        p.register_tokens(self.key, self.tokens)
        vecs = self.rec.matrix[1:].astype(np.float64)
        expected = (vecs[0] + vecs[2]) / 2  # "alpha" occurs twice
        np.testing.assert_allclose(
            p.embed_token("alpha").detach().numpy(), expected, rtol=1e-6)
        np.testing.assert_allclose(
            p.embed_token("beta").detach().numpy(), vecs[1], rtol=1e-6)

    def test_unseen_token_gets_zero_slot(self, tmp_path):
        p = self.make(tmp_path)
        p.register_tokens(self.key, self.tokens)
        # identity adapter with zero bias maps the zero UNK slot to zero
        assert p.embed_token("unseen").abs().max() < 1e-12

    def test_register_validates_length(self, tmp_path):
        with pytest.raises(CacheError, match="token count"):
            self.make(tmp_path).register_tokens(self.key, ["a"])

    def test_sentence_vector_slot(self, tmp_path):
        p = self.make(tmp_path)
        np.testing.assert_allclose(p.sentence_vector(self.key).numpy(),
                                   self.rec.matrix[0], rtol=1e-6)

    def test_adapter_is_trainable(self, tmp_path):
        p = self.make(tmp_path)
        assert p.adapter.weight.requires_grad
        out = p.embed_sequence(self.tokens, key=self.key).sum()
        out.backward()
        assert p.adapter.weight.grad is not None


class TestHashProvider:
    def test_deterministic(self):
        a = HashProvider(dim=16).embed_token("science")
        b = HashProvider(dim=16).embed_token("science")
        assert torch.equal(a, b)

    def test_distinct_tokens_differ(self):
        p = HashProvider(dim=16)
        assert not torch.equal(p.embed_token("alpha"), p.embed_token("beta"))

    def test_shapes(self):
        p = HashProvider(dim=8)
        assert p.embed_tokens(["a", "b", "c"]).shape == (3, 8)
        assert p.embed_tokens([]).shape == (0, 8)

    def test_nonzero_rows(self):
        p = HashProvider(dim=8)
        vecs = p.embed_tokens(["a", "b"])
        assert (vecs.norm(dim=1) > 0).all()


class TestCheckProviderDim:
    def test_match(self):
        check_provider_dim(HashProvider(dim=8), 8)

    def test_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            check_provider_dim(HashProvider(dim=8), 16)
