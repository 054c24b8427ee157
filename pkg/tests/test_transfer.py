import numpy as np
import pytest

from zett.embio import (
    ROLE_INPUT,
    ROLE_TIED,
    load_checkpoint,
    load_embeddings,
    save_checkpoint,
    save_embeddings,
)
from zett.errors import DataError, EmptyCorpus, EmptyOverlap, ShapeMismatch
from zett.tokenizer import TokenizerSpec, UnigramModel, Vocabulary
from zett.transfer import (
    embedding_compatibility,
    p_overlap,
    sparsemax,
    task_arithmetic,
    train_aux_embeddings,
    transfer_focus,
    transfer_fvt,
    transfer_lexical,
    vocab_overlap,
    reconstruct_ppmi,
)


def byte_level_unigram(extra_tokens=(), extra_scores=()):
    tokens = [bytes([b]) for b in range(256)] + [bytes(t) for t in extra_tokens]
    scores = [-12.0] * 256 + list(extra_scores)
    m = UnigramModel(Vocabulary(tokens), scores)
    return TokenizerSpec("unigram", m, byte_level=True)


class TestSparsemax:
    def test_simplex_property(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            z = rng.normal(size=rng.integers(1, 12)) * rng.choice([0.1, 1, 10])
            p = sparsemax(z)
            assert np.all(p >= 0)
            assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_sparse_on_separated_inputs(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            z = rng.normal(size=8)
            z[3] = z.max() + 1.0 + rng.random()
            p = sparsemax(z)
            assert np.any(p == 0.0)
            assert p[3] > 0

    def test_uniform_on_equal_scores(self):
        assert np.allclose(sparsemax(np.zeros(4)), 0.25)


class TestLexical:
    def test_identical_vocab_is_copy(self, rng):
        v = Vocabulary([b"a", b"b", b"c"])
        emb = rng.normal(size=(3, 8))
        out = transfer_lexical(emb, v, v, rng)
        assert np.array_equal(out, emb)

    def test_disjoint_vocab_random_stats(self):
        rng = np.random.default_rng(0)
        va = Vocabulary([bytes([i]) for i in range(200)])
        vb = Vocabulary([bytes([200 + i]) for i in range(50)])
        emb = rng.normal(3.0, 0.5, size=(200, 16))
        out = transfer_lexical(emb, va, vb, np.random.default_rng(1))
        # empirical mean within 3 sigma of the source mean
        se = 0.5 / np.sqrt(out.size)
        assert abs(out.mean() - emb.mean()) < 3 * (out.std() / np.sqrt(out.size) + se)

    def test_single_overlap_row_copied(self, rng):
        va = Vocabulary([b"x", b"y"])
        vb = Vocabulary([b"z", b"y"])
        emb = rng.normal(size=(2, 4))
        out = transfer_lexical(emb, va, vb, np.random.default_rng(2))
        assert np.array_equal(out[1], emb[1])

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeMismatch):
            transfer_lexical(np.ones((3, 4)), Vocabulary([b"a"]), Vocabulary([b"a"]), rng)


class TestFvt:
    def test_self_token_copies(self, rng):
        tok_a = byte_level_unigram([b"hi"], [-1.0])
        emb = rng.normal(size=(257, 8))
        out = transfer_fvt(emb, tok_a, Vocabulary([b"hi"]))
        assert np.array_equal(out[0], emb[256])

    def test_definitional_mean(self):
        tok_a = byte_level_unigram()
        emb = np.zeros((256, 2))
        emb[ord("a")] = [1.0, 0.0]
        emb[ord("b")] = [0.0, 1.0]
        out = transfer_fvt(emb, tok_a, Vocabulary([b"ab"]))
        assert np.allclose(out[0], [0.5, 0.5])

    def test_against_loop_oracle(self):
        rng = np.random.default_rng(3)
        extra = [b"th", b"he", b"the", b" t"]
        tok_a = byte_level_unigram(extra, [-1.0, -1.1, -0.9, -1.2])
        emb = rng.normal(size=(260, 16))
        cand = {bytes(rng.choice(list(b"the "), size=rng.integers(1, 7)).tolist())
                for _ in range(40)} | {b"qq"}
        vb = Vocabulary(sorted(cand))
        out = transfer_fvt(emb, tok_a, vb)
        from zett.transfer import decompose_token
        for i, t in enumerate(vb.tokens):
            ids = decompose_token(t, tok_a)
            acc = np.zeros(16)
            for j in ids:
                acc += emb[j]
            assert np.abs(out[i] - acc / len(ids)).max() < 1e-12


class TestFocus:
    def test_subset_vocab_is_pure_copy(self, rng):
        tok_a = byte_level_unigram([b"aa", b"bb"], [-1.0, -1.0])
        emb = rng.normal(size=(258, 4))
        vb = Vocabulary([b"aa", b"a"])
        aux = {t: rng.normal(size=3) for t in vb.tokens}
        out = transfer_focus(emb, tok_a, vb, aux)
        assert np.array_equal(out[0], emb[256])
        assert np.array_equal(out[1], emb[ord("a")])

    def test_dominant_neighbor_takes_all_mass(self, rng):
        tok_a = byte_level_unigram([b"xx"], [-1.0])
        emb = rng.normal(size=(257, 4))
        vb = Vocabulary([b"xx", b"a", b"zz"])  # zz is new
        aux = {
            b"zz": np.array([1.0, 0.0]),
            b"xx": np.array([1.0, 0.0]),   # cosine 1 with zz
            b"a": np.array([-1.0, 0.0]),   # cosine -1
        }
        out = transfer_focus(emb, tok_a, vb, aux)
        assert np.allclose(out[2], emb[256])

    def test_overlap_rows_exact(self, rng):
        tok_a = byte_level_unigram([b"aa"], [-1.0])
        emb = rng.normal(size=(257, 4))
        vb = Vocabulary([b"aa", b"ab", b"a"])
        aux = {t: rng.normal(size=5) for t in list(vb.tokens) + [b"aa"]}
        out = transfer_focus(emb, tok_a, vb, aux)
        assert np.abs(out[0] - emb[256]).max() == 0.0
        assert np.abs(out[2] - emb[ord("a")]).max() == 0.0

    def test_empty_overlap_raises(self, rng):
        tok_a = byte_level_unigram()
        emb = rng.normal(size=(256, 4))
        vb = Vocabulary([b"never-seen-token-xyz"])
        va_small = Vocabulary([b"completely", b"different"])
        m = UnigramModel(va_small, [-1.0, -1.0])
        with pytest.raises(EmptyOverlap):
            transfer_focus(np.ones((2, 4)), TokenizerSpec("unigram", m), vb, {})


class TestAuxEmbeddings:
    def spec(self):
        tokens = [b"a", b"b", b"c", b" "]
        m = UnigramModel(Vocabulary(tokens), [-1.0, -1.0, -1.0, -1.0])
        return TokenizerSpec("unigram", m)

    def test_cooccurring_tokens_more_similar(self):
        corpus = ["ab ab ab ab ab", "c c c c"]
        aux = train_aux_embeddings(corpus, self.spec(), dim=4)
        cos = lambda x, y: float(x @ y / max(np.linalg.norm(x) * np.linalg.norm(y), 1e-12))
        assert cos(aux[b"a"], aux[b"b"]) > cos(aux[b"a"], aux[b"c"])

    def test_full_rank_reconstruction(self):
        corpus = ["ab c ba", "ca bc ab"]
        ppmi, recon = reconstruct_ppmi(corpus, self.spec())
        assert np.abs(ppmi - recon).max() <= 1e-8

    def test_deterministic(self):
        corpus = ["ab c", "b ac"]
        a1 = train_aux_embeddings(corpus, self.spec(), dim=3)
        a2 = train_aux_embeddings(corpus, self.spec(), dim=3)
        for t in a1:
            assert np.array_equal(a1[t], a2[t])

    def test_empty_corpus(self):
        with pytest.raises(EmptyCorpus):
            train_aux_embeddings([], self.spec(), dim=2)


class TestTaskArithmetic:
    def test_lambda_zero_is_target_base(self, rng):
        base, ft, tgt = (rng.normal(size=(3, 3)) for _ in range(3))
        assert np.array_equal(task_arithmetic(base, ft, tgt, 0.0), tgt)

    def test_lambda_one_recovers_ft(self, rng):
        base = rng.normal(size=(4,))
        ft = rng.normal(size=(4,))
        out = task_arithmetic(base, ft, base, 1.0)
        assert np.array_equal(out, ft)

    def test_affine_in_lambda(self, rng):
        base, ft, tgt = (rng.normal(size=(2, 5)) for _ in range(3))
        outs = {lam: task_arithmetic(base, ft, tgt, lam) for lam in (0.0, 0.3, 0.5, 0.7)}
        # affinity: out(0.5) interpolates out(0.3)/out(0.7) exactly
        mid = 0.5 * (outs[0.3] + outs[0.7])
        assert np.allclose(outs[0.5], mid, atol=1e-12)

    def test_dict_form_and_shape_mismatch(self, rng):
        d = {"w": rng.normal(size=(2, 2)), "b": rng.normal(size=(2,))}
        out = task_arithmetic(d, d, d, 0.7)
        assert set(out) == {"w", "b"}
        with pytest.raises(ShapeMismatch):
            task_arithmetic(np.ones(3), np.ones(4), np.ones(3), 0.5)


class TestCompatibility:
    def test_self_is_one(self, rng):
        e = rng.normal(size=(10, 6))
        assert embedding_compatibility(e, e) == pytest.approx((1.0, 1.0))

    def test_negated_is_minus_one(self, rng):
        e = rng.normal(size=(10, 6))
        rc, mc = embedding_compatibility(e, -e)
        assert rc == pytest.approx(-1.0)
        assert mc == pytest.approx(-1.0)

    def test_random_matrices_near_zero(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(500, 256))
        b = rng.normal(size=(500, 256))
        rc, mc = embedding_compatibility(a, b)
        assert abs(rc) < 0.1


class TestOverlapMetrics:
    def spec(self, tokens, scores=None):
        m = UnigramModel(Vocabulary(tokens), scores or [-1.0] * len(tokens))
        return TokenizerSpec("unigram", m)

    def test_identical(self):
        t = self.spec([b"a", b"b", b" "])
        assert vocab_overlap(t.vocab, t.vocab) == 1.0
        assert p_overlap(t, t, ["ab ba"]) == 1.0

    def test_disjoint(self):
        a = self.spec([b"a", b"."])
        b = self.spec([b"b", b" "])
        assert vocab_overlap(a.vocab, b.vocab) == 0.0
        assert p_overlap(a, b, ["bb b"]) == 0.0

    def test_unused_extra_token(self):
        a = self.spec([b"a", b" "])
        b = self.spec([b"a", b" ", b"zz"])
        assert vocab_overlap(a.vocab, b.vocab) < 1.0
        assert p_overlap(a, b, ["aa a aa"]) == 1.0

    def test_empty_corpus(self):
        t = self.spec([b"a"])
        with pytest.raises(EmptyCorpus):
            p_overlap(t, t, [])


class TestBinaryFormats:
    def test_embedding_round_trip(self, tmp_path, rng):
        m = rng.normal(size=(7, 5)).astype(np.float32).astype(np.float64)
        p = tmp_path / "e.bin"
        save_embeddings(p, m, ROLE_INPUT)
        back, role = load_embeddings(p)
        assert role == ROLE_INPUT
        assert np.array_equal(back, m)

    def test_embedding_header_layout(self, tmp_path):
        p = tmp_path / "e.bin"
        save_embeddings(p, np.zeros((2, 3)), ROLE_TIED)
        raw = p.read_bytes()
        assert raw[:8] == b"ZETTEMB1"
        assert raw[8:12] == (2).to_bytes(4, "little")
        assert raw[12:16] == (3).to_bytes(4, "little")
        assert raw[16] == 2
        assert len(raw) == 17 + 4 * 6

    def test_checkpoint_round_trip(self, tmp_path, rng):
        params = {
            "w": rng.normal(size=(3, 4)).astype(np.float32).astype(np.float64),
            "b": rng.normal(size=(4,)).astype(np.float32).astype(np.float64),
        }
        p = tmp_path / "c.ckpt"
        save_checkpoint(p, params)
        back = load_checkpoint(p)
        assert set(back) == {"w", "b"}
        assert back["b"].shape == (4,)
        assert np.array_equal(back["w"], params["w"])
        assert np.array_equal(back["b"], params["b"])

    def test_save_load_idempotent(self, tmp_path, rng):
        params = {"w": rng.normal(size=(2, 2))}  # not f32-representable
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        save_checkpoint(p1, params)
        once = load_checkpoint(p1)
        save_checkpoint(p2, once)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.bin"
        p.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
        with pytest.raises(DataError):
            load_embeddings(p)
        with pytest.raises(DataError):
            load_checkpoint(p)
