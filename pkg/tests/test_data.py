import collections
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualchannel import data as D
from dualchannel import numerics as nx
from dualchannel.dcnet import LossWeights
from dualchannel.decomposer import tokenize
from builders import small_model, synthetic_examples


def _corpus(n, n_pos=None, seed=0):
    n_pos = n // 2 if n_pos is None else n_pos
    return D.Corpus([D.Example(f"e{k}", f"text {k}", int(k < n_pos)) for k in range(n)])


class TestCorpus:
    def test_duplicate_ids(self):
        with pytest.raises(D.DataError):
            D.Corpus([D.Example("a", "x", 0), D.Example("a", "y", 1)])

    def test_bad_label(self):
        with pytest.raises(D.DataError):
            D.Corpus([D.Example("a", "x", 2)])


class TestLoadCorpus:
    def test_two_rows(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("1\tyeah right\n0\tnice day\n")
        c = D.load_corpus(p)
        assert [(e.id, e.y_s, e.text) for e in c.examples] == [("1", 1, "yeah right"), ("2", 0, "nice day")]

    def test_row_count_equals_line_count(self, tmp_path):
        rng = np.random.default_rng(0)
        lines = [f"{rng.integers(2)}\tline number {k}" for k in range(137)]
        p = tmp_path / "c.tsv"
        p.write_text("\n".join(lines) + "\n")
        assert len(D.load_corpus(p)) == sum(1 for _ in open(p))

    def test_empty(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("")
        with pytest.raises(D.DataError, match="no examples"):
            D.load_corpus(p)

    def test_missing(self, tmp_path):
        with pytest.raises(D.DataError):
            D.load_corpus(tmp_path / "nope.tsv")

    def test_malformed_line_reported(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("1\tfine\nbroken row\n")
        with pytest.raises(D.DataError, match=":2:"):
            D.load_corpus(p)

    def test_bad_label_value(self, tmp_path):
        p = tmp_path / "c.tsv"
        p.write_text("yes\tfine\n")
        with pytest.raises(D.DataError):
            D.load_corpus(p)

    def test_semeval(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("Tweet index\tLabel\tTweet text\n1\t1\tSweet United Nations video.\n2\t0\tsome text\n")
        c = D.load_corpus(p, "semeval")
        assert c.name == "tweets"
        assert [(e.id, e.y_s) for e in c.examples] == [("1", 1), ("2", 0)]


class TestSplit:
    def test_95_5(self):
        train, valid = D.split_train_valid(_corpus(100), 0.05, 0)
        assert (len(train), len(valid)) == (95, 5)

    def test_deterministic(self):
        a = D.split_train_valid(_corpus(60), 0.1, 4)
        b = D.split_train_valid(_corpus(60), 0.1, 4)
        assert [e.id for e in a[1].examples] == [e.id for e in b[1].examples]

    @settings(max_examples=60, deadline=None)
    @given(st.integers(4, 300), st.floats(0.05, 0.5), st.integers(0, 2**31), st.floats(0.1, 0.9))
    def test_partition(self, n, frac, seed, pos_share):
        c = _corpus(n, max(1, min(n - 1, int(n * pos_share))))
        try:
            train, valid = D.split_train_valid(c, frac, seed)
        except D.DataError:
            return
        tr, va = {e.id for e in train.examples}, {e.id for e in valid.examples}
        assert not tr & va
        assert tr | va == {e.id for e in c.examples}
        assert len(va) == max(1, round(frac * n))

    def test_stratified(self):
        train, valid = D.split_train_valid(_corpus(200, 150), 0.1, 0)
        assert valid.label_counts() == {0: 5, 1: 15}

    def test_too_small(self):
        with pytest.raises(D.DataError):
            D.split_train_valid(_corpus(1, 1), 0.5, 0)

    def test_manifest_round_trip(self, tmp_path):
        train, valid = D.split_train_valid(_corpus(20), 0.25, 1)
        D.write_manifest(tmp_path / "m.json", 1, {"train": train, "valid": valid})
        m = D.read_manifest(tmp_path / "m.json")
        assert m["seed"] == 1 and m["valid"] == [e.id for e in valid.examples]


class TestVocabulary:
    def test_reserved(self):
        v = D.Vocabulary.build([["a", "b", "a"]])
        assert v.itos[:2] == [D.PAD_TOKEN, D.UNK_TOKEN]
        assert v.index("a") == 2 and v.index("b") == 3
        assert v.index("zzz") == D.UNK

    @given(st.lists(st.lists(st.sampled_from(list("abcdefgh")), max_size=6), max_size=8), st.text(max_size=3))
    def test_round_trip(self, docs, w):
        v = D.Vocabulary.build(docs)
        assert v.index(v.token(v.index(w))) == v.index(w)

    def test_encode(self):
        v = D.Vocabulary(["x", "y"])
        np.testing.assert_array_equal(v.encode(["y", "q", "x"]), [3, 1, 2])


class TestEmbeddings:
    def test_copy_and_coverage(self, tmp_path):
        v = D.Vocabulary(["cat", "dog", "emu"])
        p = tmp_path / "vec.txt"
        p.write_text("2 3\ncat 0.1 0.2 0.3\nowl 1 1 1\ndog -1 0 2.5\n")
        emb = D.load_embeddings(p, v, dim=3)
        np.testing.assert_array_equal(emb.matrix[v.index("cat")], [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(emb.matrix[v.index("dog")], [-1, 0, 2.5])
        np.testing.assert_array_equal(emb.matrix[D.PAD], 0)
        assert emb.coverage == pytest.approx(2 / 3)
        assert np.all(np.abs(emb.matrix[v.index("emu")]) <= 0.05)

    def test_dimension_mismatch(self, tmp_path):
        p = tmp_path / "vec.txt"
        p.write_text("cat 0.1 0.2\n")
        with pytest.raises(D.DataError):
            D.load_embeddings(p, D.Vocabulary(["cat"]), dim=3)


class TestBatching:
    def test_sizes(self):
        examples, _, _ = synthetic_examples(70, 0)
        assert [len(b) for b in D.make_batches(examples, 32)] == [32, 32, 6]

    def test_shuffle_preserves_multiset(self):
        examples, _, _ = synthetic_examples(70, 0)
        ordered = [i for b in D.make_batches(examples, 32) for i in b.ids]
        shuffled = [i for b in D.make_batches(examples, 32, np.random.default_rng(1)) for i in b.ids]
        assert shuffled != ordered
        assert collections.Counter(shuffled) == collections.Counter(ordered)

    def test_independent_channel_padding(self):
        examples, _, _ = synthetic_examples(10, 0)
        b = D.collate(examples)
        for idx, lens, key in ((b.t_idx, b.t_len, "t"), (b.l_idx, b.l_len, "l"), (b.d_idx, b.d_len, "d")):
            assert idx.shape[1] == lens.max()
            for k, e in enumerate(examples):
                np.testing.assert_array_equal(idx[k, :lens[k]], getattr(e, key))
                assert np.all(idx[k, lens[k]:] == D.PAD)

    def test_pad_row_stays_zero(self):
        examples, vocab, _ = synthetic_examples(40, 0)
        model = small_model(len(vocab))
        state = nx.AdamState()
        for b in D.make_batches(examples, 8):
            model.step_loss(b, LossWeights())
            nx.adam_step(model.store, state, {nx.EMBEDDING: 0.1, nx.OTHER: 0.1})
        np.testing.assert_array_equal(model.store["embedding"].value[D.PAD], 0)


class TestSynthetic:
    def test_balanced(self):
        corpus, _ = D.gen_synthetic(100, 0)
        assert corpus.label_counts() == {0: 50, 1: 50}

    def test_sarcasm_is_conflict(self):
        corpus, lex = D.gen_synthetic(400, 3)
        for e in corpus.examples:
            toks = tokenize(e.text)
            hits = [lex.polarity(t) for t in toks if t in lex]
            assert len(hits) == 1
            implied_pos = any(s in e.text for s in D._POS_SITUATIONS)
            implied_neg = any(s in e.text for s in D._NEG_SITUATIONS)
            assert implied_pos != implied_neg
            literal_pos = hits[0].name == "POSITIVE"
            assert e.y_s == int(literal_pos != implied_pos)

    def test_situations_avoid_lexicon(self):
        _, lex = D.gen_synthetic(10, 0)
        for s in D._POS_SITUATIONS + D._NEG_SITUATIONS:
            assert not any(t in lex for t in tokenize(s))

    def test_seeded(self):
        a, _ = D.gen_synthetic(50, 9)
        b, _ = D.gen_synthetic(50, 9)
        assert a.examples == b.examples
        c, _ = D.gen_synthetic(50, 10)
        assert a.examples != c.examples
