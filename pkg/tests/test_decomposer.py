import collections

from hypothesis import given, settings
from hypothesis import strategies as st

from dualchannel.decomposer import decompose, decompose_text, tokenize
from dualchannel.lexicon import Polarity, SentimentLexicon

LEX = SentimentLexicon({"best": Polarity.POSITIVE, "gift": Polarity.POSITIVE})


class TestTokenize:
    def test_trailing_punctuation_split(self):
        assert tokenize("Final exam!") == ["final", "exam", "!"]

    def test_empty(self):
        assert tokenize("") == []
        assert tokenize("   \t ") == []

    def test_lowercase(self):
        assert tokenize("Best GIFT") == ["best", "gift"]

    def test_leading_punctuation_and_interior_kept(self):
        assert tokenize('"don\'t," she said...') == ['"', "don't", ",", '"', "she", "said", ".", ".", "."]

    def test_hashtags_and_emoji_kept(self):
        assert tokenize("#not fun 😒") == ["#not", "fun", "😒"]

    @given(st.lists(st.text(alphabet="abcxyz!?.,#'", min_size=1, max_size=6), max_size=12))
    def test_idempotent_on_joined_tokens(self, words):
        toks = tokenize(" ".join(words))
        assert tokenize(" ".join(toks)) == toks
        assert all(toks)


class TestDecompose:
    def test_birthday_example(self):
        ex = decompose_text("final exam is the best gift on my birthday", LEX)
        assert ex.w_l == ("best", "gift")
        assert ex.w_d == ("final", "exam", "is", "the", "on", "my", "birthday")
        assert not ex.fallback_used

    def test_fallback(self):
        ex = decompose(["the", "exam", "happens"], SentimentLexicon({}))
        assert ex.fallback_used
        assert ex.w_l == ex.w_d == ex.w_t == ("the", "exam", "happens")

    def test_all_sentiment_words_gives_empty_implied(self):
        ex = decompose(["best", "gift"], LEX)
        assert ex.w_l == ("best", "gift") and ex.w_d == () and not ex.fallback_used

    def test_punctuation_routes_to_implied(self):
        ex = decompose_text("best day ever !", LEX)
        assert "!" in ex.w_d

    @settings(max_examples=200)
    @given(st.lists(st.sampled_from(["best", "gift", "exam", "the", "!"]), min_size=1, max_size=10))
    def test_implied_nonempty_when_some_non_sentiment_token(self, tokens):
        ex = decompose(tokens, LEX)
        if not ex.fallback_used and any(LEX.polarity(t) is None for t in tokens):
            assert ex.w_d


def check_partition(ex, lex):
    """Multiset/order oracle for one decomposition; returns a list of violations."""
    bad = []
    if ex.fallback_used:
        if not (ex.w_l == ex.w_d == ex.w_t):
            bad.append("fallback channels differ from the full text")
        if any(lex.polarity(t) is not None for t in ex.w_t):
            bad.append("fallback used although a sentiment word is present")
        return bad
    if collections.Counter(ex.w_l) + collections.Counter(ex.w_d) != collections.Counter(ex.w_t):
        bad.append("multiset mismatch")
    if not ex.w_l:
        bad.append("empty literal channel without fallback")
    if any(lex.polarity(t) is None for t in ex.w_l):
        bad.append("non-sentiment word in literal channel")
    if any(lex.polarity(t) is not None for t in ex.w_d):
        bad.append("sentiment word in implied channel")
    for sub in (ex.w_l, ex.w_d):
        it = iter(ex.w_t)
        if not all(tok in it for tok in sub):
            bad.append("order not preserved")
    return bad
