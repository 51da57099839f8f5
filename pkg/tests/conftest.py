import pytest

from hashrag.corpus import Corpus, LanguageMode, TweetHashtagPair
from hashrag.selector import SynonymLexicon


def make_corpus(rows, mode=LanguageMode.SPACE, prefix="t"):
    """rows: [(text, [tags...]), ...] -> Corpus with ids t0, t1, ..."""
    pairs = tuple(
        TweetHashtagPair(id=f"{prefix}{i}", text=text, hashtags=tuple(tags))
        for i, (text, tags) in enumerate(rows)
    )
    return Corpus(pairs=pairs, language_mode=mode)


@pytest.fixture
def small_corpus():
    return make_corpus(
        [
            ("cloud desktops roll out this week", ["wvd", "citrix"]),
            ("virtual desktop rollout for teams", ["wvd", "microsoft"]),
            ("football final tonight in the rain", ["world cup"]),
        ]
    )


@pytest.fixture
def full_lexicon():
    words = ["world", "cup", "final", "cloud", "desk", "team", "goal", "rain"]
    entries = {w: (w + "x", w + "y") for w in words}
    return SynonymLexicon(entries=entries)
