from advnews.fixtures import (BUNDLE_TICKERS, N_TEST, TEST_START, TARGET_DAY, load_corpus, make_corpus,
                              make_headlines, trading_days, write_bundle)
from advnews.homoglyphs import DEFAULT_COMPANIES
from advnews.news import Lexicon, tokenize


def test_shipped_bundle_matches_generator(bundle, tmp_path):
    write_bundle(tmp_path)
    for rel in ("headlines.jsonl", "corpus.jsonl", "run.json",
                *(f"prices/{t}.csv" for t in BUNDLE_TICKERS)):
        assert (tmp_path / rel).read_bytes() == (bundle / rel).read_bytes(), rel


def test_corpus_size_and_coverage(corpus):
    assert len(corpus) >= 200
    assert {c.ticker for c in corpus if c.ticker} == set(DEFAULT_COMPANIES)
    assert load_corpus() == make_corpus()


def test_positive_templates_can_be_flipped():
    lex = Lexicon.load()
    payload = sum(lex.terms[t] for t in tokenize("losses and layoffs") if t in lex.terms)
    for item in make_corpus():
        if item.polarity == "positive":
            ws = [lex.terms[t] for t in tokenize(item.headline.raw_html) if t in lex.terms]
            assert ws and sum(ws) > 0 and sum(ws) + payload < 0


def test_target_is_isolated():
    store = make_headlines()
    days = trading_days(TEST_START, 0, N_TEST)
    t_star = days[TARGET_DAY]
    nvda = [h for h in store if "nvda" in h.raw_html.lower() or "nvidia" in h.raw_html.lower()]
    near = [h for h in nvda if abs((h.date - t_star).days) <= 7]
    assert {h.date for h in near} == {t_star} and len(near) == 2
