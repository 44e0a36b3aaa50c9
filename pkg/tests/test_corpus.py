"""Corpus loading, normalization, and statistics."""

from collections import Counter

import pytest

from subicap.corpus import (
    Caption,
    Corpus,
    DEFAULT_MAX_WORDS,
    bundled_corpus_path,
    corpus_stats,
    load_corpus,
    normalize_text,
    truncate_words,
)
from subicap.errors import CorpusFormatError


class TestNormalizeText:
    def test_lowercase_and_collapse(self):
        assert normalize_text("  A  Tabby   CAT ") == "a tabby cat"

    def test_nfkc_folds_compatibility_forms(self):
        # ligature fi and fullwidth letters decompose under NFKC
        assert normalize_text("ﬁre") == "fire"
        assert normalize_text("Ｃａｔ") == "cat"

    def test_mixed_whitespace(self):
        assert normalize_text("a\tcat\non  a mat") == "a cat on a mat"

    def test_empty(self):
        assert normalize_text("   ") == ""

    def test_idempotent(self):
        texts = ["a cat sat", "  Weird   CASE\there ", "ﬁve birds"]
        for t in texts:
            once = normalize_text(t)
            assert normalize_text(once) == once


class TestTruncateWords:
    def test_truncates_to_limit(self):
        text = " ".join(f"w{i}" for i in range(20))
        out = truncate_words(text, 16)
        assert out.split() == [f"w{i}" for i in range(16)]

    def test_short_text_unchanged(self):
        assert truncate_words("a cat", 16) == "a cat"

    def test_default_limit(self):
        assert DEFAULT_MAX_WORDS == 16
        text = " ".join(["w"] * 30)
        assert len(truncate_words(text).split()) == 16

    def test_rejects_nonpositive_limit(self):
        with pytest.raises(ValueError):
            truncate_words("a cat", 0)


class TestCorpus:
    def test_word_counts_and_inventory(self):
        c = Corpus([Caption("i0", "a cat"), Caption("i1", "a dog")])
        assert c.word_counts == Counter({"a": 2, "cat": 1, "dog": 1})
        assert c.char_inventory == frozenset("acatdog ")
        assert len(c) == 2

    def test_from_texts_normalizes_and_truncates(self):
        long = " ".join(f"w{i}" for i in range(25))
        c = Corpus.from_texts(["  A   CAT ", long], max_words=16)
        assert c.captions[0].text == "a cat"
        assert len(c.captions[1].text.split()) == 16

    def test_from_texts_id_mismatch(self):
        with pytest.raises(ValueError):
            Corpus.from_texts(["a", "b"], image_ids=["only-one"])

    def test_single_word_corpus_has_no_space(self):
        c = Corpus.from_texts(["cat"])
        assert " " not in c.char_inventory


class TestLoadCorpus:
    def test_skips_comments_and_blanks(self, tmp_path):
        p = tmp_path / "caps.tsv"
        p.write_text("# header\n\nimg0\ta cat\n# trailing\nimg1\ta dog\n",
                     encoding="utf-8")
        c = load_corpus(p)
        assert c.texts() == ["a cat", "a dog"]
        assert [cap.image_id for cap in c.captions] == ["img0", "img1"]

    def test_normalizes_raw_lines(self, tmp_path):
        p = tmp_path / "caps.tsv"
        p.write_text("img0\t  A   big CAT\n", encoding="utf-8")
        assert load_corpus(p).texts() == ["a big cat"]

    def test_missing_tab_reports_line_number(self, tmp_path):
        p = tmp_path / "caps.tsv"
        p.write_text("# ok\nimg0\ta cat\nno tab here\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError, match="line 3"):
            load_corpus(p)

    def test_caption_may_contain_tabs(self, tmp_path):
        # only the first tab separates id from caption
        p = tmp_path / "caps.tsv"
        p.write_text("img0\ta cat\ton a mat\n", encoding="utf-8")
        assert load_corpus(p).texts() == ["a cat on a mat"]


class TestCorpusStats:
    def test_hand_oracle(self):
        c = Corpus([
            Caption("i0", "a cat sat"),
            Caption("i0", "a dog"),
            Caption("i1", "a cat"),
        ])
        s = corpus_stats(c)
        assert s.num_captions == 3
        assert s.num_images == 2
        assert s.total_words == 7
        assert s.distinct_words == 4  # a, cat, sat, dog
        assert s.avg_caption_length_words == pytest.approx(7 / 3)

    def test_empty_corpus(self):
        s = corpus_stats(Corpus([]))
        assert s.num_captions == 0
        assert s.avg_caption_length_words == 0.0


class TestBundledCorpus:
    def test_loads_and_matches_recount(self):
        c = load_corpus(bundled_corpus_path())
        s = corpus_stats(c)
        assert s.num_captions == 1000
        # recompute every statistic from the stored captions
        words = Counter()
        for t in c.texts():
            words.update(t.split())
        assert s.total_words == sum(words.values())
        assert s.distinct_words == len(words)
        assert s.avg_caption_length_words == pytest.approx(
            sum(words.values()) / 1000
        )

    def test_all_captions_within_word_limit(self):
        c = load_corpus(bundled_corpus_path())
        assert max(len(t.split()) for t in c.texts()) <= DEFAULT_MAX_WORDS

    def test_letters_seen_word_initial_and_internal(self):
        # needed so the subword lattice can cover arbitrary recombinations
        c = load_corpus(bundled_corpus_path())
        initial = {w[0] for w in c.word_counts}
        internal = {ch for w in c.word_counts for ch in w[1:]}
        letters = {ch for ch in c.char_inventory if ch.isalpha()}
        assert letters <= initial
        assert letters <= internal
