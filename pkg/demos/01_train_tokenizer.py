#!/usr/bin/env python3
"""Walkthrough: train a subword vocabulary and segment captions.

Trains two unigram vocabularies (300 and 1000 pieces) on the bundled
caption corpus, then segments a few captions with each to show how a
larger inventory absorbs whole words while a smaller one falls back to
marked continuation pieces ('_' prefix = "glue to the previous piece").

Run:  python3 demos/01_train_tokenizer.py
"""

from subicap.corpus import bundled_corpus_path, corpus_stats, load_corpus
from subicap.unigram import TrainerConfig, detokenize, encode, train_unigram

UNSEEN = [
    "a man riding a skateboard down a ramp",
    "two dogs playing together in the grass",
]


def main() -> None:
    corpus = load_corpus(bundled_corpus_path())
    stats = corpus_stats(corpus)
    print(f"corpus: {stats.num_captions} captions, "
          f"{stats.distinct_words} distinct words")

    vocabs = {}
    for k in (300, 1000):
        vocabs[k] = train_unigram(corpus, TrainerConfig(target_vocab_size=k))
        print(f"trained unigram vocabulary, {vocabs[k].size} pieces (k={k})")

    print("\ncaptions from the corpus:")
    for text in corpus.texts()[:3]:
        print(f"\n  {text!r}")
        for k, vocab in vocabs.items():
            seq = encode(text, vocab)
            print(f"    k={k:<5d} {len(seq.pieces):>2d} pieces: "
                  f"{' '.join(seq.pieces)}")
            assert detokenize(seq) == text

    print("\ntext the corpus never saw (still encodes, zero OOV):")
    for text in UNSEEN:
        print(f"\n  {text!r}")
        for k, vocab in vocabs.items():
            seq = encode(text, vocab)
            print(f"    k={k:<5d} {len(seq.pieces):>2d} pieces: "
                  f"{' '.join(seq.pieces)}")
            assert detokenize(seq) == text

    # every corpus caption reconstructs exactly at either size
    for k, vocab in vocabs.items():
        losses = sum(detokenize(encode(t, vocab)) != t for t in corpus.texts())
        print(f"\nroundtrip failures at k={k}: {losses} / {stats.num_captions}")

    print("\nhighest-probability pieces at k=300:")
    top = sorted(vocabs[300].entries, key=lambda e: -e[1])[:12]
    for piece, score in top:
        print(f"  {piece:<8s} {score:8.4f}")


if __name__ == "__main__":
    main()
