"""Regenerate the bundled desk caption corpus.

Deterministic: fixed seed, fixed word pools, fixed template set. The output
file is committed at src/subicap/data/desk_captions.tsv; rerun only when the
pools or templates change.

Construction constraints the test suite relies on:
  - at least 1000 captions, lowercase ascii words and single spaces only;
  - shared suffix morphology (-s/-ing/-ed/-er/-est/-ly) across many stems;
  - every letter used appears both word-initially and word-internally
    somewhere in the corpus;
  - 24 rare nouns, each exactly once: 12 in the first 900 rows, 12 in the
    last 100 rows, so a 900/100 split has held-out words unseen in training;
  - a handful of captions longer than 16 words, plus a few raw lines with
    stray casing/whitespace, so loader normalization and truncation are
    observable on real data.
"""

from __future__ import annotations

import random
from collections import Counter
from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "subicap" / "data" / "desk_captions.tsv"
SEED = 20240611
N_CAPTIONS = 1000
HOLDOUT_START = 900

# stems restricted to purely concatenative morphology (walk -> walks/walking/walked)
VERBS = [
    "walk", "jump", "climb", "look", "wait", "rest", "lean", "float", "point",
    "work", "paint", "cook", "roll", "drift", "turn", "pull", "lift", "kick",
    "crawl", "yawn", "call", "play", "stay", "follow", "clean", "open", "burn",
    "glow",
]
NOUNS = [
    "cat", "dog", "bird", "horse", "tree", "ball", "chair", "table", "river",
    "field", "garden", "window", "basket", "player", "farmer", "teacher",
    "girl", "street", "market", "bridge", "tower", "boat", "train", "flower",
    "mountain", "cloud", "road", "hill", "lamp", "door", "wall", "book",
    "kite", "drum", "wagon", "fence", "banjo", "village",
]
ADJS = [
    "small", "tall", "bright", "dark", "quiet", "yellow", "green", "red",
    "blue", "brown", "old", "young", "gentle", "warm", "cold", "soft",
    "loud", "calm", "deep", "narrow",
]
# adjectives that take concatenative -er/-est
GRADABLE = ["tall", "bright", "old", "warm", "cold", "soft", "loud", "calm",
            "deep", "dark", "small", "young", "quiet", "green"]
ADVS = ["slowly", "quickly", "gently", "quietly", "brightly", "calmly",
        "softly", "loudly", "warmly"]
PREPS = ["on", "in", "near", "under", "over", "by", "with", "beside",
         "along", "across", "toward", "past", "around", "behind"]

RARE = [
    "marionette", "gondola", "telescope", "lantern", "easel", "accordion",
    "tapestry", "sundial", "kaleidoscope", "metronome", "terrarium", "gazebo",
    "obelisk", "zeppelin", "carousel", "gramophone", "candelabra", "aqueduct",
    "catamaran", "observatory", "harmonica", "periscope", "mosaic", "pendulum",
]


def build_captions(rng: random.Random) -> list[str]:
    def verb_ing(v: str) -> str:
        return v + "ing"

    def templates() -> str:
        n1, n2, n3, n4, n5 = rng.sample(NOUNS, 5)
        v1, v2 = rng.sample(VERBS, 2)
        a1, a2 = rng.sample(ADJS, 2)
        g = rng.choice(GRADABLE)
        adv = rng.choice(ADVS)
        p1, p2 = rng.sample(PREPS, 2)
        pick = rng.randrange(10)
        if pick == 0:
            return f"a {a1} {n1} is {verb_ing(v1)} {p1} the {n2}"
        if pick == 1:
            return f"the {n1} {v1}ed {p1} the {a1} {n2}"
        if pick == 2:
            return f"two {n1}s are {verb_ing(v1)} {adv} {p1} the {n2}"
        if pick == 3:
            return f"a {n1} {v1}s {p1} the {n2} and the {n3} {v2}s {adv}"
        if pick == 4:
            return f"the {a1} {n1} is {p1} the {n2} {p2} the {n3}"
        if pick == 5:
            return f"a {n1} is {verb_ing(v1)} while a {n2} {v2}s {p1} the {g}er {n3}"
        if pick == 6:
            return f"three {n1}s {v1} {adv} {p1} the {n2}"
        if pick == 7:
            return f"the {g}est {n1} {v1}ed {p1} the {a2} {n2}"
        if pick == 8:
            return f"a {a1} {n1} and a {a2} {n2} are {verb_ing(v1)} {p1} the {n3}"
        return (f"the {a1} {n1} is {verb_ing(v1)} {adv} {p1} the {n2} and "
                f"two {n3}s are {verb_ing(v2)} {p2} the {a2} {n4} at the {n5}")

    captions = [templates() for _ in range(N_CAPTIONS)]

    # deliberately long captions so >16-word truncation is exercised
    for idx in rng.sample(range(N_CAPTIONS), 6):
        n1, n2, n3, n4, n5, n6 = rng.sample(NOUNS, 6)
        v1, v2, v3 = rng.sample(VERBS, 3)
        a1, a2 = rng.sample(ADJS, 2)
        p1, p2, p3 = rng.sample(PREPS, 3)
        adv1, adv2 = rng.sample(ADVS, 2)
        captions[idx] = (
            f"the {a1} {n1} is {verb_ing(v1)} {adv1} {p1} the {n2} while "
            f"two {n3}s {v2} {adv2} {p2} the {a2} {n4} and three {n5}s "
            f"are {verb_ing(v3)} {p3} the {n6}"
        )

    # rare nouns, each exactly once; half restricted to the held-out tail
    rows = rng.sample(range(HOLDOUT_START), 12) + [
        HOLDOUT_START + r for r in rng.sample(range(N_CAPTIONS - HOLDOUT_START), 12)
    ]
    for word, row in zip(RARE, rows):
        v = rng.choice(VERBS)
        n = rng.choice(NOUNS)
        p = rng.choice(PREPS)
        captions[row] = f"a {word} is {verb_ing(v)} {p} the {n}"
    return captions


def check(captions: list[str]) -> None:
    words = Counter(w for c in captions for w in c.split())
    initial = {w[0] for w in words}
    internal = {ch for w in words for ch in w[1:]}
    used = initial | internal
    missing = sorted((used - initial) | (used - internal))
    if missing:
        raise SystemExit(f"letters lacking both-position coverage: {missing}")
    for r in RARE:
        if words[r] != 1:
            raise SystemExit(f"rare word {r!r} appears {words[r]} times, want 1")
    train_words = {w for c in captions[:HOLDOUT_START] for w in c.split()}
    unseen = [r for r in RARE if r not in train_words]
    if len(unseen) < 10:
        raise SystemExit(f"too few held-out-only rare words: {unseen}")
    if sum(len(c.split()) > 16 for c in captions) < 4:
        raise SystemExit("want several >16-word captions")


def main() -> None:
    rng = random.Random(SEED)
    captions = build_captions(rng)
    check(captions)
    lines = ["# desk caption corpus, tab-separated: image_id<TAB>caption", "#"]
    for i, cap in enumerate(captions):
        raw = cap
        # a few raw lines carry stray casing/whitespace on purpose
        if i % 250 == 7:
            raw = cap.upper()
        elif i % 250 == 101:
            raw = "  " + cap.replace(" ", "  ", 2) + " "
        lines.append(f"img{i:04d}\t{raw}")
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
    print(f"wrote {len(captions)} captions to {OUT}")


if __name__ == "__main__":
    main()
