"""
Merging several recognition outputs
===================================

Each enlargement method gives the recogniser a slightly different picture,
so its mistakes land on different words. Here three noisy outputs of the
same page are merged word by word.
"""

import random
from pathlib import Path

from lowres_ocr import ensemble, ocr_io
from lowres_ocr.ensemble import Candidate, Lexicon, modified_confidence, vote

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

# Raw engine confidences are rescaled first; above 80 they are stretched so
# that one confident reading can outweigh a couple of hesitant ones
for c in (40, 60, 79, 80, 90, 97):
    print(f"conf {c:>3} -> {modified_confidence(c):6.2f}")

# Two weak votes for "cot" against one strong vote for "cat". The tally is
# sum / sqrt(count), so agreement helps, but less than linearly.
lex = Lexicon(["cat", "cot"])
result = vote([Candidate("cot", 40), Candidate("cot", 41), Candidate("cat", 80)], lex, penalty=30)
print("winner:", result.winner, {w: round(s, 2) for w, s in result.tally.items()})

# Words missing from the lexicon lose 30 points before the tally
result = vote([Candidate("qzx", 75), Candidate("the", 50)], Lexicon(["the"]), penalty=30)
print("with the lexicon penalty:", result.winner)

# A stored two-output case. The master output read "lcdger", the other read
# "ledger"; near the end the other output broke one word into two fragments
# whose boxes barely overlap the master's, so they never get a vote.
master = ocr_io.read_tsv(FIXTURES / "split_word" / "nn-gauss-1.0.tsv")
other = ocr_io.read_tsv(FIXTURES / "split_word" / "bicubic.tsv")
merged = ensemble.merge(
    [ensemble.MethodOutput("nn-gauss-1.0", master), ensemble.MethodOutput("bicubic", other)],
    ensemble.EnsembleConfig(dpi_profile=60),
    Lexicon.from_file(FIXTURES / "lexicon.txt"),
)
print("master :", master.text.replace("\n", " / "))
print("other  :", other.text.replace("\n", " / "))
print("merged :", merged.text.replace("\n", " / "))
for word in merged.words:
    if word.winner != word.master_text or word.unmatched:
        offered = [(c.source_tag, c.text, round(c.iou, 2)) for c in word.candidates]
        print(f"  {word.master_text!r} -> {word.winner!r}  candidates {offered}")

# Bigger synthetic check: five outputs with random substitutions
rng = random.Random(0)
vocab = "the of and to in was he that it his".split()
truth = [rng.choice(vocab) for _ in range(200)]


def noisy(tag_seed):
    r = random.Random(tag_seed)
    words = []
    for n, t in enumerate(truth):
        text = t if r.random() > 0.2 else r.choice(["tbe", "wns", "ot", "aud", "liis"])
        box = ocr_io.BBox(100 + 90 * (n % 10), 100 + 60 * (n // 10), 80, 36)
        words.append(ocr_io.WordRec(text, box, float(r.randint(40, 97)), 1, 1, n // 10 + 1, n % 10 + 1))
    return ocr_io.PageRec.from_words(words, 2550, 3300)


tags = ["nn-gauss-1.0", "nn-gauss-0", "nn-gauss-2.0", "bilinear", "bicubic"]
outs = [ensemble.MethodOutput(t, noisy(i)) for i, t in enumerate(tags)]
merged = ensemble.merge(outs, ensemble.EnsembleConfig(), Lexicon(vocab))
single = sum(w.text == t for w, t in zip(outs[0].page.words, truth))
combined = sum(w.text == t for w, t in zip(merged.page.words, truth))
print(f"master alone: {single}/200 words right, merged: {combined}/200")
