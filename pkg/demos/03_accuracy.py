"""
Character and word accuracy
===========================

Accuracy is one minus the edit distance over the ground-truth length.
Curly quotes, straight quotes and the various dashes look alike at low
resolution, so they are folded together before comparing.
"""

from lowres_ocr.metrics import CorpusEntry, align, evaluate, evaluate_corpus, levenshtein

print(levenshtein("kitten", "sitting"))
print(levenshtein("the cat sat".split(), "the bat sat on".split()))

r = evaluate("the cat sat", "the bat sat on")
print(f"CLA {r.cla_pct:.2f}%  WLA {r.wla_pct:.2f}%")

# typographic variants do not count as errors
r = evaluate("“It’s late—very late,” he said.", "\"It's late-very late,\" he said.")
print(f"CLA {r.cla_pct:.2f}%  WLA {r.wla_pct:.2f}%")

# the alignment behind the word distance
gt, hyp = "the cat sat".split(), "the bat sat on".split()
for i, j in align(hyp, gt):
    print(f"  {hyp[i] if i is not None else '-':>4}  {gt[j] if j is not None else '-':>4}")

# a small corpus grouped by font
pages = [
    CorpusEntry("a quick brown fox", "a quick brown fox", {"font": "serif"}),
    CorpusEntry("jumps over the lazy dog", "jumps ovcr the lazy clog", {"font": "serif"}),
    CorpusEntry("pack my box with five dozen", "pack my hox with five dozen", {"font": "sans"}),
]
print(evaluate_corpus(pages, ["font"]).to_csv())
