"""
How far can a confidence score be trusted?
==========================================

Every recognised word is marked right or wrong by aligning it with the
ground truth, then words are binned by confidence: everything below 95 in
one bin, then one bin per integer. A well calibrated engine shows the share
of correct words rising with the bin.
"""

from pathlib import Path

import numpy as np

from lowres_ocr import calibrate, ocr_io

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

page = ocr_io.read_tsv(FIXTURES / "split_word" / "nn-gauss-1.0.tsv")
gt = (FIXTURES / "split_word" / "ground_truth.txt").read_text(encoding="utf-8")
for w in calibrate.score_words(page, gt, "nn-gauss-1.0"):
    print(f"{w.text:>12} conf {w.conf:5.1f}  {'ok' if w.correct else 'WRONG'}")

# Simulated engine whose words are right with probability conf / 100
rng = np.random.default_rng(0)
confs = np.clip(rng.normal(93, 4, 20_000).round(), 0, 97)
words = [calibrate.ScoredWord("w", float(c), bool(rng.random() < c / 100)) for c in confs]
table = calibrate.bin_confidences(words)
print(table.to_csv())
