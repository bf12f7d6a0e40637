"""Word confidence versus correctness, binned for calibration plots."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

from .metrics import DEFAULT_RULES, NormalizationRules, align, normalize_text
from .ocr_io import PageRec

LOW_BIN = "<95"
LOW_BIN_LIMIT = 95


@dataclass(frozen=True)
class ScoredWord:
    text: str
    conf: float
    correct: bool
    method_tag: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.conf <= 100.0:
            raise ValueError(f"confidence {self.conf!r} outside [0, 100]")


def score_words(
    page: PageRec,
    gt: str,
    method_tag: str = "",
    rules: NormalizationRules = DEFAULT_RULES,
) -> list[ScoredWord]:
    """Flag each recognised word correct iff the word-level edit alignment
    pairs it with an identical ground-truth token (after normalisation)."""
    words = page.words
    hyp_tokens = [normalize_text(w.text, rules) for w in words]
    gt_tokens = normalize_text(gt, rules).split()
    correct = [False] * len(words)
    for i, j in align(hyp_tokens, gt_tokens):
        if i is not None and j is not None and hyp_tokens[i] == gt_tokens[j]:
            correct[i] = True
    return [ScoredWord(w.text, w.conf, ok, method_tag) for w, ok in zip(words, correct)]


def bin_label(conf: float) -> str:
    rounded = int(math.floor(conf + 0.5))
    return LOW_BIN if rounded < LOW_BIN_LIMIT else str(rounded)


@dataclass(frozen=True)
class CalibrationBin:
    label: str
    count: int
    correct: int

    @property
    def proportion(self) -> float:
        return self.correct / self.count


@dataclass(frozen=True)
class CalibrationTable:
    bins: tuple[CalibrationBin, ...]

    @property
    def total(self) -> int:
        return sum(b.count for b in self.bins)

    def __getitem__(self, label: str) -> CalibrationBin:
        for b in self.bins:
            if b.label == label:
                return b
        raise KeyError(label)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["bin", "count", "proportion"])
        for b in self.bins:
            writer.writerow([b.label, b.count, f"{b.proportion:.6f}"])
        return buf.getvalue()


def _bin_order(label: str) -> int:
    return -1 if label == LOW_BIN else int(label)


def bin_confidences(words: Iterable[ScoredWord]) -> CalibrationTable:
    """Pool words into one ``<95`` bin and one bin per integer confidence
    from 95 upwards. Empty bins are left out."""
    counts: dict[str, list[int]] = {}
    for w in words:
        c = counts.setdefault(bin_label(w.conf), [0, 0])
        c[0] += 1
        c[1] += bool(w.correct)
    return CalibrationTable(
        tuple(
            CalibrationBin(label, n, k)
            for label, (n, k) in sorted(counts.items(), key=lambda kv: _bin_order(kv[0]))
        )
    )


def bin_by_method(words: Sequence[ScoredWord]) -> dict[str, CalibrationTable]:
    tags = sorted({w.method_tag for w in words})
    return {t: bin_confidences(w for w in words if w.method_tag == t) for t in tags}


def pool_tables(tables: Iterable[CalibrationTable]) -> CalibrationTable:
    """Count-weighted combination of several tables."""
    counts: dict[str, list[int]] = {}
    for table in tables:
        for b in table.bins:
            c = counts.setdefault(b.label, [0, 0])
            c[0] += b.count
            c[1] += b.correct
    return CalibrationTable(
        tuple(
            CalibrationBin(label, n, k)
            for label, (n, k) in sorted(counts.items(), key=lambda kv: _bin_order(kv[0]))
        )
    )


def tables_to_csv(tables: dict[str, CalibrationTable]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "bin", "count", "proportion"])
    for tag, table in tables.items():
        for b in table.bins:
            writer.writerow([tag, b.label, b.count, f"{b.proportion:.6f}"])
    return buf.getvalue()
