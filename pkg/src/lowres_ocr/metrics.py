"""Character and word level accuracy of recognised text.

Accuracy is ``(1 - d / L) * 100`` where ``d`` is the Levenshtein distance
to the ground truth and ``L`` the ground-truth length in characters or
words. Texts are normalised first: whitespace runs collapse to a single
space and quote marks and dashes that are indistinguishable at low
resolution are folded together.
"""

from __future__ import annotations

import csv
import io
import logging
import unicodedata
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

SINGLE_QUOTES = "`´‘’'"
DOUBLE_QUOTES = "“”„\""
DASHES = "-‐‑–—−"


@dataclass(frozen=True)
class NormalizationRules:
    single_quotes: str = SINGLE_QUOTES
    double_quotes: str = DOUBLE_QUOTES
    dashes: str = DASHES
    collapse_whitespace: bool = True

    def table(self) -> dict[int, str]:
        mapping = {}
        for chars, canonical in (
            (self.single_quotes, "'"),
            (self.double_quotes, '"'),
            (self.dashes, "-"),
        ):
            for ch in chars:
                mapping[ord(ch)] = canonical
        return mapping


DEFAULT_RULES = NormalizationRules()


def normalize_text(s: str, rules: NormalizationRules = DEFAULT_RULES) -> str:
    s = unicodedata.normalize("NFC", s).translate(rules.table())
    if rules.collapse_whitespace:
        s = " ".join(s.split())
    return unicodedata.normalize("NFC", s)


def _encode(a: Sequence[Hashable], b: Sequence[Hashable]) -> tuple[np.ndarray, np.ndarray]:
    codes: dict[Hashable, int] = {}
    ea = np.fromiter((codes.setdefault(x, len(codes)) for x in a), dtype=np.int64, count=len(a))
    eb = np.fromiter((codes.setdefault(x, len(codes)) for x in b), dtype=np.int64, count=len(b))
    return ea, eb


def levenshtein(a: Sequence[Hashable], b: Sequence[Hashable]) -> int:
    """Unit-cost edit distance between two strings or token sequences.

    Two-row dynamic programme; each row is vectorised, with insertions
    resolved by a running minimum.
    """
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    ea, eb = _encode(a, b)
    n = len(eb)
    offsets = np.arange(n + 1)
    prev = offsets.copy()
    for i, x in enumerate(ea, start=1):
        cur = np.empty_like(prev)
        cur[0] = i
        cur[1:] = np.minimum(prev[:-1] + (eb != x), prev[1:] + 1)
        # cur[j] = min over k <= j of cur[k] + (j - k)
        cur = np.minimum.accumulate(cur - offsets) + offsets
        prev = cur
    return int(prev[-1])


def edit_table(a: Sequence[Hashable], b: Sequence[Hashable]) -> np.ndarray:
    """Full ``(len(a)+1) x (len(b)+1)`` table of prefix edit distances."""
    ea, eb = _encode(a, b)
    n = len(eb)
    offsets = np.arange(n + 1)
    table = np.empty((len(ea) + 1, n + 1), dtype=np.int64)
    table[0] = offsets
    for i, x in enumerate(ea, start=1):
        row = table[i]
        row[0] = i
        row[1:] = np.minimum(table[i - 1, :-1] + (eb != x), table[i - 1, 1:] + 1)
        table[i] = np.minimum.accumulate(row - offsets) + offsets
    return table


def align(a: Sequence[Hashable], b: Sequence[Hashable]) -> list[tuple[int | None, int | None]]:
    """Minimal-cost alignment as ``(i, j)`` index pairs.

    ``(i, None)`` deletes ``a[i]``; ``(None, j)`` inserts ``b[j]``. Where
    several alignments are optimal, diagonal steps are preferred.
    """
    table = edit_table(a, b)
    i, j = len(a), len(b)
    steps: list[tuple[int | None, int | None]] = []
    while i > 0 or j > 0:
        if i > 0 and j > 0 and table[i, j] == table[i - 1, j - 1] + (a[i - 1] != b[j - 1]):
            steps.append((i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and table[i, j] == table[i - 1, j] + 1:
            steps.append((i - 1, None))
            i -= 1
        else:
            steps.append((None, j - 1))
            j -= 1
    steps.reverse()
    return steps


@dataclass(frozen=True)
class EvalResult:
    cla_pct: float
    wla_pct: float
    char_distance: int
    word_distance: int
    char_len: int
    word_len: int


def accuracy_pct(distance: int, length: int) -> float:
    return (1.0 - distance / length) * 100.0


def evaluate(gt: str, hyp: str, rules: NormalizationRules = DEFAULT_RULES) -> EvalResult:
    """Score ``hyp`` against ``gt``. Accuracy may go negative when d > L."""
    gt_n, hyp_n = normalize_text(gt, rules), normalize_text(hyp, rules)
    if not gt_n:
        raise ValueError("ground truth is empty after normalisation")
    gt_words, hyp_words = gt_n.split(), hyp_n.split()
    cd = levenshtein(gt_n, hyp_n)
    wd = levenshtein(gt_words, hyp_words)
    return EvalResult(
        accuracy_pct(cd, len(gt_n)),
        accuracy_pct(wd, len(gt_words)),
        cd,
        wd,
        len(gt_n),
        len(gt_words),
    )


# ---------------------------------------------------------------------------
# Corpus tables


@dataclass(frozen=True)
class CorpusEntry:
    gt: str
    hyp: str
    labels: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class GroupSummary:
    key: tuple[str, ...]
    pages: int
    mean_cla: float
    mean_wla: float
    char_distance: int
    word_distance: int
    char_len: int
    word_len: int

    @property
    def pooled_cla(self) -> float:
        return accuracy_pct(self.char_distance, self.char_len)

    @property
    def pooled_wla(self) -> float:
        return accuracy_pct(self.word_distance, self.word_len)


@dataclass(frozen=True)
class CorpusTable:
    group_by: tuple[str, ...]
    groups: tuple[GroupSummary, ...]
    total: GroupSummary

    def rows(self) -> list[dict]:
        out = []
        for g in (*self.groups, self.total):
            row = dict(zip(self.group_by, g.key)) if g is not self.total else {
                k: "ALL" for k in self.group_by
            }
            row.update(
                pages=g.pages,
                mean_cla=round(g.mean_cla, 6),
                mean_wla=round(g.mean_wla, 6),
                pooled_cla=round(g.pooled_cla, 6),
                pooled_wla=round(g.pooled_wla, 6),
            )
            out.append(row)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
        return buf.getvalue()


def _summarise(key: tuple[str, ...], results: Sequence[EvalResult]) -> GroupSummary:
    return GroupSummary(
        key,
        len(results),
        float(np.mean([r.cla_pct for r in results])),
        float(np.mean([r.wla_pct for r in results])),
        sum(r.char_distance for r in results),
        sum(r.word_distance for r in results),
        sum(r.char_len for r in results),
        sum(r.word_len for r in results),
    )


def evaluate_corpus(
    entries: Iterable[CorpusEntry],
    group_by: Sequence[str] = ("font",),
    rules: NormalizationRules = DEFAULT_RULES,
) -> CorpusTable:
    """Mean accuracy per group of pages plus corpus-wide totals.

    Pages whose ground truth is empty are skipped with a warning, and a
    group left without pages is omitted.
    """
    group_by = tuple(group_by)
    grouped: dict[tuple[str, ...], list[EvalResult]] = {}
    everything: list[EvalResult] = []
    for entry in entries:
        key = tuple(str(entry.labels.get(k, "")) for k in group_by)
        bucket = grouped.setdefault(key, [])
        try:
            result = evaluate(entry.gt, entry.hyp, rules)
        except ValueError:
            log.warning("skipping page with empty ground truth in group %s", key)
            continue
        bucket.append(result)
        everything.append(result)
    groups = []
    for key in sorted(grouped):
        if not grouped[key]:
            log.warning("group %s has no scorable pages; omitted", key)
            continue
        groups.append(_summarise(key, grouped[key]))
    if not everything:
        raise ValueError("no scorable pages in corpus")
    return CorpusTable(group_by, tuple(groups), _summarise(("ALL",) * len(group_by), everything))
