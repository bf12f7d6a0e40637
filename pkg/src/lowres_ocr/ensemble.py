"""Confidence-weighted merging of recognition outputs from several upscalings.

One output is the *master*. Every master word collects the word with the
best-overlapping box from each other output, engine confidences are remapped
by a piecewise linear function, non-dictionary words are penalised, and the
word maximising ``sum(c_mod) / sqrt(count)`` replaces the master word.
"""

from __future__ import annotations

import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ocr_io import BBox, PageRec, WordRec

AUTO = "auto"

#: Best single upscaling per input resolution, used as master by default.
DEFAULT_MASTERS = {60: "nn-gauss-1.0", 75: "bicubic"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CmodParams:
    """Two-piece linear confidence remap, split at ``breakpoint``."""

    breakpoint: float = 80.0
    low_slope: float = 0.5
    low_intercept: float = 30.0
    high_slope: float = 1.7
    high_intercept: float = -65.0

    def __post_init__(self) -> None:
        if self.low_slope <= 0 or self.high_slope <= 0:
            raise ValueError("c_mod slopes must be positive")


# No separate 75 dpi coefficients are published; both profiles share one set.
CMOD_PROFILES = {60: CmodParams(), 75: CmodParams()}


def modified_confidence(c: float, params: CmodParams = CmodParams()) -> float:
    if not (0.0 <= c <= 100.0):
        raise ValueError(f"confidence {c!r} outside [0, 100]")
    if c < params.breakpoint:
        return params.low_slope * c + params.low_intercept
    return params.high_slope * c + params.high_intercept


def strip_punctuation(word: str) -> str:
    """Drop leading and trailing Unicode punctuation (category ``P*``)."""
    start, end = 0, len(word)
    while start < end and unicodedata.category(word[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(word[end - 1]).startswith("P"):
        end -= 1
    return word[start:end]


class Lexicon:
    """Word list used to penalise candidates that are not dictionary words."""

    def __init__(self, words: Iterable[str] = (), case_insensitive: bool = True):
        self.case_insensitive = case_insensitive
        self._words = frozenset(self._key(w) for w in words if w.strip())

    def _key(self, word: str) -> str:
        word = unicodedata.normalize("NFC", word.strip())
        return word.casefold() if self.case_insensitive else word

    @classmethod
    def from_file(cls, path: str | Path, case_insensitive: bool = True) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls((line.strip() for line in fh), case_insensitive)

    def __len__(self) -> int:
        return len(self._words)

    def __contains__(self, word: str) -> bool:
        return self._key(word) in self._words

    def is_dictionary_word(self, word: str) -> bool:
        """Membership after stripping punctuation.

        Tokens made only of punctuation have nothing to look up and count as
        dictionary words.
        """
        core = strip_punctuation(word)
        return not core or core in self


@dataclass(frozen=True)
class Candidate:
    word: str
    c_mod: float
    source_tag: str = ""
    raw_conf: float | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.c_mod):
            raise ValueError(f"c_mod must be finite, got {self.c_mod!r}")


@dataclass(frozen=True)
class VoteResult:
    winner: str
    score: float
    tally: dict[str, float]
    counts: dict[str, int]
    penalized: tuple[bool, ...]


def vote(
    candidates: Sequence[Candidate],
    lexicon: Lexicon | None = None,
    penalty: float = 0.0,
) -> VoteResult:
    """Pick the word maximising ``sum(c_mod) / sqrt(n)`` over its supporters.

    Candidates whose punctuation-stripped word is not in ``lexicon`` lose
    ``penalty`` first. Ties go to the word with more supporters, then to the
    lexicographically smallest word.
    """
    if not candidates:
        raise ValueError("cannot vote on an empty candidate list")
    if penalty < 0:
        raise ValueError("penalty must be non-negative")
    if penalty > 0 and not lexicon:
        raise ValueError("a non-zero penalty needs a non-empty lexicon")

    grouped: dict[str, list[float]] = {}
    penalized = []
    for cand in candidates:
        miss = penalty > 0 and not lexicon.is_dictionary_word(cand.word)
        penalized.append(miss)
        grouped.setdefault(cand.word, []).append(cand.c_mod - penalty if miss else cand.c_mod)

    # fsum is exact, so the score does not depend on candidate order.
    tally = {w: math.fsum(cs) / math.sqrt(len(cs)) for w, cs in grouped.items()}
    counts = {w: len(cs) for w, cs in grouped.items()}
    winner = min(tally, key=lambda w: (-tally[w], -counts[w], w))
    return VoteResult(winner, tally[winner], tally, counts, tuple(penalized))


def iou(a: BBox, b: BBox) -> float:
    iw = min(a.right, b.right) - max(a.left, b.left)
    ih = min(a.bottom, b.bottom) - max(a.top, b.top)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    def cols(boxes):
        arr = np.array([(b.left, b.top, b.right, b.bottom) for b in boxes], dtype=np.int64)
        return arr.reshape(-1, 4).T

    al, at, ar, ab = cols(boxes_a)
    bl, bt, br, bb = cols(boxes_b)
    iw = np.minimum(ar[:, None], br[None, :]) - np.maximum(al[:, None], bl[None, :])
    ih = np.minimum(ab[:, None], bb[None, :]) - np.maximum(at[:, None], bt[None, :])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (ar - al) * (ab - at)
    area_b = (br - bl) * (bb - bt)
    return inter / (area_a[:, None] + area_b[None, :] - inter)


@dataclass(frozen=True)
class Match:
    master_index: int
    other_index: int
    iou: float


def align_words(master: PageRec, other: PageRec, iou_threshold: float = 0.5) -> list[Match]:
    """One-to-one greedy matching of word boxes, best overlap first.

    Indices refer to the reading-order word lists. Pairs below
    ``iou_threshold`` never match; ties are taken in (master, other) index
    order. Returned matches are sorted by master index.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must lie in (0, 1]")
    m_words, o_words = master.words, other.words
    if not m_words or not o_words:
        return []
    overlap = _iou_matrix([w.bbox for w in m_words], [w.bbox for w in o_words])
    mi, oi = np.nonzero(overlap >= iou_threshold)
    order = np.lexsort((oi, mi, -overlap[mi, oi]))
    used_m: set[int] = set()
    used_o: set[int] = set()
    matches = []
    for k in order:
        i, j = int(mi[k]), int(oi[k])
        if i in used_m or j in used_o:
            continue
        used_m.add(i)
        used_o.add(j)
        matches.append(Match(i, j, float(overlap[i, j])))
    return sorted(matches, key=lambda m: m.master_index)


# ---------------------------------------------------------------------------
# Merging


@dataclass(frozen=True)
class MethodOutput:
    method_tag: str
    page: PageRec


@dataclass(frozen=True)
class EnsembleConfig:
    master_tag: str = AUTO
    dpi_profile: int = 60
    iou_threshold: float = 0.5
    lexicon_penalty: float = 30.0
    cmod: CmodParams | None = None

    def __post_init__(self) -> None:
        if not 0 < self.iou_threshold <= 1:
            raise ConfigError("iou_threshold must lie in (0, 1]")
        if self.lexicon_penalty < 0:
            raise ConfigError("lexicon_penalty must be non-negative")

    @property
    def cmod_params(self) -> CmodParams:
        if self.cmod is not None:
            return self.cmod
        try:
            return CMOD_PROFILES[self.dpi_profile]
        except KeyError:
            raise ConfigError(f"no c_mod profile for {self.dpi_profile} dpi") from None


def select_master(dpi_profile: int, available_tags: Iterable[str], override: str = AUTO) -> str:
    """Pick the master output: an explicit override, the sole output when
    there is only one, else the default for the dpi profile."""
    tags = set(available_tags)
    if override and override != AUTO:
        tag = override
    elif len(tags) == 1:
        (tag,) = tags
    elif dpi_profile in DEFAULT_MASTERS:
        tag = DEFAULT_MASTERS[dpi_profile]
    else:
        raise ConfigError(f"no default master for {dpi_profile} dpi; choose one explicitly")
    if tag not in tags:
        raise ConfigError(f"master output {tag!r} not among {sorted(tags)}")
    return tag


@dataclass(frozen=True)
class CandidateRecord:
    source_tag: str
    text: str
    raw_conf: float
    c_mod: float
    penalized: bool
    iou: float


@dataclass(frozen=True)
class WordReport:
    index: int
    bbox: BBox
    master_text: str
    candidates: tuple[CandidateRecord, ...]
    tally: dict[str, float]
    winner: str
    score: float

    @property
    def unmatched(self) -> bool:
        """True when no other output offered a candidate for this word."""
        return len(self.candidates) == 1

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "bbox": [self.bbox.left, self.bbox.top, self.bbox.width, self.bbox.height],
            "master_text": self.master_text,
            "candidates": [
                {
                    "tag": c.source_tag,
                    "text": c.text,
                    "conf": c.raw_conf,
                    "c_mod": c.c_mod,
                    "penalized": c.penalized,
                    "iou": c.iou,
                }
                for c in self.candidates
            ],
            "tally": dict(sorted(self.tally.items())),
            "winner": self.winner,
            "score": self.score,
            "unmatched": self.unmatched,
        }


@dataclass(frozen=True)
class MergeResult:
    page: PageRec
    master_tag: str
    words: tuple[WordReport, ...] = field(default=())

    @property
    def text(self) -> str:
        return self.page.text

    def report(self) -> dict:
        return {
            "master": self.master_tag,
            "changed": sum(w.winner != w.master_text for w in self.words),
            "words": [w.to_dict() for w in self.words],
        }


def merge(
    outputs: Sequence[MethodOutput],
    config: EnsembleConfig = EnsembleConfig(),
    lexicon: Lexicon | None = None,
) -> MergeResult:
    """Patch the master output word by word with the ensemble vote.

    The merged page keeps the master's boxes, ids and word order; each
    word's confidence becomes the highest raw confidence among the
    candidates that voted for the winner.
    """
    if not outputs:
        raise ValueError("nothing to merge")
    by_tag: dict[str, PageRec] = {}
    for out in outputs:
        if out.method_tag in by_tag:
            raise ValueError(f"duplicate method tag {out.method_tag!r}")
        by_tag[out.method_tag] = out.page
    master_tag = select_master(config.dpi_profile, by_tag, config.master_tag)
    params = config.cmod_params
    penalty = config.lexicon_penalty
    if penalty > 0 and not lexicon:
        raise ConfigError("a non-zero lexicon penalty needs a non-empty lexicon")

    master = by_tag[master_tag]
    m_words = master.words
    # candidates[i] holds (tag, word, iou) offered for master word i
    offered: list[list[tuple[str, WordRec, float]]] = [
        [(master_tag, w, 1.0)] for w in m_words
    ]
    for tag in sorted(by_tag):
        if tag == master_tag:
            continue
        o_words = by_tag[tag].words
        for m in align_words(master, by_tag[tag], config.iou_threshold):
            offered[m.master_index].append((tag, o_words[m.other_index], m.iou))

    reports = []
    winners = []
    confs = []
    for i, (mword, offers) in enumerate(zip(m_words, offered)):
        cands = [
            Candidate(w.text, modified_confidence(w.conf, params), tag, w.conf)
            for tag, w, _ in offers
        ]
        result = vote(cands, lexicon, penalty)
        records = tuple(
            CandidateRecord(c.source_tag, c.word, c.raw_conf, c.c_mod, pen, ov)
            for c, pen, (_, _, ov) in zip(cands, result.penalized, offers)
        )
        winners.append(result.winner)
        confs.append(max(c.raw_conf for c in cands if c.word == result.winner))
        reports.append(
            WordReport(i, mword.bbox, mword.text, records, result.tally, result.winner, result.score)
        )
    return MergeResult(master.with_texts(winners, confs), master_tag, tuple(reports))
