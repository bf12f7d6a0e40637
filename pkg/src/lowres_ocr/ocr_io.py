"""Recognition results: data model, TSV parsing/serialisation, and backends.

The interchange format is the 12-column TSV that Tesseract writes with its
``tsv`` config::

    level page_num block_num par_num line_num word_num left top width height conf text

Rows with ``level == 5`` are words; the rest are structural (page, block,
paragraph, line) and carry ``conf == -1``.
"""

from __future__ import annotations

import logging
import shlex
import subprocess
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, Union

from .raster import GrayImage, write_image

log = logging.getLogger(__name__)

TSV_COLUMNS = (
    "level",
    "page_num",
    "block_num",
    "par_num",
    "line_num",
    "word_num",
    "left",
    "top",
    "width",
    "height",
    "conf",
    "text",
)
TSV_HEADER = "\t".join(TSV_COLUMNS)

# Observed ceiling of engine word confidences; larger values are suspicious.
MAX_OBSERVED_CONF = 97.0


class TsvParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class BackendError(RuntimeError):
    def __init__(self, method_tag: str, message: str):
        super().__init__(f"[{method_tag}] {message}")
        self.method_tag = method_tag


@dataclass(frozen=True, order=True)
class BBox:
    """Axis-aligned box: ``left``/``top`` corner plus positive size."""

    left: int
    top: int
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.left < 0 or self.top < 0:
            raise ValueError(f"negative box origin in {self}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"box must have positive size, got {self}")

    @property
    def right(self) -> int:
        return self.left + self.width

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    def union(self, other: "BBox") -> "BBox":
        left, top = min(self.left, other.left), min(self.top, other.top)
        return BBox(
            left,
            top,
            max(self.right, other.right) - left,
            max(self.bottom, other.bottom) - top,
        )


@dataclass(frozen=True)
class WordRec:
    text: str
    bbox: BBox
    conf: float
    block_num: int = 1
    par_num: int = 1
    line_num: int = 1
    word_num: int = 1

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("word text must not be blank")
        if any(ch in self.text for ch in "\t\n\r"):
            raise ValueError(f"word text may not contain tabs or newlines: {self.text!r}")
        if not (0.0 <= self.conf <= 100.0):
            raise ValueError(f"confidence {self.conf!r} outside [0, 100]")
        if min(self.ids) < 1:
            raise ValueError(f"word ids must be positive, got {self.ids}")
        if self.conf > MAX_OBSERVED_CONF:
            warnings.warn(
                f"word {self.text!r} has confidence {self.conf} above the usual "
                f"engine maximum of {MAX_OBSERVED_CONF:g}",
                stacklevel=2,
            )

    @property
    def ids(self) -> tuple[int, int, int, int]:
        return (self.block_num, self.par_num, self.line_num, self.word_num)

    @property
    def line_key(self) -> tuple[int, int, int]:
        return (self.block_num, self.par_num, self.line_num)


@dataclass(frozen=True)
class LineRec:
    block_num: int
    par_num: int
    line_num: int
    words: tuple[WordRec, ...]

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.block_num, self.par_num, self.line_num)

    @property
    def text(self) -> str:
        return " ".join(w.text for w in self.words)

    @property
    def bbox(self) -> BBox:
        box = self.words[0].bbox
        for w in self.words[1:]:
            box = box.union(w.bbox)
        return box


@dataclass(frozen=True)
class PageRec:
    """One recognised page. ``width``/``height`` are 0 when unknown."""

    width: int = 0
    height: int = 0
    lines: tuple[LineRec, ...] = ()
    page_num: int = 1

    @classmethod
    def from_words(
        cls, words: Iterable[WordRec], width: int = 0, height: int = 0, page_num: int = 1
    ) -> "PageRec":
        """Group words into lines and sort everything into reading order."""
        by_line: dict[tuple[int, int, int], list[WordRec]] = {}
        seen: set[tuple[int, int, int, int]] = set()
        for w in words:
            if w.ids in seen:
                raise ValueError(f"duplicate word ids {w.ids}")
            seen.add(w.ids)
            by_line.setdefault(w.line_key, []).append(w)
        lines = tuple(
            LineRec(*key, words=tuple(sorted(ws, key=lambda w: w.word_num)))
            for key, ws in sorted(by_line.items())
        )
        return cls(width, height, lines, page_num)

    @property
    def words(self) -> list[WordRec]:
        return [w for line in self.lines for w in line.words]

    @property
    def text(self) -> str:
        return "\n".join(line.text for line in self.lines)

    def with_texts(
        self, texts: Sequence[str], confs: Sequence[float] | None = None
    ) -> "PageRec":
        """Copy of the page with word texts (and optionally confidences)
        replaced in reading order; boxes and ids are kept."""
        words = self.words
        if len(texts) != len(words) or (confs is not None and len(confs) != len(words)):
            raise ValueError("replacement count does not match the page's word count")
        new_confs = confs if confs is not None else [w.conf for w in words]
        it = iter(zip(texts, new_confs))
        lines = tuple(
            LineRec(
                line.block_num,
                line.par_num,
                line.line_num,
                tuple(_replace(w, *next(it)) for w in line.words),
            )
            for line in self.lines
        )
        return PageRec(self.width, self.height, lines, self.page_num)


def _replace(word: WordRec, text: str, conf: float) -> WordRec:
    if text == word.text and conf == word.conf:
        return word
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return WordRec(text, word.bbox, conf, *word.ids)


# ---------------------------------------------------------------------------
# TSV


def _int_field(value: str, name: str, lineno: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise TsvParseError(lineno, f"{name} is not an integer: {value!r}") from None


def parse_tsv(text: str) -> PageRec:
    """Parse engine TSV output into a :class:`PageRec`.

    Word rows with blank text are skipped. Rows may come in any order; the
    result is re-sorted by (block, paragraph, line, word).
    """
    rows = text.split("\n")
    if not rows or not rows[0].rstrip("\r").startswith("level"):
        raise TsvParseError(1, "missing TSV header row")
    header = rows[0].rstrip("\r").split("\t")
    if tuple(header) != TSV_COLUMNS:
        raise TsvParseError(1, f"unexpected header columns {header}")

    width = height = 0
    page_num: int | None = None
    words: list[WordRec] = []
    for lineno, raw in enumerate(rows[1:], start=2):
        raw = raw.rstrip("\r")
        if not raw.strip():
            continue
        fields = raw.split("\t", 11)
        if len(fields) == 11:
            fields.append("")
        if len(fields) < 12:
            raise TsvParseError(lineno, f"expected 12 columns, found {len(fields)}")
        ints = [_int_field(v, name, lineno) for v, name in zip(fields[:10], TSV_COLUMNS)]
        level, pnum, block, par, line, wnum, left, top, w, h = ints
        try:
            conf = float(fields[10])
        except ValueError:
            raise TsvParseError(lineno, f"conf is not a number: {fields[10]!r}") from None
        if not (-1.0 <= conf <= 100.0):
            raise TsvParseError(lineno, f"conf {conf} outside [-1, 100]")
        if not 1 <= level <= 5:
            raise TsvParseError(lineno, f"unknown level {level}")
        if min(left, top, w, h) < 0:
            raise TsvParseError(lineno, "negative coordinate")
        if page_num is None:
            page_num = pnum
        elif pnum != page_num:
            raise TsvParseError(lineno, f"multiple pages ({page_num} and {pnum}) in one TSV")
        if level == 1:
            width, height = w, h
            continue
        if level != 5:
            continue
        word_text = fields[11]
        if not word_text.strip():
            continue
        if conf < 0:
            raise TsvParseError(lineno, f"word {word_text!r} has no confidence")
        try:
            words.append(WordRec(word_text, BBox(left, top, w, h), conf, block, par, line, wnum))
        except ValueError as exc:
            raise TsvParseError(lineno, str(exc)) from None
    try:
        return PageRec.from_words(words, width, height, page_num or 1)
    except ValueError as exc:
        raise TsvParseError(len(rows), str(exc)) from None


def _format_conf(conf: float) -> str:
    if conf == int(conf):
        return str(int(conf))
    return repr(float(conf))


def _row(level, page, block, par, line, word, box: BBox | None, conf, text="") -> str:
    coords = (0, 0, 0, 0) if box is None else (box.left, box.top, box.width, box.height)
    cells = (level, page, block, par, line, word, *coords)
    return "\t".join(str(c) for c in cells) + f"\t{conf}\t{text}"


def serialize_tsv(page: PageRec) -> str:
    """Write ``page`` in the engine's TSV layout (header plus nested rows)."""
    out = [TSV_HEADER]
    if page.lines or page.width or page.height:
        out.append(
            "\t".join(
                str(v) for v in (1, page.page_num, 0, 0, 0, 0, 0, 0, page.width, page.height)
            )
            + "\t-1\t"
        )
    p = page.page_num
    prev_block = prev_par = None
    for i, line in enumerate(page.lines):
        if line.block_num != prev_block:
            same_block = [ln for ln in page.lines if ln.block_num == line.block_num]
            out.append(_row(2, p, line.block_num, 0, 0, 0, _union(same_block), -1))
            prev_block, prev_par = line.block_num, None
        if line.par_num != prev_par:
            same_par = [
                ln for ln in page.lines if ln.block_num == line.block_num and ln.par_num == line.par_num
            ]
            out.append(_row(3, p, line.block_num, line.par_num, 0, 0, _union(same_par), -1))
            prev_par = line.par_num
        out.append(_row(4, p, *line.key, 0, line.bbox, -1))
        for w in line.words:
            out.append(_row(5, p, *w.ids, w.bbox, _format_conf(w.conf), w.text))
    return "\n".join(out) + "\n"


def _union(lines: Sequence[LineRec]) -> BBox:
    box = lines[0].bbox
    for ln in lines[1:]:
        box = box.union(ln.bbox)
    return box


def read_tsv(path: str | Path) -> PageRec:
    return parse_tsv(Path(path).read_text(encoding="utf-8"))


def write_tsv(page: PageRec, path: str | Path) -> None:
    Path(path).write_text(serialize_tsv(page), encoding="utf-8", newline="\n")


# ---------------------------------------------------------------------------
# Backends


@dataclass(frozen=True)
class CommandTemplate:
    """Run an external engine once per image.

    ``argv`` may contain the placeholders ``{input}`` (image path),
    ``{output_base}`` (output path without extension) and ``{method}``.
    The engine must write ``{output_base}{output_suffix}``.
    """

    argv: tuple[str, ...]
    output_suffix: str = ".tsv"
    timeout: float = 120.0

    @classmethod
    def parse(cls, template: str, **kwargs) -> "CommandTemplate":
        return cls(tuple(shlex.split(template)), **kwargs)


@dataclass(frozen=True)
class ReplayDirectory:
    """Serve stored TSV files named ``<method_tag><suffix>`` from ``path``."""

    path: Path
    suffix: str = ".tsv"

    def file_for(self, method_tag: str) -> Path:
        return Path(self.path) / f"{method_tag}{self.suffix}"


BackendSpec = Union[CommandTemplate, ReplayDirectory]


@dataclass
class BackendRun:
    """Diagnostics of one backend invocation."""

    method_tag: str
    argv: list[str] = field(default_factory=list)
    returncode: int | None = None
    stdout: str = ""
    stderr: str = ""
    raw_output: str = ""


def run_backend(
    img: GrayImage | None,
    backend: BackendSpec,
    method_tag: str,
    diagnostics: list[BackendRun] | None = None,
) -> PageRec:
    """Recognise ``img`` and return the parsed page.

    For a :class:`ReplayDirectory` the image is ignored. Exit status and raw
    output are logged and, when ``diagnostics`` is given, appended to it.
    """
    run = BackendRun(method_tag)
    if diagnostics is not None:
        diagnostics.append(run)
    if isinstance(backend, ReplayDirectory):
        path = backend.file_for(method_tag)
        try:
            run.raw_output = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise BackendError(method_tag, f"no replay output at {path}: {exc}") from None
    elif isinstance(backend, CommandTemplate):
        if img is None:
            raise BackendError(method_tag, "command backend needs an image")
        run.raw_output = _run_command(img, backend, method_tag, run)
    else:
        raise TypeError(f"not a backend: {backend!r}")
    try:
        return parse_tsv(run.raw_output)
    except TsvParseError as exc:
        raise BackendError(method_tag, f"unparseable output: {exc}") from None


def _run_command(img: GrayImage, backend: CommandTemplate, tag: str, run: BackendRun) -> str:
    with tempfile.TemporaryDirectory(prefix="lowres-ocr-") as tmp:
        image_path = Path(tmp) / f"{tag}.png"
        output_base = Path(tmp) / f"{tag}.out"
        write_image(img, image_path)
        subs = {"input": str(image_path), "output_base": str(output_base), "method": tag}
        try:
            run.argv = [arg.format(**subs) for arg in backend.argv]
        except (KeyError, IndexError) as exc:
            raise BackendError(tag, f"bad placeholder in command template: {exc}") from None
        log.info("[%s] running %s", tag, shlex.join(run.argv))
        try:
            proc = subprocess.run(
                run.argv, capture_output=True, text=True, timeout=backend.timeout
            )
        except subprocess.TimeoutExpired:
            raise BackendError(tag, f"timed out after {backend.timeout:g} s") from None
        except OSError as exc:
            raise BackendError(tag, f"could not start engine: {exc}") from None
        run.returncode, run.stdout, run.stderr = proc.returncode, proc.stdout, proc.stderr
        log.debug("[%s] exit %d\nstdout:\n%s\nstderr:\n%s", tag, proc.returncode, proc.stdout, proc.stderr)
        if proc.returncode != 0:
            raise BackendError(tag, f"engine exited with status {proc.returncode}: {proc.stderr.strip()}")
        out_path = Path(f"{output_base}{backend.output_suffix}")
        try:
            return out_path.read_text(encoding="utf-8")
        except OSError:
            raise BackendError(tag, f"engine produced no output file {out_path.name}") from None

