"""Command-line entry point: ``lowres-ocr <command> ...``.

Exit codes: 0 success, 1 usage/configuration, 2 I/O, 3 backend failure,
4 evaluation error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Sequence

from . import calibrate, ensemble, metrics, ocr_io, raster

log = logging.getLogger("lowres_ocr")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_BACKEND, EXIT_EVAL = 0, 1, 2, 3, 4

BACKEND_ENV = "LOWRES_OCR_BACKEND"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _read_text(path: Path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}", EXIT_IO) from None


def _load_image(path: Path, dpi: int | None) -> raster.GrayImage:
    try:
        return raster.read_image(path, dpi)
    except OSError as exc:
        raise CliError(f"cannot read image {path}: {exc}", EXIT_IO) from None
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _save_image(img: raster.GrayImage, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        raster.write_image(img, path)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from None


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


# ---------------------------------------------------------------------------
# degrade


def cmd_degrade(args) -> int:
    rotate = None if args.no_rotate else raster.RotationSpec(
        probability=args.rotate_prob, std_deg=args.rotate_std
    )
    for n, path in enumerate(args.inputs):
        img = _load_image(path, args.dpi)
        spec = raster.DegradeSpec(args.to_dpi, args.noise_sigma, rotate, args.seed + n)
        try:
            low = raster.degrade(img, spec)
        except ValueError as exc:
            raise CliError(f"{path}: {exc}", EXIT_USAGE) from None
        out = (args.output_dir or path.parent) / f"{path.stem}.{args.to_dpi}dpi.png"
        _save_image(low, out)
        print(json.dumps({"input": str(path), "output": str(out), **dataclasses.asdict(spec)}))
    return EXIT_OK


# ---------------------------------------------------------------------------
# upscale


def _methods(tags: Sequence[str]) -> list[raster.UpscaleMethod]:
    try:
        return [raster.method_from_tag(t) for t in tags]
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _default_scale(img: raster.GrayImage, scale: float | None) -> float:
    return scale if scale is not None else raster.REFERENCE_DPI / img.dpi


def cmd_upscale(args) -> int:
    if args.all == bool(args.method):
        raise CliError("give either --all or at least one --method", EXIT_USAGE)
    tags = list(raster.CANONICAL_TAGS) if args.all else args.method
    methods = _methods(tags)
    img = _load_image(args.input, args.dpi)
    scale = _default_scale(img, args.scale)
    for tag, method in zip(tags, methods):
        out = (args.output_dir or args.input.parent) / f"{args.input.stem}.{tag}.png"
        _save_image(raster.apply_upscale(img, method, scale), out)
        print(out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# recognize / merge


def _lexicon(args) -> tuple[ensemble.Lexicon | None, float]:
    penalty = args.penalty
    if args.lexicon is None:
        if penalty > 0:
            log.warning("no lexicon given; dictionary penalty disabled")
        return None, 0.0
    try:
        lex = ensemble.Lexicon.from_file(args.lexicon, case_insensitive=not args.case_sensitive)
    except OSError as exc:
        raise CliError(f"cannot read lexicon: {exc}", EXIT_IO) from None
    if not lex and penalty > 0:
        raise CliError("lexicon is empty but the penalty is non-zero", EXIT_USAGE)
    return lex, penalty


def _run_merge(outputs: list[ensemble.MethodOutput], args) -> ensemble.MergeResult:
    lexicon, penalty = _lexicon(args)
    try:
        config = ensemble.EnsembleConfig(
            master_tag=args.master,
            dpi_profile=args.dpi_profile,
            iou_threshold=args.iou,
            lexicon_penalty=penalty,
        )
        return ensemble.merge(sorted(outputs, key=lambda o: o.method_tag), config, lexicon)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None


def _write_merge(result: ensemble.MergeResult, out_dir: Path) -> None:
    _write_text(out_dir / "merged.txt", result.text + "\n")
    _write_text(out_dir / "merged.tsv", ocr_io.serialize_tsv(result.page))
    _write_text(out_dir / "report.json", _dumps(result.report()))


def _backend(args) -> ocr_io.BackendSpec:
    if args.replay is not None:
        return ocr_io.ReplayDirectory(args.replay)
    template = args.backend_cmd or os.environ.get(BACKEND_ENV)
    if not template:
        raise CliError(f"no backend: pass --replay, --backend-cmd or set {BACKEND_ENV}", EXIT_USAGE)
    return ocr_io.CommandTemplate.parse(template, timeout=args.timeout)


def cmd_recognize(args) -> int:
    backend = _backend(args)
    tags = [t for t in args.methods.split(",") if t] if args.methods else list(raster.CANONICAL_TAGS)
    if not tags:
        raise CliError("method list is empty", EXIT_USAGE)
    methods = _methods(tags)

    img = None
    if args.image is not None:
        img = _load_image(args.image, args.dpi)
        if args.dpi_profile is None:
            args.dpi_profile = img.dpi
    elif isinstance(backend, ocr_io.CommandTemplate):
        raise CliError("an input image is required with a command backend", EXIT_USAGE)
    if args.dpi_profile is None:
        args.dpi_profile = 60
    try:
        # fixed before any backend runs, so a failed master is never replaced
        args.master = ensemble.select_master(args.dpi_profile, tags, args.master)
    except ensemble.ConfigError as exc:
        raise CliError(str(exc), EXIT_USAGE) from None

    def recognise(tag: str, method: raster.UpscaleMethod) -> ocr_io.PageRec:
        page_img = img
        if img is not None and isinstance(backend, ocr_io.CommandTemplate) and not args.engine_upscales:
            page_img = raster.apply_upscale(img, method, _default_scale(img, args.scale))
        return ocr_io.run_backend(page_img, backend, tag)

    jobs = args.jobs or len(tags)
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {tag: pool.submit(recognise, tag, m) for tag, m in zip(tags, methods)}
    outputs, failed = [], []
    for tag in sorted(futures):
        try:
            outputs.append(ensemble.MethodOutput(tag, futures[tag].result()))
        except ocr_io.BackendError as exc:
            failed.append(tag)
            log.error("%s", exc)
    if failed and not (args.skip_failed and outputs):
        raise CliError(f"backend failed for: {', '.join(failed)}", EXIT_BACKEND)

    out_dir = args.output_dir
    for o in outputs:
        _write_text(out_dir / "tsv" / f"{o.method_tag}.tsv", ocr_io.serialize_tsv(o.page))
    try:
        result = _run_merge(outputs, args)
    except CliError as exc:
        if failed:
            exc.code = EXIT_BACKEND
        raise
    _write_merge(result, out_dir)
    print(result.text)
    return EXIT_OK


def _tsv_inputs(paths: Sequence[Path]) -> list[Path]:
    files = []
    for p in paths:
        files.extend(sorted(p.glob("*.tsv")) if p.is_dir() else [p])
    return files


def cmd_merge(args) -> int:
    outputs = []
    for path in _tsv_inputs(args.tsv):
        try:
            outputs.append(ensemble.MethodOutput(path.stem, ocr_io.parse_tsv(_read_text(path))))
        except ocr_io.TsvParseError as exc:
            raise CliError(f"{path}: {exc}", EXIT_IO) from None
    if not outputs:
        raise CliError("no TSV inputs", EXIT_USAGE)
    if args.dpi_profile is None:
        args.dpi_profile = 60
    result = _run_merge(outputs, args)
    _write_merge(result, args.output_dir)
    print(result.text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate / calibrate


def _hyp_text(path: Path) -> str:
    text = _read_text(path)
    if path.suffix == ".tsv":
        try:
            return ocr_io.parse_tsv(text).text
        except ocr_io.TsvParseError as exc:
            raise CliError(f"{path}: {exc}", EXIT_IO) from None
    return text


def _read_manifest(path: Path) -> list[dict]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise CliError(f"cannot read manifest: {exc}", EXIT_IO) from None
    base = path.parent
    for row in rows:
        for key in ("gt", "hyp"):
            if not row.get(key):
                raise CliError(f"manifest row missing {key!r}: {row}", EXIT_USAGE)
            row[key] = base / row[key]
    return rows


def cmd_evaluate(args) -> int:
    if args.manifest is not None:
        rows = _read_manifest(args.manifest)
    elif args.gt is not None and args.hyp is not None:
        rows = [{"gt": args.gt, "hyp": args.hyp}]
    else:
        raise CliError("give GT and HYP files, or --manifest", EXIT_USAGE)
    group_by = [g for g in args.group_by.split(",") if g] if args.group_by else []
    entries = [
        metrics.CorpusEntry(_read_text(r["gt"]), _hyp_text(r["hyp"]), r) for r in rows
    ]
    try:
        table = metrics.evaluate_corpus(entries, group_by)
    except ValueError as exc:
        raise CliError(str(exc), EXIT_EVAL) from None
    out = table.to_csv()
    if args.output is not None:
        _write_text(args.output, out)
    print(out, end="")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    if args.manifest is not None:
        rows = _read_manifest(args.manifest)
    else:
        if args.gt is None or not args.tsv:
            raise CliError("give --gt with TSV files, or --manifest", EXIT_USAGE)
        rows = [{"gt": args.gt, "hyp": p, "method": p.stem} for p in args.tsv]
    words = []
    for r in rows:
        try:
            page = ocr_io.parse_tsv(_read_text(r["hyp"]))
        except ocr_io.TsvParseError as exc:
            raise CliError(f"{r['hyp']}: {exc}", EXIT_IO) from None
        tag = r.get("method") or Path(r["hyp"]).stem
        words.extend(calibrate.score_words(page, _read_text(r["gt"]), tag))
    if not words:
        raise CliError("no recognised words to score", EXIT_EVAL)
    if args.by_method:
        out = calibrate.tables_to_csv(calibrate.bin_by_method(words))
    else:
        out = calibrate.bin_confidences(words).to_csv()
    if args.output is not None:
        _write_text(args.output, out)
    print(out, end="")
    return EXIT_OK


# ---------------------------------------------------------------------------


def _add_merge_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dpi-profile", type=int, default=None, help="60 or 75 (default: image dpi, else 60)")
    p.add_argument("--master", default=ensemble.AUTO, help="master method tag or 'auto'")
    p.add_argument("--iou", type=float, default=0.5, help="box overlap needed to match words")
    p.add_argument("--penalty", type=float, default=30.0, help="c_mod penalty for non-dictionary words")
    p.add_argument("--lexicon", type=Path, help="word list, one word per line")
    p.add_argument("--case-sensitive", action="store_true", help="case-sensitive lexicon lookup")
    p.add_argument("-o", "--output-dir", type=Path, required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="lowres-ocr",
        description="Upscale, recognise, merge and score low-resolution page images.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("degrade", help="downsample 300 dpi pages with noise and skew")
    p.add_argument("inputs", nargs="+", type=Path)
    p.add_argument("--to-dpi", type=int, required=True)
    p.add_argument("--dpi", type=int, help="source dpi when the file does not record it")
    p.add_argument("--noise-sigma", type=float, default=0.02)
    p.add_argument("--no-rotate", action="store_true")
    p.add_argument("--rotate-prob", type=float, default=0.5)
    p.add_argument("--rotate-std", type=float, default=0.5, help="degrees")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output-dir", type=Path)
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("upscale", help="enlarge a low-resolution page")
    p.add_argument("input", type=Path)
    p.add_argument("--method", action="append", help="method tag (repeatable)")
    p.add_argument("--all", action="store_true", help="all seven canonical methods")
    p.add_argument("--scale", type=float, help="default: 300 / image dpi")
    p.add_argument("--dpi", type=int)
    p.add_argument("-o", "--output-dir", type=Path)
    p.set_defaults(func=cmd_upscale)

    p = sub.add_parser("recognize", help="upscale, recognise per method, and merge")
    p.add_argument("image", type=Path, nargs="?")
    p.add_argument("--dpi", type=int)
    p.add_argument("--methods", help="comma-separated tags (default: all seven)")
    p.add_argument("--scale", type=float)
    p.add_argument("--backend-cmd", help="engine command with {input} {output_base} {method}")
    p.add_argument("--replay", type=Path, help="directory of stored <tag>.tsv outputs")
    p.add_argument("--engine-upscales", action="store_true", help="hand the engine the original image")
    p.add_argument("--timeout", type=float, default=120.0, help="seconds per page")
    p.add_argument("--jobs", type=int, default=0, help="parallel backend runs (default: one per method)")
    p.add_argument("--skip-failed", action="store_true")
    _add_merge_options(p)
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("merge", help="merge stored TSV outputs (tag = file stem)")
    p.add_argument("tsv", nargs="+", type=Path, help="TSV files or directories")
    _add_merge_options(p)
    p.set_defaults(func=cmd_merge)

    p = sub.add_parser("evaluate", help="character/word level accuracy")
    p.add_argument("gt", type=Path, nargs="?")
    p.add_argument("hyp", type=Path, nargs="?")
    p.add_argument("--manifest", type=Path, help="CSV with gt,hyp and grouping columns")
    p.add_argument("--group-by", default="", help="comma-separated manifest columns")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("calibrate", help="bin word confidences against correctness")
    p.add_argument("tsv", nargs="*", type=Path)
    p.add_argument("--gt", type=Path)
    p.add_argument("--manifest", type=Path, help="CSV with gt,hyp[,method]")
    p.add_argument("--by-method", action="store_true")
    p.add_argument("--output", type=Path)
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except CliError as exc:
        print(f"lowres-ocr: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
