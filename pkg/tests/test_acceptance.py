"""Acceptance suite: one test per criterion.

Run ``pytest tests/test_acceptance.py -v``; the terminal summary prints one
``[PASS]``/``[FAIL]``/``[SKIP]`` line per criterion.
"""

from __future__ import annotations

import math
import random
import shutil
import sys
import time
import warnings

import numpy as np
import pytest

from lowres_ocr import cli
from lowres_ocr.ensemble import (
    Candidate,
    EnsembleConfig,
    Lexicon,
    MethodOutput,
    merge,
    modified_confidence,
    strip_punctuation,
    vote,
)
from lowres_ocr.metrics import evaluate, levenshtein
from lowres_ocr.ocr_io import BBox, PageRec, WordRec, parse_tsv, read_tsv, serialize_tsv
from lowres_ocr.raster import (
    CANONICAL_METHODS,
    CANONICAL_TAGS,
    DegradeSpec,
    GrayImage,
    apply_upscale,
    box_downsample,
    degrade,
    gaussian_blur,
    gaussian_kernel,
    upscale_bicubic,
    upscale_bilinear,
    write_image,
)
from lowres_ocr.calibrate import LOW_BIN, ScoredWord, bin_confidences

from conftest import FIXTURES, render_text
from oracles import dense_interpolate, keys_cubic, levenshtein_table, reference_vote
from synth import VOCAB, noisy_outputs, write_replay

criterion = pytest.mark.criterion


@criterion(1, "modified confidence matches the piecewise formula")
def test_c01_modified_confidence():
    assert abs(modified_confidence(0) - 30.0) < 1e-12
    assert abs(modified_confidence(60) - 60.0) < 1e-12
    assert abs(modified_confidence(80) - 71.0) < 1e-12
    assert abs(modified_confidence(97) - 99.9) < 1e-12
    for c in (79.9, 79.99, 79.999999):
        assert abs(modified_confidence(c) - (0.5 * c + 30)) < 1e-12 and modified_confidence(c) < 70
    for c in np.linspace(0, 100, 1001):
        expected = 0.5 * c + 30 if c < 80 else 1.7 * c - 65
        assert abs(modified_confidence(c) - expected) < 1e-12


@criterion(2, "voting agrees with a brute-force reference, permutation and scale invariant")
def test_c02_voting():
    lex = Lexicon(["cot", "cat"])
    assert vote([Candidate("cot", 40), Candidate("cot", 41), Candidate("cat", 80)], lex, 30).winner == "cat"

    rng = random.Random(2024)
    words = ["the", "tbe", "he", "the.", "qzx", "a"]
    lexicon_words = {"the", "he", "a"}
    lex = Lexicon(lexicon_words)
    near_ties = 0
    for trial in range(10_000):
        pairs = [(rng.choice(words), modified_confidence(rng.randint(0, 97))) for _ in range(rng.randint(1, 8))]
        penalty = rng.choice([0, 30])
        cands = [Candidate(w, c) for w, c in pairs]
        ref_word, ref_score = reference_vote(pairs, lexicon_words, penalty, strip_punctuation)
        got = vote(cands, lex, penalty)
        assert got.winner == ref_word and abs(got.score - ref_score) < 1e-9

        shuffled = cands[:]
        rng.shuffle(shuffled)
        assert vote(shuffled, lex, penalty).winner == got.winner

        # scale invariance is stated for the plain vote (no penalty)
        plain = vote(cands).winner
        k = 2.0 ** rng.randint(-6, 6) if trial % 2 else rng.uniform(0.01, 100)
        scaled = vote([Candidate(w, c * k) for w, c in pairs]).winner
        if scaled != plain:
            # only acceptable where two tallies are equal up to rounding
            tally = vote(cands).tally
            top = sorted(tally.values(), reverse=True)
            assert len(top) > 1 and math.isclose(top[0], top[1], rel_tol=1e-12)
            near_ties += 1
    assert near_ties < 10


@criterion(3, "constructed two-output fixture merges to the final 'Payment.\"' line")
def test_c03_split_word_fixture():
    master = read_tsv(FIXTURES / "split_word" / "nn-gauss-1.0.tsv")
    other = read_tsv(FIXTURES / "split_word" / "bicubic.tsv")
    lex = Lexicon.from_file(FIXTURES / "lexicon.txt")
    result = merge([MethodOutput("nn-gauss-1.0", master), MethodOutput("bicubic", other)], EnsembleConfig(), lex)
    last_line = result.text.splitlines()[-1]
    assert 'Payment."' in last_line.split()
    offered = {c.text for w in result.words for c in w.candidates}
    assert "Pa" not in offered and 'l"' not in offered
    assert "ledger" in result.text and "lcdger" not in result.text


@criterion(4, "merge unanimity and idempotence on 100 randomized pages")
def test_c04_unanimity_and_idempotence():
    lex = Lexicon(VOCAB)
    for seed in range(100):
        rng = random.Random(seed)
        _, pages = noisy_outputs(n_words=rng.randint(5, 60), n_outputs=3, seed=seed)
        page = pages[0]
        n = rng.randint(2, 7)
        outputs = [MethodOutput(tag, page) for tag in CANONICAL_TAGS[:n]]
        tags = [o.method_tag for o in outputs]
        master = "nn-gauss-1.0" if "nn-gauss-1.0" in tags else tags[0]
        unanimous = merge(outputs, EnsembleConfig(master_tag=master), lex)
        assert unanimous.text == page.text

        merged = merge([MethodOutput("nn-gauss-1.0", p) for p in pages[:1]] +
                       [MethodOutput("bicubic", pages[1]), MethodOutput("bilinear", pages[2])],
                       EnsembleConfig(), lex)
        again = merge([MethodOutput("nn-gauss-1.0", merged.page)], EnsembleConfig(), lex)
        assert again.text == merged.text


@criterion(5, "interpolation kernels: constants, ramps, kernel mass, box mean, identity, dense oracle")
def test_c05_kernels():
    rng = np.random.default_rng(5)
    const = GrayImage(np.full((9, 11), 0.37), 60)
    for method in CANONICAL_METHODS:
        for scale in (5.0, 4.0, 2.5):
            out = apply_upscale(const, method, scale)
            assert np.max(np.abs(out.pixels - 0.37)) <= 1e-9, method

    ramp = GrayImage(np.tile(0.1 + 0.05 * np.arange(12), (6, 1)), 60)
    for upscale, lo, hi in ((upscale_bilinear, 0, 11), (upscale_bicubic, 1, 9)):
        out = upscale(ramp, 4.0).pixels
        xs = (np.arange(out.shape[1]) + 0.5) / 4.0 - 0.5
        interior = (xs >= lo) & (xs <= hi)
        assert np.max(np.abs(out[:, interior] - (0.1 + 0.05 * xs[interior]))) <= 1e-12

    for sigma in (0.1, 0.5, 1.0, 1.5, 2.0, 3.7):
        assert abs(gaussian_kernel(sigma).sum() - 1.0) <= 1e-9

    big = GrayImage(rng.random((60, 90)), 300)
    assert abs(box_downsample(big, 5).pixels.mean() - big.pixels.mean()) <= 1e-12
    assert np.array_equal(gaussian_blur(big, 0).pixels, big.pixels)

    for _ in range(5):
        small = GrayImage(rng.random((8, 8)), 75)
        fast = upscale_bicubic(small, 4.0).pixels
        slow = dense_interpolate(small.pixels, fast.shape, 4.0, keys_cubic)
        assert np.max(np.abs(fast - slow)) <= 1e-6


@criterion(6, "edit distance matches a full-table oracle; normalisation folds quotes and dashes")
def test_c06_metrics():
    import itertools

    strings = ["".join(p) for n in range(7) for p in itertools.product("ab", repeat=n)]
    for a in strings:
        for b in strings:
            assert levenshtein(a, b) == levenshtein_table(a, b)
    rng = random.Random(6)
    for _ in range(1000):
        a = "".join(rng.choices("abcde ", k=rng.randint(0, 30)))
        b = "".join(rng.choices("abcde ", k=rng.randint(0, 30)))
        assert levenshtein(a, b) == levenshtein_table(a, b)
    assert levenshtein("kitten", "sitting") == 3
    r = evaluate("“Don’t—stop,” ‘she’ said – twice.", '"Don\'t-stop," \'she\' said - twice.')
    assert (r.cla_pct, r.wla_pct) == (100.0, 100.0)


def _random_page(rng: random.Random) -> PageRec:
    alphabet = "abcdefghijklmnopqrstuvwxyzABCXYZ0123456789.,;:'\"“”—-éüß€ "
    ids = set()
    while len(ids) < rng.randint(0, 15):
        ids.add((rng.randint(1, 3), rng.randint(1, 3), rng.randint(1, 5), rng.randint(1, 12)))
    words = []
    for block, par, line, num in ids:
        text = "".join(rng.choices(alphabet, k=rng.randint(1, 10))).strip() or "x"
        conf = rng.choice([float(rng.randint(0, 100)), round(rng.uniform(0, 100), rng.randint(0, 6))])
        box = BBox(rng.randint(0, 3000), rng.randint(0, 3000), rng.randint(1, 300), rng.randint(1, 90))
        words.append(WordRec(text, box, conf, block, par, line, num))
    return PageRec.from_words(words, rng.randint(0, 5000), rng.randint(0, 5000))


@criterion(7, "TSV parse/serialise round trip on random pages and engine-format fixtures")
def test_c07_tsv_round_trip():
    rng = random.Random(7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for _ in range(1000):
            page = _random_page(rng)
            assert parse_tsv(serialize_tsv(page)) == page
        fixtures = sorted(FIXTURES.glob("engine_style_*.tsv"))
        assert len(fixtures) >= 3
        for path in fixtures:
            page = parse_tsv(path.read_text(encoding="utf-8"))
            assert page.words
            assert parse_tsv(serialize_tsv(page)) == page


@criterion(8, "recognize on replay and degrade are byte-for-byte deterministic")
def test_c08_determinism(tmp_path, capsys):
    replay = tmp_path / "replay"
    write_replay(replay, CANONICAL_TAGS, seed=8)
    lexicon = tmp_path / "lexicon.txt"
    lexicon.write_text("\n".join(VOCAB), encoding="utf-8")
    outputs = set()
    for jobs in (1, 7):
        for n in range(5):
            out = tmp_path / f"j{jobs}r{n}"
            code = cli.main(["recognize", "--replay", str(replay), "--jobs", str(jobs),
                             "--lexicon", str(lexicon), "-o", str(out)])
            assert code == 0
            outputs.add(((out / "merged.txt").read_bytes(), (out / "report.json").read_bytes()))
    assert len(outputs) == 1

    page = tmp_path / "page.png"
    write_image(render_text(), page)
    blobs = set()
    for n in range(3):
        out = tmp_path / f"deg{n}"
        assert cli.main(["degrade", str(page), "--to-dpi", "60", "--seed", "3", "-o", str(out)]) == 0
        blobs.add((out / "page.60dpi.png").read_bytes())
    assert len(blobs) == 1
    low = degrade(render_text(), DegradeSpec(60, rng_seed=3))
    assert np.array_equal(low.pixels, degrade(render_text(), DegradeSpec(60, rng_seed=3)).pixels)


@criterion(9, "calibration bins match Bernoulli generator probabilities and partition the input")
def test_c09_calibration():
    rng = np.random.default_rng(9)
    bins = [LOW_BIN, "95", "96", "97"]
    truth = {LOW_BIN: 0.55, "95": 0.85, "96": 0.92, "97": 0.98}
    words = []
    for _ in range(10_000):
        label = bins[rng.integers(0, 4)]
        conf = float(rng.integers(0, 95)) if label == LOW_BIN else float(label) + rng.uniform(-0.49, 0.49)
        words.append(ScoredWord("w", conf, bool(rng.random() < truth[label])))
    table = bin_confidences(words)
    assert table.total == len(words)
    assert [b.label for b in table.bins] == bins
    for b in table.bins:
        p = truth[b.label]
        assert abs(b.proportion - p) <= 3 * math.sqrt(p * (1 - p) / b.count)


@criterion(10, "live engine: 7-method ensemble WLA is at least the bicubic baseline at 60 dpi")
def test_c10_live_engine(tmp_path, capsys):
    engine = shutil.which("tesseract")
    if engine is None:
        pytest.skip("tesseract is not installed")
    text = (
        "The committee met on Tuesday to review the quarterly accounts. After a\n"
        "long discussion of the ledger, the members agreed that the balance of\n"
        "payments should be recorded on receipt of the final invoice, and that\n"
        "the treasurer would circulate a revised statement before the next meeting."
    )
    page300 = render_text(text, size_pt=12, dpi=300)
    low = degrade(page300, DegradeSpec(60, noise_sigma=0.0, rotate=None))
    low_path = tmp_path / "page60.png"
    write_image(low, low_path)

    start = time.monotonic()
    out = tmp_path / "out"
    code = cli.main([
        "recognize", str(low_path), "--backend-cmd", f"{engine} {{input}} {{output_base}} --dpi 300 tsv",
        "--penalty", "0", "-o", str(out),
    ])
    elapsed = time.monotonic() - start
    assert code == 0
    ensemble_wla = evaluate(text, (out / "merged.txt").read_text(encoding="utf-8")).wla_pct
    baseline_wla = evaluate(text, read_tsv(out / "tsv" / "bicubic.tsv").text).wla_pct
    print(f"ensemble WLA {ensemble_wla:.2f}% vs bicubic {baseline_wla:.2f}% in {elapsed:.1f}s", file=sys.stderr)
    assert ensemble_wla >= baseline_wla
    assert elapsed < 300
