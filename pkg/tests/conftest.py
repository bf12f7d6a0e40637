from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest
from PIL import Image, ImageDraw, ImageFont

from lowres_ocr.raster import GrayImage

FIXTURES = Path(__file__).parent / "fixtures"
FONT = Path("/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf")

SAMPLE_TEXT = (
    "It was the best of times, it was the worst of times,\n"
    "it was the age of wisdom, it was the age of foolishness,\n"
    "it was the epoch of belief, it was the epoch of incredulity."
)


def render_text(text: str = SAMPLE_TEXT, size_pt: float = 11, dpi: int = 300) -> GrayImage:
    """Typeset ``text`` at ``size_pt`` points on a white page at ``dpi``."""
    px = round(size_pt * dpi / 72)
    font = ImageFont.truetype(str(FONT), px) if FONT.exists() else ImageFont.load_default()
    lines = text.split("\n")
    probe = ImageDraw.Draw(Image.new("L", (1, 1)))
    width = max(probe.textlength(ln, font=font) for ln in lines)
    line_h = round(px * 1.4)
    margin = px
    im = Image.new("L", (int(width) + 2 * margin, line_h * len(lines) + 2 * margin), 255)
    draw = ImageDraw.Draw(im)
    for i, ln in enumerate(lines):
        draw.text((margin, margin + i * line_h), ln, fill=0, font=font)
    return GrayImage(np.asarray(im, dtype=np.float64) / 255.0, dpi)


@pytest.fixture(scope="session")
def text_page() -> GrayImage:
    return render_text()


def pytest_configure(config):
    config._acceptance_results = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None and (report.when == "call" or report.skipped):
        item.config._acceptance_results.append((mark.args[0], mark.args[1], report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config._acceptance_results
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    seen = set()
    for number, title, outcome in sorted(results):
        if (number, outcome) in seen:
            continue
        seen.add((number, outcome))
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[outcome]
        terminalreporter.write_line(f"[{status}] criterion {number:>2}: {title}")
