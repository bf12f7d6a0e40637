"""
Degrading a page and enlarging it again
=======================================

Render a short paragraph at 300 dpi, knock it down to 60 dpi with a little
noise and skew, then enlarge it back with each of the seven methods and see
how far each lands from the original.
"""

from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from lowres_ocr import raster

OUT = Path(__file__).with_name("_output")
OUT.mkdir(exist_ok=True)

# A plain white page with two lines of 11 pt text
font_path = Path("/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf")
px = round(11 * 300 / 72)
font = ImageFont.truetype(str(font_path), px) if font_path.exists() else ImageFont.load_default()
im = Image.new("L", (1400, 220), 255)
draw = ImageDraw.Draw(im)
draw.text((40, 40), "Low resolution text is hard to read,", fill=0, font=font)
draw.text((40, 110), "but several enlargements agree more often.", fill=0, font=font)
page = raster.GrayImage(np.asarray(im) / 255.0, dpi=300)
print("original:", page.width, "x", page.height, "at", page.dpi, "dpi")

# Box-average down to 60 dpi, add noise, maybe rotate by a fraction of a degree.
# The seed fixes every random draw, so this is reproducible.
spec = raster.DegradeSpec(target_dpi=60, noise_sigma=0.02, rng_seed=1)
low = raster.degrade(page, spec)
print("degraded:", low.width, "x", low.height, "at", low.dpi, "dpi")
raster.write_image(low, OUT / "page.60dpi.png")

# Enlarge by 5 with every method. The nn-gauss variants blur a
# nearest-neighbour enlargement; sigma is in 300 dpi pixels.
ref = raster.degrade(page, raster.DegradeSpec(60, noise_sigma=0.0, rotate=None))
for method in raster.CANONICAL_METHODS:
    big = raster.apply_upscale(ref, method, 5.0)
    h, w = min(big.height, page.height), min(big.width, page.width)
    err = np.abs(big.pixels[:h, :w] - page.pixels[:h, :w]).mean()
    raster.write_image(big, OUT / f"page.{method.tag}.png")
    print(f"{method.tag:>13}: mean abs difference from the original {err:.4f}")

# A single line can also be cut out and scaled to a fixed height, which is
# what line-based recognisers usually want
line = raster.render_line_region(ref, (8, 6, 260, 16), raster.Bicubic(), target_height=36)
print("line region:", line.width, "x", line.height)
