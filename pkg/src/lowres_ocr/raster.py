"""Grayscale rasters and the resampling kernels used before recognition.

All samples are floats in ``[0, 1]`` (0 = black ink, 1 = white paper).
Images are only quantised to 8 bits when they are written to disk.

Coordinates follow the pixel-centre convention: output pixel ``x`` of an
image resampled by ``scale`` sits at source coordinate
``(x + 0.5) / scale - 0.5``. Every kernel treats samples beyond the border
as copies of the nearest edge sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from PIL import Image

#: Resolution that the recognition engine is trained for and that the
#: Gaussian standard deviations are expressed in.
REFERENCE_DPI = 300

MAX_ROTATION_DEG = 5.0


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


@dataclass(frozen=True, eq=False)
class GrayImage:
    """Immutable single-channel image.

    ``pixels`` has shape ``(height, width)``; the array is copied to float64
    and marked read-only so instances can be shared between threads.
    """

    pixels: np.ndarray
    dpi: int = REFERENCE_DPI

    def __post_init__(self) -> None:
        arr = np.array(self.pixels, dtype=np.float64, copy=True)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"expected a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image samples must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValueError("image samples must lie in [0, 1]")
        if int(self.dpi) != self.dpi or self.dpi < 1:
            raise ValueError(f"dpi must be a positive integer, got {self.dpi!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "pixels", arr)
        object.__setattr__(self, "dpi", int(self.dpi))

    @classmethod
    def from_samples(
        cls, width: int, height: int, samples: Sequence[float], dpi: int = REFERENCE_DPI
    ) -> "GrayImage":
        """Build an image from a flat row-major sample list."""
        flat = np.asarray(samples, dtype=np.float64)
        if flat.size != width * height:
            raise ValueError(
                f"{flat.size} samples do not fill a {width}x{height} image"
            )
        return cls(flat.reshape(height, width), dpi)

    @classmethod
    def filled(cls, width: int, height: int, value: float = 1.0, dpi: int = REFERENCE_DPI) -> "GrayImage":
        return cls(np.full((height, width), value, dtype=np.float64), dpi)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def samples(self) -> np.ndarray:
        """Flat row-major view of the samples."""
        return self.pixels.reshape(-1)

    def crop(self, left: int, top: int, width: int, height: int) -> "GrayImage":
        if width < 1 or height < 1:
            raise ValueError("crop must be at least 1x1")
        if left < 0 or top < 0 or left + width > self.width or top + height > self.height:
            raise ValueError(
                f"crop ({left}, {top}, {width}, {height}) outside "
                f"{self.width}x{self.height} image"
            )
        return GrayImage(self.pixels[top : top + height, left : left + width], self.dpi)

    def _derive(self, pixels: np.ndarray, dpi: int | None = None) -> "GrayImage":
        return GrayImage(np.clip(pixels, 0.0, 1.0), self.dpi if dpi is None else dpi)


# ---------------------------------------------------------------------------
# Upscaling methods


@dataclass(frozen=True)
class NearestGauss:
    """Nearest-neighbour enlargement followed by a Gaussian blur.

    ``sigma`` is measured in pixels of the 300 dpi enlarged image.
    """

    sigma: float = 0.0

    def __post_init__(self) -> None:
        if not (self.sigma >= 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be a finite non-negative number, got {self.sigma!r}")

    @property
    def tag(self) -> str:
        s = float(self.sigma)
        return "nn-gauss-0" if s == 0 else f"nn-gauss-{s:g}" if s != int(s) else f"nn-gauss-{s:.1f}"


@dataclass(frozen=True)
class Bilinear:
    tag: str = field(default="bilinear", init=False)


@dataclass(frozen=True)
class Bicubic:
    tag: str = field(default="bicubic", init=False)


UpscaleMethod = Union[NearestGauss, Bilinear, Bicubic]

CANONICAL_METHODS: tuple[UpscaleMethod, ...] = (
    NearestGauss(0.0),
    NearestGauss(0.5),
    NearestGauss(1.0),
    NearestGauss(1.5),
    NearestGauss(2.0),
    Bilinear(),
    Bicubic(),
)
CANONICAL_TAGS: tuple[str, ...] = tuple(m.tag for m in CANONICAL_METHODS)


def method_from_tag(tag: str) -> UpscaleMethod:
    """Inverse of ``method.tag``; also accepts any ``nn-gauss-<sigma>``."""
    if tag == "bilinear":
        return Bilinear()
    if tag == "bicubic":
        return Bicubic()
    if tag.startswith("nn-gauss-"):
        try:
            return NearestGauss(float(tag[len("nn-gauss-") :]))
        except ValueError:
            pass
    raise ValueError(f"unknown upscaling method {tag!r}")


# ---------------------------------------------------------------------------
# Kernels


def box_downsample(img: GrayImage, factor: int) -> GrayImage:
    """Average each ``factor`` x ``factor`` block of pixels.

    Dimensions that are not a multiple of ``factor`` are padded by edge
    replication, so the output is ``ceil(dim / factor)`` pixels.
    """
    if int(factor) != factor or factor < 1:
        raise ValueError(f"factor must be a positive integer, got {factor!r}")
    factor = int(factor)
    h, w = img.pixels.shape
    out_h, out_w = -(-h // factor), -(-w // factor)
    padded = np.pad(
        img.pixels, ((0, out_h * factor - h), (0, out_w * factor - w)), mode="edge"
    )
    blocks = padded.reshape(out_h, factor, out_w, factor)
    return img._derive(blocks.mean(axis=(1, 3)), max(1, _round_half_up(img.dpi / factor)))


def _output_shape(img: GrayImage, scale: float) -> tuple[int, int]:
    if not (scale > 0 and math.isfinite(scale)):
        raise ValueError(f"scale must be a positive finite number, got {scale!r}")
    return (
        max(1, _round_half_up(img.height * scale)),
        max(1, _round_half_up(img.width * scale)),
    )


def _scaled_dpi(img: GrayImage, scale: float) -> int:
    return max(1, _round_half_up(img.dpi * scale))


def upscale_nearest(
    img: GrayImage, scale: float, out_shape: tuple[int, int] | None = None
) -> GrayImage:
    """Pixel replication (equivalently box interpolation when enlarging)."""
    shape = _output_shape(img, scale) if out_shape is None else out_shape
    ys = np.minimum(np.floor((np.arange(shape[0]) + 0.5) / scale).astype(np.intp), img.height - 1)
    xs = np.minimum(np.floor((np.arange(shape[1]) + 0.5) / scale).astype(np.intp), img.width - 1)
    return img._derive(img.pixels[np.ix_(ys, xs)], _scaled_dpi(img, scale))


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Discrete Gaussian of radius ``ceil(3 * sigma)`` normalised to unit sum."""
    if sigma <= 0:
        return np.ones(1)
    radius = int(math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    weights = np.exp(-(k * k) / (2.0 * sigma * sigma))
    return weights / weights.sum()


def _correlate_axis(a: np.ndarray, weights: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(weights) - 1) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (radius, radius)
    padded = np.pad(a, pad, mode="edge")
    n = a.shape[axis]
    out = np.zeros_like(a)
    for k, wk in enumerate(weights):
        out += wk * np.take(padded, np.arange(k, k + n), axis=axis)
    return out


def gaussian_blur(img: GrayImage, sigma: float) -> GrayImage:
    """Separable Gaussian blur with edge replication; ``sigma == 0`` is a no-op."""
    if not (sigma >= 0 and math.isfinite(sigma)):
        raise ValueError(f"sigma must be a finite non-negative number, got {sigma!r}")
    if sigma == 0:
        return img
    weights = gaussian_kernel(sigma)
    out = _correlate_axis(img.pixels, weights, axis=0)
    out = _correlate_axis(out, weights, axis=1)
    return img._derive(out)


def linear_weight(t: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - np.abs(t))


def cubic_weight(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    """Keys cubic-convolution kernel; ``a = -0.5`` is Catmull-Rom."""
    t = np.abs(t)
    t2, t3 = t * t, t * t * t
    near = (a + 2.0) * t3 - (a + 3.0) * t2 + 1.0
    far = a * t3 - 5.0 * a * t2 + 8.0 * a * t - 4.0 * a
    return np.where(t <= 1.0, near, np.where(t < 2.0, far, 0.0))


def _resample_axis(
    a: np.ndarray,
    n_out: int,
    scale: float,
    kernel: Callable[[np.ndarray], np.ndarray],
    offsets: range,
    axis: int,
) -> np.ndarray:
    n_in = a.shape[axis]
    centres = (np.arange(n_out) + 0.5) / scale - 0.5
    base = np.floor(centres).astype(np.intp)
    out_shape = list(a.shape)
    out_shape[axis] = n_out
    out = np.zeros(out_shape)
    for off in offsets:
        idx = base + off
        w = kernel(centres - idx)
        taps = np.take(a, np.clip(idx, 0, n_in - 1), axis=axis)
        out += (w[:, None] if axis == 0 else w[None, :]) * taps
    return out


def _separable_upscale(img, scale, out_shape, kernel, offsets) -> GrayImage:
    shape = _output_shape(img, scale) if out_shape is None else out_shape
    out = _resample_axis(img.pixels, shape[0], scale, kernel, offsets, axis=0)
    out = _resample_axis(out, shape[1], scale, kernel, offsets, axis=1)
    return img._derive(out, _scaled_dpi(img, scale))


def upscale_bilinear(
    img: GrayImage, scale: float, out_shape: tuple[int, int] | None = None
) -> GrayImage:
    return _separable_upscale(img, scale, out_shape, linear_weight, range(0, 2))


def upscale_bicubic(
    img: GrayImage, scale: float, out_shape: tuple[int, int] | None = None
) -> GrayImage:
    return _separable_upscale(img, scale, out_shape, cubic_weight, range(-1, 3))


def effective_sigma(sigma: float, img: GrayImage, scale: float) -> float:
    """Convert a 300 dpi blur width into pixels of the resampled image.

    A 60 dpi page enlarged 5x lands on 300 dpi and keeps ``sigma``; a text
    line enlarged by some other factor gets a proportionally scaled blur.
    """
    return sigma * img.dpi * scale / REFERENCE_DPI


def apply_upscale(
    img: GrayImage,
    method: UpscaleMethod,
    scale: float,
    out_shape: tuple[int, int] | None = None,
) -> GrayImage:
    if isinstance(method, NearestGauss):
        enlarged = upscale_nearest(img, scale, out_shape)
        return gaussian_blur(enlarged, effective_sigma(method.sigma, img, scale))
    if isinstance(method, Bilinear):
        return upscale_bilinear(img, scale, out_shape)
    if isinstance(method, Bicubic):
        return upscale_bicubic(img, scale, out_shape)
    raise TypeError(f"not an upscaling method: {method!r}")


def rotate_small(img: GrayImage, angle_deg: float) -> GrayImage:
    """Rotate about the image centre by a small angle (counter-clockwise).

    Bilinear resampling; pixels uncovered by the rotation become white.
    """
    if not (abs(angle_deg) <= MAX_ROTATION_DEG):
        raise ValueError(f"rotation of {angle_deg!r} degrees outside +/-{MAX_ROTATION_DEG}")
    if angle_deg == 0:
        return img
    h, w = img.pixels.shape
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    dx, dy = xx - (w - 1) / 2.0, yy - (h - 1) / 2.0
    # Inverse map; +1 accounts for the white border added below.
    sx = (w - 1) / 2.0 + c * dx + s * dy + 1.0
    sy = (h - 1) / 2.0 - s * dx + c * dy + 1.0
    padded = np.pad(img.pixels, 1, mode="constant", constant_values=1.0)
    x0, y0 = np.floor(sx), np.floor(sy)
    fx, fy = sx - x0, sy - y0
    x0 = x0.astype(np.intp)
    y0 = y0.astype(np.intp)

    def at(yi: np.ndarray, xi: np.ndarray) -> np.ndarray:
        return padded[np.clip(yi, 0, h + 1), np.clip(xi, 0, w + 1)]

    out = (
        (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x0 + 1))
        + fy * ((1 - fx) * at(y0 + 1, x0) + fx * at(y0 + 1, x0 + 1))
    )
    return img._derive(out)


# ---------------------------------------------------------------------------
# Degradation


@dataclass(frozen=True)
class RotationSpec:
    probability: float = 0.5
    mean_deg: float = 0.0
    std_deg: float = 0.5


@dataclass(frozen=True)
class DegradeSpec:
    """Parameters for turning a 300 dpi page into a noisy low-resolution one.

    Random draws come from ``numpy.random.PCG64(rng_seed)`` in a fixed order:
    the rotation coin, the rotation angle (both only when ``rotate`` is set),
    then one normal deviate per output pixel in row-major order.
    """

    target_dpi: int = 60
    noise_sigma: float = 0.02
    rotate: RotationSpec | None = RotationSpec()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.target_dpi < 1:
            raise ValueError("target_dpi must be positive")
        if not self.noise_sigma >= 0:
            raise ValueError("noise_sigma must be non-negative")


def downsample_factor(source_dpi: int, target_dpi: int) -> int:
    factor, rem = divmod(source_dpi, target_dpi)
    if rem or factor < 1:
        raise ValueError(
            f"cannot box-downsample {source_dpi} dpi to {target_dpi} dpi: "
            "the ratio must be a whole number"
        )
    return factor


def degrade(img300: GrayImage, spec: DegradeSpec) -> GrayImage:
    factor = downsample_factor(img300.dpi, spec.target_dpi)
    rng = np.random.Generator(np.random.PCG64(spec.rng_seed))
    img = img300
    if spec.rotate is not None:
        coin = rng.random()
        angle = rng.normal(spec.rotate.mean_deg, spec.rotate.std_deg)
        if coin < spec.rotate.probability:
            angle = float(np.clip(angle, -MAX_ROTATION_DEG, MAX_ROTATION_DEG))
            img = rotate_small(img, angle)
    low = box_downsample(img, factor)
    if spec.noise_sigma > 0:
        noise = rng.normal(0.0, spec.noise_sigma, size=low.pixels.shape)
        low = low._derive(low.pixels + noise)
    return low


# ---------------------------------------------------------------------------
# Text-line regions


def _as_rect(bbox) -> tuple[int, int, int, int]:
    if hasattr(bbox, "left"):
        return int(bbox.left), int(bbox.top), int(bbox.width), int(bbox.height)
    left, top, width, height = bbox
    return int(left), int(top), int(width), int(height)


def render_line_region(
    orig: GrayImage,
    bbox,
    method: UpscaleMethod,
    target_height: int = 36,
) -> GrayImage:
    """Cut a text line out of the low-resolution page and enlarge it directly.

    ``bbox`` is ``(left, top, width, height)`` (or any object with those
    attributes) in the low-resolution image. The result is exactly
    ``target_height`` pixels tall.
    """
    left, top, width, height = _as_rect(bbox)
    region = orig.crop(left, top, width, height)
    scale = target_height / height
    out_shape = (target_height, max(1, _round_half_up(width * scale)))
    return apply_upscale(region, method, scale, out_shape)


# ---------------------------------------------------------------------------
# File I/O


def to_uint8(img: GrayImage) -> np.ndarray:
    """Quantise to 8 bits, rounding halves away from zero."""
    return np.floor(img.pixels * 255.0 + 0.5).astype(np.uint8)


def read_image(path: str | Path, dpi: int | None = None) -> GrayImage:
    """Load an 8-bit grayscale PNG or binary PGM.

    ``dpi`` overrides whatever the file records; it is required when the
    file carries no resolution (PGM never does).
    """
    with Image.open(path) as im:
        file_dpi = im.info.get("dpi")
        data = np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    if dpi is None:
        if not file_dpi:
            raise ValueError(f"{path}: no resolution recorded; pass dpi explicitly")
        dpi = _round_half_up(float(file_dpi[0]))
    return GrayImage(data, dpi)


def write_image(img: GrayImage, path: str | Path) -> None:
    path = Path(path)
    im = Image.fromarray(to_uint8(img), mode="L")
    if path.suffix.lower() in (".pgm", ".pnm"):
        im.save(path, format="PPM")
    else:
        im.save(path, format="PNG", dpi=(img.dpi, img.dpi))
