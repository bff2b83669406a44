"""Depth representation pipeline.

A raw depth field goes through two independent paths:

* ``downsample`` keeps one pixel per ``r x r`` patch to build the textual
  depth matrix.
* ``percentile_clip`` -> ``normalize`` -> ``render_map`` produce the
  pseudo-color depth map (turbo reversed: near is red, far is blue).

RGB rasters are ``(H, W, 3)`` uint8 arrays throughout.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from depthnav.errors import (
    EmptyFieldError,
    NonIntegerFactorError,
    OutOfRangeValueError,
    RatioTooLargeError,
)
from depthnav.turbo import TURBO_LUT

RANGE_TOLERANCE = 1e-9


class Unit(str, enum.Enum):
    METERS = "meters"
    RELATIVE = "relative"


class ColorMode(str, enum.Enum):
    TURBO_REVERSED = "turbo_r"


@dataclass(frozen=True, eq=False)
class DepthField:
    """Dense per-pixel depth grid, row-major, float64."""

    values: np.ndarray
    unit: Unit = Unit.METERS

    def __post_init__(self):
        arr = np.ascontiguousarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"depth field must be 2-D, got shape {arr.shape}")
        if arr.size and not np.isfinite(arr).all():
            raise ValueError("depth field contains non-finite values")
        if arr.size and arr.min() < 0:
            raise ValueError("depth field contains negative values")
        object.__setattr__(self, "values", arr)
        object.__setattr__(self, "unit", Unit(self.unit))

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class DepthMatrix:
    values: np.ndarray
    unit: Unit
    source_ratio: int

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Pseudo-color rendering, ``(H, W, 3)`` uint8."""

    pixels: np.ndarray

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_png(self) -> bytes:
        return encode_png(self.pixels)


@dataclass(frozen=True)
class RenderConfig:
    lower_percentile: float = 1.0
    upper_percentile: float = 99.0
    color_mode: ColorMode = ColorMode.TURBO_REVERSED

    def __post_init__(self):
        l, u = self.lower_percentile, self.upper_percentile
        if not (0 <= l < u <= 100):
            raise ValueError(f"need 0 <= lower < upper <= 100, got {l}, {u}")


@dataclass(frozen=True)
class PipelineConfig:
    target_height: int = 360
    target_width: int = 640
    downsample_ratio: int = 40
    render: RenderConfig = field(default_factory=RenderConfig)

    def __post_init__(self):
        if self.downsample_ratio < 1:
            raise ValueError("downsample_ratio must be >= 1")
        if self.target_height < 1 or self.target_width < 1:
            raise ValueError("target dimensions must be positive")

    @property
    def matrix_shape(self) -> tuple[int, int]:
        r = self.downsample_ratio
        return self.target_height // r, self.target_width // r


def preprocess_rgb(image: np.ndarray, cfg: PipelineConfig) -> np.ndarray:
    """Box-filter an RGB frame down to the configured target size.

    Each output pixel is the mean of its source block, rounded half up.
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) RGB raster, got {image.shape}")
    h0, w0 = image.shape[:2]
    h, w = cfg.target_height, cfg.target_width
    if h0 < h or w0 < w or h0 % h or w0 % w:
        raise NonIntegerFactorError(
            f"cannot reduce {h0}x{w0} to {h}x{w} by an integer factor"
        )
    fh, fw = h0 // h, w0 // w
    if fh == fw == 1:
        return image.astype(np.uint8, copy=True)
    n = fh * fw
    sums = image.astype(np.int64).reshape(h, fh, w, fw, 3).sum(axis=(1, 3))
    return ((sums + n // 2) // n).astype(np.uint8)


def downsample(depth: DepthField, r: int) -> DepthMatrix:
    """Keep the center pixel ``(i*r + r//2, j*r + r//2)`` of every full patch."""
    if r < 1:
        raise ValueError("ratio must be >= 1")
    if r > depth.height or r > depth.width:
        raise RatioTooLargeError(
            f"ratio {r} exceeds field size {depth.height}x{depth.width}"
        )
    rows, cols = depth.height // r, depth.width // r
    c = r // 2
    picked = depth.values[c : rows * r : r, c : cols * r : r].copy()
    return DepthMatrix(picked, depth.unit, r)


def percentile_clip(
    depth: DepthField, lower: float, upper: float
) -> tuple[DepthField, tuple[float, float]]:
    """Clamp values to the [lower, upper] percentiles of the field.

    Percentiles use linear interpolation between closest ranks.
    """
    if not (0 <= lower < upper <= 100):
        raise ValueError(f"need 0 <= lower < upper <= 100, got {lower}, {upper}")
    if depth.values.size == 0:
        raise EmptyFieldError("cannot clip an empty field")
    p_lo, p_hi = np.percentile(depth.values, [lower, upper], method="linear")
    clipped = np.minimum(np.maximum(depth.values, p_lo), p_hi)
    return DepthField(clipped, depth.unit), (float(p_lo), float(p_hi))


def normalize(depth: DepthField) -> DepthField:
    """Min-max scale to [0, 1]; a constant field maps to 0.5 everywhere."""
    if depth.values.size == 0:
        raise EmptyFieldError("cannot normalize an empty field")
    lo = depth.values.min()
    hi = depth.values.max()
    if hi == lo:
        return DepthField(np.full_like(depth.values, 0.5), Unit.RELATIVE)
    return DepthField((depth.values - lo) / (hi - lo), Unit.RELATIVE)


def lut_indices(values: np.ndarray) -> np.ndarray:
    """Turbo LUT row used for each normalized value (reversed orientation)."""
    bins = np.clip(np.floor(values * 256.0), 0, 255).astype(np.intp)
    return 255 - bins


def render_map(norm: DepthField, cfg: RenderConfig | None = None) -> DepthMap:
    cfg = cfg or RenderConfig()
    if cfg.color_mode is not ColorMode.TURBO_REVERSED:
        raise ValueError(f"unsupported color mode {cfg.color_mode}")
    v = norm.values
    if v.size and (v.min() < -RANGE_TOLERANCE or v.max() > 1 + RANGE_TOLERANCE):
        raise OutOfRangeValueError(
            f"normalized values must lie in [0, 1], got [{v.min()}, {v.max()}]"
        )
    return DepthMap(TURBO_LUT[lut_indices(v)])


def depth_to_map(depth: DepthField, cfg: RenderConfig | None = None) -> DepthMap:
    """clip -> normalize -> render."""
    cfg = cfg or RenderConfig()
    clipped, _ = percentile_clip(depth, cfg.lower_percentile, cfg.upper_percentile)
    return render_map(normalize(clipped), cfg)


def matrix_header(m: DepthMatrix) -> str:
    unit = "meters" if m.unit is Unit.METERS else "relative 0–1"
    return (
        f"Depth matrix {m.rows}x{m.cols}, unit: {unit}, origin: top-left "
        "(row 0 is the top of the image, column 0 is the left)."
    )


def serialize_matrix(m: DepthMatrix) -> str:
    lines = [matrix_header(m)]
    lines.extend(" ".join(f"{v:.2f}" for v in row) for row in m.values)
    return "\n".join(lines) + "\n"


def encode_png(pixels: np.ndarray) -> bytes:
    pixels = np.asarray(pixels, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels)).save(buf, format="PNG")
    return buf.getvalue()


def decode_image(data: bytes) -> np.ndarray:
    """Decode PNG or JPEG bytes into an ``(H, W, 3)`` uint8 array."""
    with Image.open(io.BytesIO(data)) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_image(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_image(fh.read())
