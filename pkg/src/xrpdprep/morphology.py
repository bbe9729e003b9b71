"""Grey-scale morphology on reshaped patterns for background estimation.

The 1-D profile is folded row-major into a near-square image so that a
small disk reaches samples one full row (``w`` points) apart. Opening
the image with that disk removes peaks narrower than the element while
leaving the slowly varying background in place.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Pattern
from .exceptions import DomainError, SizeError

__all__ = [
    "Image2D",
    "StructuringElement",
    "ReshapeLayout",
    "BackgroundResult",
    "disk_se",
    "dilate",
    "erode",
    "open",
    "close",
    "reshape_to_image",
    "reshape_from_image",
    "estimate_background",
    "background_details",
]


@dataclass(frozen=True, eq=False)
class Image2D:
    """Real-valued raster with the sentinels used beyond its border."""

    pixels: np.ndarray
    pad_value_low: float = -np.inf
    pad_value_high: float = np.inf

    def __post_init__(self):
        px = np.array(self.pixels, dtype=float)
        if px.ndim != 2 or px.size == 0:
            raise SizeError("image must be a non-empty 2-D array")
        if not np.all(np.isfinite(px)):
            raise DomainError("image pixels must be finite")
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def rows(self):
        return self.pixels.shape[0]

    @property
    def cols(self):
        return self.pixels.shape[1]

    def with_pixels(self, pixels):
        return Image2D(pixels, self.pad_value_low, self.pad_value_high)


@dataclass(frozen=True, eq=False)
class StructuringElement:
    """Neighbourhood offsets ``(m, n)`` with per-offset heights."""

    offsets: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        off = np.array(self.offsets, dtype=int).reshape(-1, 2)
        val = np.array(self.values, dtype=float).reshape(-1)
        if off.shape[0] != val.size:
            raise SizeError("one height per offset is required")
        keys = {tuple(o) for o in off.tolist()}
        if (0, 0) not in keys:
            raise DomainError("structuring element must contain the origin")
        heights = dict(zip(map(tuple, off.tolist()), val.tolist()))
        for (m, n), v in heights.items():
            if heights.get((-m, -n)) != v:
                raise DomainError("structuring element must be symmetric under negation")
        off.setflags(write=False)
        val.setflags(write=False)
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "values", val)

    @property
    def reach(self) -> int:
        return int(np.abs(self.offsets).max())

    def __len__(self):
        return self.offsets.shape[0]


def disk_se(radius: int) -> StructuringElement:
    """Flat disk: every lattice offset with ``m**2 + n**2 <= radius**2``."""
    if radius < 1:
        raise DomainError(f"disk radius must be >= 1, got {radius}")
    r = int(radius)
    m, n = np.mgrid[-r : r + 1, -r : r + 1]
    inside = m**2 + n**2 <= r * r
    offsets = np.column_stack([m[inside], n[inside]])
    return StructuringElement(offsets, np.zeros(len(offsets)))


def _as_image(image):
    return image if isinstance(image, Image2D) else Image2D(image)


def _rank_filter(img: Image2D, se: StructuringElement, dilation: bool):
    px = img.pixels
    r = se.reach
    fill = img.pad_value_low if dilation else img.pad_value_high
    padded = np.pad(px, r, mode="constant", constant_values=fill)
    rows, cols = px.shape
    out = np.full(px.shape, fill)
    reduce = np.maximum if dilation else np.minimum
    for (m, n), h in zip(se.offsets.tolist(), se.values.tolist()):
        # dilation reads I(x-m, y-n) + S(m,n); erosion reads I(x+m, y+n) - S(m,n)
        dm, dn = (-m, -n) if dilation else (m, n)
        view = padded[r + dm : r + dm + rows, r + dn : r + dn + cols]
        reduce(out, view + h if dilation else view - h, out=out)
    return out


def dilate(image, se: StructuringElement):
    img = _as_image(image)
    out = _rank_filter(img, se, dilation=True)
    return img.with_pixels(out) if isinstance(image, Image2D) else out


def erode(image, se: StructuringElement):
    img = _as_image(image)
    out = _rank_filter(img, se, dilation=False)
    return img.with_pixels(out) if isinstance(image, Image2D) else out


def open(image, se: StructuringElement):  # noqa: A001 - morphological name
    """Erosion followed by dilation; anti-extensive and idempotent."""
    return dilate(erode(image, se), se)


def close(image, se: StructuringElement):
    """Dilation followed by erosion; extensive and idempotent."""
    return erode(dilate(image, se), se)


@dataclass(frozen=True)
class ReshapeLayout:
    length: int
    width: int

    @property
    def padded(self):
        return self.width * self.width - self.length


def reshape_to_image(signal):
    """Fold ``signal`` row-major into a ``w x w`` image, ``w = ceil(sqrt(N))``.

    Trailing cells repeat the last sample.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 8:
        raise SizeError("reshape needs a 1-D signal of at least 8 samples")
    w = int(np.ceil(np.sqrt(x.size)))
    while w * w < x.size:  # guard against sqrt rounding
        w += 1
    buf = np.full(w * w, x[-1])
    buf[: x.size] = x
    return Image2D(buf.reshape(w, w)), ReshapeLayout(x.size, w)


def reshape_from_image(image, layout: ReshapeLayout):
    px = image.pixels if isinstance(image, Image2D) else np.asarray(image)
    if px.shape != (layout.width, layout.width):
        raise SizeError(f"image shape {px.shape} does not match layout {layout}")
    return px.reshape(-1)[: layout.length].copy()


@dataclass(frozen=True, eq=False)
class BackgroundResult:
    background: Pattern
    corrected: Pattern
    image: Image2D
    opened: Image2D
    layout: ReshapeLayout
    n_clamped: int


def background_details(pattern: Pattern, radius: int = 3) -> BackgroundResult:
    """Background estimate plus the intermediate images and clamp count."""
    se = disk_se(radius)
    image, layout = reshape_to_image(pattern.intensity)
    if 2 * radius + 1 > layout.width:
        raise DomainError(
            f"disk of radius {radius} does not fit a {layout.width}x{layout.width} image"
        )
    opened = open(image, se)
    bg = reshape_from_image(opened, layout)
    residue = pattern.intensity - bg
    n_clamped = int(np.count_nonzero(residue < 0))
    corrected = np.where(residue < 0, 0.0, residue)
    return BackgroundResult(
        pattern.with_intensity(bg),
        pattern.with_intensity(corrected),
        image,
        opened,
        layout,
        n_clamped,
    )


def estimate_background(pattern: Pattern, radius: int = 3):
    """Return ``(background, corrected)``; negative residues are set to zero."""
    res = background_details(pattern, radius)
    return res.background, res.corrected
