"""Slide preprocessing: tissue masking, overlapped tiling, blue-ratio scoring.

Coordinates are always expressed at the reference (high) magnification; the
low-magnification view of a tile covers the same physical region at half the
pixel count per side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .validation import check_fraction, check_rgb_image

SCALE_LOW = "low"
SCALE_HIGH = "high"


@dataclass(frozen=True)
class TileGrid:
    """Square tiling of a slide with a fixed stride, in row-major order."""

    tile_size: int
    stride: int
    origin_coords: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.origin_coords)


@dataclass(frozen=True)
class TileRef:
    """Reference to one tile of a slide at reference-magnification coords."""

    slide_id: str
    x: int
    y: int
    scale: str
    tissue_fraction: float


def rgb_to_hue(image: np.ndarray) -> np.ndarray:
    """Per-pixel HSV hue, normalized to [0, 1). Gray pixels map to hue 0."""
    rgb = np.asarray(image, dtype=np.float64) / 255.0
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    cmax = rgb.max(axis=-1)
    delta = cmax - rgb.min(axis=-1)
    hue = np.zeros_like(cmax)
    safe = np.where(delta > 0, delta, 1.0)
    rmax = (delta > 0) & (cmax == r)
    gmax = (delta > 0) & (cmax == g) & ~rmax
    bmax = (delta > 0) & ~rmax & ~gmax
    hue[rmax] = ((g - b)[rmax] / safe[rmax]) % 6.0
    hue[gmax] = (b - r)[gmax] / safe[gmax] + 2.0
    hue[bmax] = (r - g)[bmax] / safe[bmax] + 4.0
    return hue / 6.0


def tissue_mask(
    image,
    hue_lo: float = 0.60,
    hue_hi: float = 0.98,
    morph_radius: int = 2,
) -> np.ndarray:
    """Boolean tissue mask from a hue-band threshold plus morphology.

    Pixels whose hue falls in [hue_lo, hue_hi] are tissue; one closing then one
    opening with a square element of the given radius fill small holes and
    remove isolated points. Radius 0 is a pure per-pixel threshold.
    """
    arr = check_rgb_image(image)
    if not (0.0 <= hue_lo < hue_hi <= 1.0):
        raise ValueError(f"hue band must satisfy 0 <= lo < hi <= 1, got [{hue_lo}, {hue_hi}]")
    if morph_radius < 0:
        raise ValueError(f"morph_radius must be >= 0, got {morph_radius}")
    hue = rgb_to_hue(arr)
    mask = (hue >= hue_lo) & (hue <= hue_hi)
    if morph_radius == 0:
        return mask
    # Out-of-image pixels count as tissue for erosion and background for
    # dilation, so a mask touching the border is not nibbled away.
    footprint = np.ones((2 * morph_radius + 1,) * 2, dtype=bool)
    mask = ndimage.binary_dilation(mask, structure=footprint, border_value=0)
    mask = ndimage.binary_erosion(mask, structure=footprint, border_value=1)
    mask = ndimage.binary_erosion(mask, structure=footprint, border_value=1)
    mask = ndimage.binary_dilation(mask, structure=footprint, border_value=0)
    return mask


def grid_stride(tile_size: int, overlap_fraction: float) -> int:
    stride = int(round(tile_size * (1.0 - overlap_fraction)))
    return max(1, stride)


def extract_tile_grid(
    slide_w: int,
    slide_h: int,
    tile_size: int,
    overlap_fraction: float,
) -> TileGrid:
    """Grid of top-left tile origins covering the slide.

    Positions run {0, stride, 2*stride, ...} per axis; a position is kept only
    if the full tile fits, so the count per axis is
    floor((dim - tile_size) / stride) + 1.
    """
    check_fraction(overlap_fraction, "overlap_fraction", include_one=False)
    if tile_size < 1:
        raise ValueError(f"tile_size must be >= 1, got {tile_size}")
    if tile_size > min(slide_w, slide_h):
        raise ValueError("tile exceeds slide")
    stride = grid_stride(tile_size, overlap_fraction)
    xs = range(0, slide_w - tile_size + 1, stride)
    ys = range(0, slide_h - tile_size + 1, stride)
    coords = tuple((x, y) for y in ys for x in xs)
    return TileGrid(tile_size=tile_size, stride=stride, origin_coords=coords)


def filter_tiles(
    grid: TileGrid,
    mask: np.ndarray,
    min_tissue: float,
    slide_id: str = "",
    scale: str = SCALE_HIGH,
) -> list[TileRef]:
    """Keep tiles whose tissue fraction is at least ``min_tissue``.

    Grid order is preserved; the fraction is true mask pixels over tile area.
    """
    check_fraction(min_tissue, "min_tissue")
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise ValueError(f"mask must be 2-dimensional, got shape {mask.shape}")
    t = grid.tile_size
    for x, y in grid.origin_coords:
        if y + t > mask.shape[0] or x + t > mask.shape[1]:
            raise ValueError("mask dimensions do not cover the tile grid")
    area = float(t * t)
    refs = []
    for x, y in grid.origin_coords:
        fraction = np.count_nonzero(mask[y : y + t, x : x + t]) / area
        if fraction >= min_tissue:
            refs.append(TileRef(slide_id=slide_id, x=x, y=y, scale=scale, tissue_fraction=fraction))
    return refs


def blue_ratio(image) -> np.ndarray:
    """Per-pixel blue-ratio map BR = (100*B / (1+R+G)) * (256 / (1+R+G+B))."""
    arr = check_rgb_image(image).astype(np.float64)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    return (100.0 * b / (1.0 + r + g)) * (256.0 / (1.0 + r + g + b))


def mean_blue_ratio(images: Sequence[np.ndarray]) -> np.ndarray:
    """Mean blue-ratio score per tile image."""
    return np.array([float(blue_ratio(img).mean()) for img in images], dtype=np.float64)


def top_scores_order(scores: np.ndarray, n_keep: int) -> list[int]:
    """Indices of the ``n_keep`` highest scores, descending, ties by index."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[: max(0, n_keep)]


def rank_by_blue_ratio(
    tiles: Sequence[TileRef],
    images: Sequence[np.ndarray],
    top_percentile: float,
) -> list[TileRef]:
    """Top percentile of tiles by mean blue-ratio, descending, grid-order ties."""
    if not (0.0 < top_percentile <= 100.0):
        raise ValueError(f"top_percentile must lie in (0, 100], got {top_percentile}")
    if len(tiles) != len(images):
        raise ValueError("tiles and images must align")
    if not tiles:
        return []
    scores = mean_blue_ratio(images)
    n_keep = math.ceil(len(tiles) * top_percentile / 100.0)
    return [tiles[i] for i in top_scores_order(scores, n_keep)]


def downsample(image, factor: int) -> np.ndarray:
    """Block-mean downsample by an integer factor, rounding half up."""
    arr = check_rgb_image(image)
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    if factor == 1:
        return arr.copy()
    h, w = arr.shape[:2]
    if h % factor or w % factor:
        raise ValueError("dimension not divisible")
    blocks = arr.reshape(h // factor, factor, w // factor, factor, 3).astype(np.float64)
    means = blocks.mean(axis=(1, 3))
    return np.floor(means + 0.5).astype(np.uint8)


def read_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"))


def write_png(path, image) -> None:
    arr = check_rgb_image(image)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def read_mask_png(path) -> np.ndarray:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127


def write_mask_png(path, mask) -> None:
    arr = (np.asarray(mask, dtype=bool).astype(np.uint8)) * 255
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def write_blue_ratio_csv(path, br_map: np.ndarray) -> None:
    """Row-major CSV dump of a blue-ratio map with 6 decimal places."""
    arr = np.asarray(br_map, dtype=np.float64)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in arr:
            fh.write(",".join(f"{v:.6f}" for v in row))
            fh.write("\n")
