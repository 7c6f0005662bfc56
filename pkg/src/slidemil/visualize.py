"""Overlay rendering: attention heat and selected-tile boxes on a slide."""

from __future__ import annotations

import numpy as np

from .preprocess import TileRef, write_png
from .validation import check_rgb_image

_HEAT_COLOR = np.array([255.0, 0.0, 0.0])
_BOX_COLOR = np.array([0.0, 64.0, 255.0], dtype=np.uint8)
_MAX_HEAT_OPACITY = 0.55
_BOX_WIDTH = 2


def render_overlay(
    slide_image,
    tile_refs: list[TileRef],
    alpha,
    selected: list[TileRef] | None = None,
    tile_size: int | None = None,
) -> np.ndarray:
    """Alpha-blend red heat (opacity proportional to attention, normalized to
    the max) over each tile and draw blue boxes around selected tiles.

    Overlapping tiles blend once with the maximum opacity touching each pixel,
    so uniform attention gives uniform opacity. Output dimensions equal the
    slide's.
    """
    img = check_rgb_image(slide_image).astype(np.float64)
    h, w = img.shape[:2]
    alpha = np.asarray(alpha, dtype=np.float64)
    if len(alpha) != len(tile_refs):
        raise ValueError("alpha and tile_refs must align")
    if tile_size is None:
        raise ValueError("tile_size is required")
    t = tile_size
    if len(alpha):
        peak = alpha.max()
        scale = alpha / peak if peak > 0 else np.zeros_like(alpha)
        opacity = np.zeros((h, w))
        for ref, s in zip(tile_refs, scale):
            region = opacity[ref.y : ref.y + t, ref.x : ref.x + t]
            np.maximum(region, s * _MAX_HEAT_OPACITY, out=region)
        img = img * (1.0 - opacity[..., None]) + _HEAT_COLOR[None, None, :] * opacity[..., None]
    out = np.floor(img + 0.5).astype(np.uint8)
    for ref in selected or []:
        x0, y0, x1, y1 = ref.x, ref.y, ref.x + t, ref.y + t
        bw = _BOX_WIDTH
        out[y0 : y0 + bw, x0:x1] = _BOX_COLOR
        out[y1 - bw : y1, x0:x1] = _BOX_COLOR
        out[y0:y1, x0 : x0 + bw] = _BOX_COLOR
        out[y0:y1, x1 - bw : x1] = _BOX_COLOR
    return out


def write_overlay_png(path, slide_image, tile_refs, alpha, selected, tile_size) -> None:
    write_png(path, render_overlay(slide_image, tile_refs, alpha, selected, tile_size))
