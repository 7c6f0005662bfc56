"""Input validation helpers shared by the estimators and pipeline stages."""

from __future__ import annotations

import numpy as np


def check_rgb_image(image, name: str = "image") -> np.ndarray:
    """Coerce ``image`` to a (H, W, 3) uint8 array.

    Rejects empty rasters and values outside the byte range.
    """
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("empty input")
    if arr.dtype != np.uint8:
        if not np.issubdtype(arr.dtype, np.integer):
            raise TypeError(f"{name} must be integer typed, got {arr.dtype}")
        if arr.size and (arr.min() < 0 or arr.max() > 255):
            raise ValueError(f"{name} values must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    return arr


def check_tile_stack(tiles, name: str = "tiles") -> np.ndarray:
    """Coerce a bag of tiles to a (k, s, s, 3) uint8 array with k >= 1."""
    arr = np.asarray(tiles)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise ValueError(f"{name} must have shape (k, H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1:
        raise ValueError("empty bag")
    if arr.dtype != np.uint8:
        arr = check_rgb_image(arr.reshape(-1, arr.shape[2], 3), name).reshape(arr.shape)
    return arr


def check_matrix(x, name: str = "X") -> np.ndarray:
    """Coerce to a finite float64 matrix of shape (n, d)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_vector(x, name: str = "x") -> np.ndarray:
    """Coerce to a finite float64 vector."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def check_fraction(value: float, name: str, *, include_one: bool = True) -> float:
    """Validate a real in [0, 1] (or [0, 1) when ``include_one`` is False)."""
    v = float(value)
    hi_ok = v <= 1.0 if include_one else v < 1.0
    if not (0.0 <= v and hi_ok):
        bound = "[0, 1]" if include_one else "[0, 1)"
        raise ValueError(f"{name} must lie in {bound}, got {value}")
    return v


def as_rng(seed) -> np.random.Generator:
    """Return a numpy Generator from a seed or pass an existing one through."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
