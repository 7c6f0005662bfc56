"""Procedural synthetic slides with per-tile ground truth.

Slides are a near-white background with one elliptical tissue region drawn as
pinkish stained texture scattered with darker nucleus blobs. Cancerous slides
carry a connected patch of tiles repainted with a class texture: low grade
means fewer, larger blobs; high grade means many small ones, with the total
dark area roughly matched so the two grades separate reliably only at full
resolution. Everything is a pure function of the slide spec, seed included.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .preprocess import TileGrid, extract_tile_grid, write_png
from .seeds import derive_seed
from .validation import as_rng

CLASS_NAMES = ("benign", "low", "high")

LABEL_BACKGROUND = "background"
LABEL_BENIGN = "benign-tissue"
LABEL_LOW = "low-texture"
LABEL_HIGH = "high-texture"
LESION_LABELS = (LABEL_LOW, LABEL_HIGH)

_CLASS_TO_LESION_LABEL = {"low": LABEL_LOW, "high": LABEL_HIGH}

_BACKGROUND_BASE = (247, 243, 239)  # warm near-white, hue stays ~0.1
_STAIN_BASE = (226, 168, 204)  # eosin-like pink, hue ~0.87


@dataclass(frozen=True)
class TextureParams:
    """Blob texture of one tissue class, densities per tile-sized area.

    Lesion classes carry two patterns: the core (blob_count/blob_radius) and a
    sparse large-blob margin (margin_count/margin_radius) whose density is
    benign-like, so only properly trained attention ranks margin tiles above
    benign distractors.
    """

    blob_count: tuple[float, float]
    blob_radius: tuple[float, float]
    nucleus_color: tuple[int, int, int]
    margin_count: tuple[float, float] | None = None
    margin_radius: tuple[float, float] | None = None


# low and high grade share the nucleus color and roughly the total dark core
# area per tile, so after downsampling the grades are hard to tell apart and
# only blob granularity at full resolution separates them
DEFAULT_TEXTURES: dict[str, TextureParams] = {
    "benign": TextureParams(blob_count=(2.0, 4.0), blob_radius=(1.6, 2.4), nucleus_color=(118, 84, 156)),
    "low": TextureParams(
        blob_count=(5.0, 7.0),
        blob_radius=(2.8, 3.6),
        nucleus_color=(66, 44, 120),
        margin_count=(1.0, 2.0),
        margin_radius=(2.6, 3.4),
    ),
    "high": TextureParams(
        blob_count=(17.0, 23.0),
        blob_radius=(1.45, 2.05),
        nucleus_color=(66, 44, 120),
        margin_count=(1.0, 2.0),
        margin_radius=(2.2, 3.0),
    ),
}


@dataclass(frozen=True)
class SyntheticSlideSpec:
    """Everything needed to draw one slide deterministically.

    Lesion tiles get a density gradient from a dense core to a sparse margin,
    and a fraction of benign tissue tiles carry dense "distractor" clusters of
    benign-style nuclei; both make naive top-attention ranking fallible in the
    way that motivates instance dropout and cluster-guided selection.
    """

    slide_size: int = 256
    slide_class: str = "benign"
    lesion_fraction: float = 0.0
    background_fraction: float = 0.35
    patient_id: str = ""
    seed: int = 0
    tile_size: int = 32
    overlap_fraction: float = 0.125
    pen_marker: bool = False
    textures: dict[str, TextureParams] = field(default_factory=lambda: dict(DEFAULT_TEXTURES))
    margin_fraction: float = 0.55
    distractor_fraction: float = 0.12
    distractor_count: tuple[float, float] = (8.0, 12.0)

    def __post_init__(self):
        if self.slide_class not in CLASS_NAMES:
            raise ValueError(f"slide_class must be one of {CLASS_NAMES}, got {self.slide_class!r}")
        if self.slide_class == "benign":
            if self.lesion_fraction != 0.0:
                raise ValueError("benign slides must have lesion_fraction 0")
        elif not (0.0 < self.lesion_fraction <= 1.0):
            raise ValueError("cancer slides need lesion_fraction in (0, 1]")


@dataclass(frozen=True)
class GroundTruth:
    """Per-tile labels aligned to the slide's tile grid (row-major)."""

    tile_size: int
    stride: int
    coords: tuple[tuple[int, int], ...]
    labels: tuple[str, ...]

    def label_at(self, x: int, y: int) -> str:
        return self.labels[self.coords.index((x, y))]

    def lesion_coords(self) -> set[tuple[int, int]]:
        return {c for c, lab in zip(self.coords, self.labels) if lab in LESION_LABELS}


def _paint_blobs(img, allowed, n_blobs, texture: TextureParams, rng) -> None:
    coords = np.argwhere(allowed)
    if len(coords) == 0 or n_blobs <= 0:
        return
    h, w = img.shape[:2]
    picks = rng.integers(0, len(coords), size=n_blobs)
    radii = rng.uniform(texture.blob_radius[0], texture.blob_radius[1], size=n_blobs)
    aspects = rng.uniform(0.75, 1.3, size=n_blobs)
    shades = rng.integers(-12, 13, size=(n_blobs, 3))
    base = np.array(texture.nucleus_color, dtype=np.int64)
    for i in range(n_blobs):
        cy, cx = coords[picks[i]]
        rx = radii[i] * aspects[i]
        ry = radii[i] / aspects[i]
        x0, x1 = max(0, int(cx - rx) - 1), min(w, int(cx + rx) + 2)
        y0, y1 = max(0, int(cy - ry) - 1), min(h, int(cy + ry) + 2)
        yy, xx = np.mgrid[y0:y1, x0:x1]
        inside = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0
        color = np.clip(base + shades[i], 0, 255).astype(np.uint8)
        patch = img[y0:y1, x0:x1]
        patch[inside] = color
    return


def _paint_stain(img, region, rng) -> None:
    jitter = rng.integers(-6, 7, size=(int(region.sum()), 3))
    base = np.array(_STAIN_BASE, dtype=np.int64)
    img[region] = np.clip(base + jitter, 0, 255).astype(np.uint8)


def _paint_pen(img, rng) -> None:
    h, w = img.shape[:2]
    strokes = int(rng.integers(1, 3))
    for _ in range(strokes):
        x0, y0, x1, y1 = rng.integers(0, w), rng.integers(0, h), rng.integers(0, w), rng.integers(0, h)
        width = float(rng.uniform(2.0, 3.5))
        steps = int(max(abs(int(x1) - int(x0)), abs(int(y1) - int(y0))) + 1)
        xs = np.linspace(float(x0), float(x1), steps)
        ys = np.linspace(float(y0), float(y1), steps)
        color = np.array((44, 196, 88), dtype=np.uint8)
        for cx, cy in zip(xs, ys):
            ax0, ax1 = max(0, int(cx - width)), min(w, int(cx + width) + 1)
            ay0, ay1 = max(0, int(cy - width)), min(h, int(cy + width) + 1)
            yy, xx = np.mgrid[ay0:ay1, ax0:ax1]
            disc = (xx - cx) ** 2 + (yy - cy) ** 2 <= width**2
            patch = img[ay0:ay1, ax0:ax1]
            patch[disc] = color


def _grow_lesion_tiles(grid: TileGrid, tissue_tiles: list[int], target: int, rng) -> list[int]:
    """Connected randomized growth over the tile grid, restricted to tissue.

    Returns tiles in discovery order (core first), which drives the
    core-to-margin density gradient.
    """
    xs = sorted({x for x, _ in grid.origin_coords})
    nx = len(xs)
    ny = len(grid.origin_coords) // nx
    tissue = set(tissue_tiles)
    chosen: list[int] = []
    chosen_set: set[int] = set()
    frontier: list[int] = []

    def neighbors(i: int):
        row, col = divmod(i, nx)
        for dr, dc in ((0, 1), (0, -1), (1, 0), (-1, 0)):
            r, c = row + dr, col + dc
            if 0 <= r < ny and 0 <= c < nx:
                yield r * nx + c

    def take(i: int):
        chosen.append(i)
        chosen_set.add(i)
        for j in neighbors(i):
            if j in tissue and j not in chosen_set and j not in frontier:
                frontier.append(j)

    while len(chosen) < target:
        if not frontier:
            remaining = sorted(tissue - chosen_set)
            if not remaining:
                break
            take(remaining[int(rng.integers(len(remaining)))])
            continue
        nxt = frontier.pop(int(rng.integers(len(frontier))))
        if nxt not in chosen_set:
            take(nxt)
    return chosen


def generate_slide(spec: SyntheticSlideSpec) -> tuple[np.ndarray, GroundTruth]:
    """Draw one slide and its aligned per-tile ground truth."""
    rng = as_rng(spec.seed)
    n = spec.slide_size
    img = np.clip(
        np.array(_BACKGROUND_BASE, dtype=np.int64)[None, None, :] + rng.integers(-2, 3, size=(n, n, 3)),
        0,
        255,
    ).astype(np.uint8)

    # tissue ellipse with area ~ (1 - background_fraction) of the slide
    frac = 1.0 - spec.background_fraction
    scale = np.sqrt(4.0 * frac / np.pi)
    squeeze = float(rng.uniform(0.88, 1.14))
    rx = min(0.49 * n, 0.5 * n * scale * squeeze)
    ry = min(0.49 * n, 0.5 * n * scale / squeeze)
    cx = 0.5 * n + float(rng.uniform(-0.04, 0.04)) * n
    cy = 0.5 * n + float(rng.uniform(-0.04, 0.04)) * n
    yy, xx = np.mgrid[0:n, 0:n]
    tissue = ((xx - cx) / rx) ** 2 + ((yy - cy) / ry) ** 2 <= 1.0

    _paint_stain(img, tissue, rng)
    textures = spec.textures
    tile_area = spec.tile_size**2
    benign_tex = textures["benign"]
    benign_density = float(np.mean(benign_tex.blob_count))
    n_benign = int(round(tissue.sum() / tile_area * benign_density))
    _paint_blobs(img, tissue, n_benign, benign_tex, rng)

    grid = extract_tile_grid(n, n, spec.tile_size, spec.overlap_fraction)
    t = spec.tile_size
    tissue_frac = np.array(
        [tissue[y : y + t, x : x + t].sum() / tile_area for x, y in grid.origin_coords]
    )
    tissue_tiles = [i for i, f in enumerate(tissue_frac) if f >= 0.8]

    # lesion paint is inset by half the tile overlap so adjacent benign tiles
    # pick up almost no lesion texture through the overlap strips; otherwise
    # the strips hand the bag model a halo shortcut that bypasses the lesion
    inset = max(0, (t - grid.stride) // 2)

    def tile_rect_mask(i: int) -> np.ndarray:
        m = np.zeros((n, n), dtype=bool)
        x, y = grid.origin_coords[i]
        m[y + inset : y + t - inset, x + inset : x + t - inset] = True
        return m

    lesion_order: list[int] = []
    if spec.slide_class != "benign" and tissue_tiles:
        target = max(1, int(round(spec.lesion_fraction * len(tissue_tiles))))
        lesion_order = _grow_lesion_tiles(grid, tissue_tiles, target, rng)
        region = np.zeros((n, n), dtype=bool)
        for i in lesion_order:
            region |= tile_rect_mask(i)
        _paint_stain(img, region, rng)
        tex = textures[spec.slide_class]
        n_margin = int(round(spec.margin_fraction * len(lesion_order)))
        n_core = len(lesion_order) - n_margin
        margin_tex = TextureParams(
            blob_count=tex.margin_count or tex.blob_count,
            blob_radius=tex.margin_radius or tex.blob_radius,
            nucleus_color=tex.nucleus_color,
        )
        # discovery order puts the core first; the outer tiles get the sparse
        # margin pattern
        for rank, i in enumerate(lesion_order):
            t_i = tex if rank < n_core else margin_tex
            count = max(1, int(round(rng.uniform(*t_i.blob_count))))
            _paint_blobs(img, tile_rect_mask(i), count, t_i, rng)

    lesion_tiles = set(lesion_order)
    benign_tissue_tiles = [i for i in tissue_tiles if i not in lesion_tiles]
    n_distract = int(round(spec.distractor_fraction * len(benign_tissue_tiles)))
    if n_distract > 0 and benign_tissue_tiles:
        picks = rng.permutation(len(benign_tissue_tiles))[:n_distract]
        for pi in picks:
            i = benign_tissue_tiles[pi]
            count = int(round(rng.uniform(*spec.distractor_count)))
            _paint_blobs(img, tile_rect_mask(i), count, benign_tex, rng)

    if spec.pen_marker:
        _paint_pen(img, rng)

    lesion_label = _CLASS_TO_LESION_LABEL.get(spec.slide_class, LABEL_BENIGN)
    labels = []
    for i, f in enumerate(tissue_frac):
        if i in lesion_tiles:
            labels.append(lesion_label)
        elif f >= 0.8:
            labels.append(LABEL_BENIGN)
        else:
            labels.append(LABEL_BACKGROUND)
    truth = GroundTruth(
        tile_size=t,
        stride=grid.stride,
        coords=grid.origin_coords,
        labels=tuple(labels),
    )
    return img, truth


def write_truth_csv(path, truth: GroundTruth) -> None:
    xs = sorted({x for x, _ in truth.coords})
    nx = len(xs)
    ny = len(truth.coords) // nx
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{truth.tile_size},{truth.stride},{nx},{ny}\n")
        for row in range(ny):
            fh.write(",".join(truth.labels[row * nx : (row + 1) * nx]))
            fh.write("\n")


def read_truth_csv(path) -> GroundTruth:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    tile_size, stride, nx, ny = (int(v) for v in lines[0].split(","))
    labels: list[str] = []
    for row in range(ny):
        labels.extend(lines[1 + row].split(","))
    coords = tuple((c * stride, r * stride) for r in range(ny) for c in range(nx))
    return GroundTruth(tile_size=tile_size, stride=stride, coords=coords, labels=tuple(labels))


@dataclass(frozen=True)
class SlideRecord:
    """One manifest row."""

    slide_id: str
    path: str
    class_name: str
    patient: str
    seed: int
    split: str
    truth_path: str


def _patient_splits(patients: list[str], fractions, rng) -> dict[str, str]:
    p = len(patients)
    n_val = max(1, int(round(p * fractions[1])))
    n_test = max(1, int(round(p * fractions[2])))
    n_train = p - n_val - n_test
    if n_train < 1:
        raise ValueError(f"cannot split {p} patients into three non-empty groups")
    order = [patients[i] for i in rng.permutation(p)]
    split = {}
    for i, name in enumerate(order):
        if i < n_train:
            split[name] = "train"
        elif i < n_train + n_val:
            split[name] = "val"
        else:
            split[name] = "test"
    return split


def generate_dataset(
    out_dir,
    n_per_class: int = 40,
    patients_per_class: int = 5,
    seed: int = 1,
    slide_size: int = 256,
    tile_size: int = 32,
    overlap_fraction: float = 0.125,
    lesion_fraction_range: tuple[float, float] = (0.18, 0.32),
    background_fraction_range: tuple[float, float] = (0.25, 0.42),
    pen_marker_fraction: float = 0.25,
    split_fractions: tuple[float, float, float] = (0.6, 0.2, 0.2),
    write_images: bool = True,
) -> list[SlideRecord]:
    """Generate a patient-grouped, split-disjoint synthetic dataset.

    Slides and ground truth land under ``out_dir`` with a JSONL manifest at
    ``out_dir/manifest.jsonl``. Regenerating with the same arguments produces
    byte-identical files.
    """
    if n_per_class < 1:
        raise ValueError("invalid class balance")
    if patients_per_class < 3:
        raise ValueError("patients_per_class must be >= 3 for disjoint splits")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = as_rng(derive_seed(seed, "dataset"))
    records: list[SlideRecord] = []
    for class_name in CLASS_NAMES:
        patients = [f"{class_name}-p{j:02d}" for j in range(patients_per_class)]
        split_of = _patient_splits(patients, split_fractions, rng)
        for s in range(n_per_class):
            slide_id = f"{class_name}-{s:03d}"
            patient = patients[s % patients_per_class]
            if class_name == "benign":
                lesion = 0.0
            else:
                lesion = float(rng.uniform(*lesion_fraction_range))
            background = float(rng.uniform(*background_fraction_range))
            pen = bool(rng.random() < pen_marker_fraction)
            slide_seed = derive_seed(seed, f"slide:{slide_id}")
            spec = SyntheticSlideSpec(
                slide_size=slide_size,
                slide_class=class_name,
                lesion_fraction=lesion,
                background_fraction=background,
                patient_id=patient,
                seed=slide_seed,
                tile_size=tile_size,
                overlap_fraction=overlap_fraction,
                pen_marker=pen,
            )
            image, truth = generate_slide(spec)
            path = out_dir / "slides" / f"{slide_id}.png"
            truth_path = out_dir / "truth" / f"{slide_id}.csv"
            if write_images:
                write_png(path, image)
                write_truth_csv(truth_path, truth)
            records.append(
                SlideRecord(
                    slide_id=slide_id,
                    path=str(path.relative_to(out_dir)),
                    class_name=class_name,
                    patient=patient,
                    seed=slide_seed,
                    split=split_of[patient],
                    truth_path=str(truth_path.relative_to(out_dir)),
                )
            )
    write_manifest(out_dir / "manifest.jsonl", records)
    return records


def write_manifest(path, records: list[SlideRecord]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(
                json.dumps(
                    {
                        "slide_id": rec.slide_id,
                        "path": rec.path,
                        "class": rec.class_name,
                        "patient": rec.patient,
                        "seed": rec.seed,
                        "split": rec.split,
                        "truth_path": rec.truth_path,
                    },
                    sort_keys=True,
                )
            )
            fh.write("\n")


def read_manifest(path) -> list[SlideRecord]:
    records = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        records.append(
            SlideRecord(
                slide_id=obj["slide_id"],
                path=obj["path"],
                class_name=obj["class"],
                patient=obj["patient"],
                seed=int(obj["seed"]),
                split=obj["split"],
                truth_path=obj["truth_path"],
            )
        )
    return records


def selection_recall(result, truth: GroundTruth) -> float:
    """Fraction of ground-truth lesion tiles present in the selected set."""
    lesion = truth.lesion_coords()
    if not lesion:
        raise ValueError("no positives")
    selected = {(ref.x, ref.y) for ref in result.selected}
    return len(selected & lesion) / len(lesion)
