"""Two-stage slide classification: preparation, variants, training, evaluation.

Stage 1 screens low-magnification bags for cancer versus non-cancer; its
attention map and instance features drive tile selection; stage 2 grades the
selected tiles at full resolution into benign / low / high. Ablation variants
toggle the selection method, instance dropout, pretraining, and stage count.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np

from .config import RunConfig
from .mil import MilAttentionClassifier
from .parallel import single_thread_blas
from .preprocess import (
    TileRef,
    blue_ratio,
    downsample,
    extract_tile_grid,
    filter_tiles,
    mean_blue_ratio,
    read_png,
    tissue_mask,
)
from .reinhard import ColorStats, ReinhardNormalizer, lab_stats
from .seeds import derive_seed
from .selection import SelectionResult, select_attention_clusters, select_top_attention
from .synthdata import (
    CLASS_NAMES,
    LABEL_BENIGN,
    LABEL_HIGH,
    LABEL_LOW,
    GroundTruth,
    SlideRecord,
    SyntheticSlideSpec,
    generate_slide,
    read_truth_csv,
)

SELECTION_BLUE_RATIO = "blue-ratio"
SELECTION_ATT_TOPK = "att-topk"
SELECTION_ATT_CLUSTER = "att-cluster"

_TILE_LABEL_TO_CLASS = {LABEL_BENIGN: 0, LABEL_LOW: 1, LABEL_HIGH: 2}

# Fixed seed for the shared color-normalization reference tile; independent of
# run seeds so every dataset is normalized against the same target.
_REFERENCE_SEED = 927154

# Fraction of clearly-dark pixels above which a lesion tile counts as an
# obvious focus for tile-level supervision. Relative to the tile's own mean
# luminance so it is robust to per-tile color normalization.
_SALIENT_DARK_FRACTION = 0.15


def _salient_lesion_tile(high_tile: np.ndarray) -> bool:
    lum = high_tile.astype(np.float64).mean(axis=2)
    dark_fraction = float((lum < lum.mean() - 25.0).mean())
    return dark_fraction > _SALIENT_DARK_FRACTION


@dataclass(frozen=True)
class VariantSpec:
    """One Table-style ablation variant; the name fixes every toggle."""

    name: str
    two_stage: bool
    selection: str | None
    stage1_dropout: bool
    pretrain: bool


VARIANTS: dict[str, VariantSpec] = {
    "one-stage": VariantSpec("one-stage", False, None, True, True),
    "br-two-stage": VariantSpec("br-two-stage", True, SELECTION_BLUE_RATIO, True, True),
    "att-two-stage": VariantSpec("att-two-stage", True, SELECTION_ATT_TOPK, True, True),
    "att-no-dropout": VariantSpec("att-no-dropout", True, SELECTION_ATT_TOPK, False, True),
    "no-transfer": VariantSpec("no-transfer", True, SELECTION_ATT_CLUSTER, True, False),
    "att-cluster-two-stage": VariantSpec("att-cluster-two-stage", True, SELECTION_ATT_CLUSTER, True, True),
}


def resolve_variant(name: str) -> VariantSpec:
    try:
        return VARIANTS[name]
    except KeyError:
        raise ValueError(f"unknown variant {name!r}; valid: {', '.join(sorted(VARIANTS))}") from None


@dataclass
class PreparedSlide:
    """One slide after masking, tiling, filtering, and normalization."""

    slide_id: str
    patient: str
    class_name: str
    label: int
    split: str
    high_tiles: np.ndarray
    low_tiles: np.ndarray
    tile_refs: list[TileRef]
    # mean blue ratio of each tile, computed on the raw (pre-normalization)
    # pixels; per-tile color normalization would flatten the ranking
    blue_ratio_scores: np.ndarray | None = None
    truth: GroundTruth | None = None
    image: np.ndarray | None = field(default=None, repr=False)

    @property
    def empty(self) -> bool:
        return len(self.tile_refs) == 0

    @property
    def binary_label(self) -> int:
        return 0 if self.label == 0 else 1


@dataclass
class Prediction:
    slide_id: str
    label: int
    probs: np.ndarray | None
    alpha: np.ndarray | None
    selection: SelectionResult | None
    flagged: bool = False


@dataclass
class EvalReport:
    accuracy: float
    confusion: np.ndarray  # rows = truth, cols = prediction
    per_slide: list[dict]

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.astype(int).tolist(),
            "per_slide": self.per_slide,
        }

    def write_json(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def write_confusion_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("truth\\pred," + ",".join(CLASS_NAMES) + "\n")
            for name, row in zip(CLASS_NAMES, self.confusion.astype(int)):
                fh.write(name + "," + ",".join(str(v) for v in row) + "\n")


@lru_cache(maxsize=4)
def default_reference_stats(tile_size: int = 32) -> ColorStats:
    """Color-normalization target from a canonical benign tissue tile."""
    spec = SyntheticSlideSpec(slide_class="benign", seed=_REFERENCE_SEED, tile_size=tile_size)
    image, truth = generate_slide(spec)
    for (x, y), label in zip(truth.coords, truth.labels):
        if label == LABEL_BENIGN:
            return lab_stats(image[y : y + tile_size, x : x + tile_size])
    raise RuntimeError("reference slide produced no tissue tile")


def prepare_slide(
    image: np.ndarray,
    slide_id: str,
    config: RunConfig,
    normalizer: ReinhardNormalizer,
    *,
    patient: str = "",
    class_name: str = "benign",
    split: str = "",
    truth: GroundTruth | None = None,
    keep_image: bool = False,
) -> PreparedSlide:
    """Mask, tile, filter, normalize, and downsample one slide."""
    h, w = image.shape[:2]
    mask = tissue_mask(image, config.hue_lo, config.hue_hi, config.morph_radius)
    grid = extract_tile_grid(w, h, config.tile_size, config.overlap_fraction)
    refs = filter_tiles(grid, mask, config.min_tissue, slide_id=slide_id)
    t = config.tile_size
    high = np.zeros((len(refs), t, t, 3), dtype=np.uint8)
    low_t = t // config.low_scale_factor
    low = np.zeros((len(refs), low_t, low_t, 3), dtype=np.uint8)
    br_scores = np.zeros(len(refs))
    for i, ref in enumerate(refs):
        raw = image[ref.y : ref.y + t, ref.x : ref.x + t]
        br_scores[i] = float(blue_ratio(raw).mean())
        tile = normalizer.transform(raw)
        high[i] = tile
        low[i] = downsample(tile, config.low_scale_factor)
    label = CLASS_NAMES.index(class_name)
    return PreparedSlide(
        slide_id=slide_id,
        patient=patient,
        class_name=class_name,
        label=label,
        split=split,
        high_tiles=high,
        low_tiles=low,
        tile_refs=refs,
        blue_ratio_scores=br_scores,
        truth=truth,
        image=image if keep_image else None,
    )


def prepare_dataset(
    records: list[SlideRecord],
    dataset_dir,
    config: RunConfig,
    keep_images: bool = False,
    threads: int = 1,
) -> list[PreparedSlide]:
    """Prepare every manifest record; order follows the manifest."""
    dataset_dir = Path(dataset_dir)
    normalizer = ReinhardNormalizer(reference_stats=default_reference_stats(config.tile_size)).fit(None)

    def _one(rec: SlideRecord) -> PreparedSlide:
        image = read_png(dataset_dir / rec.path)
        truth = read_truth_csv(dataset_dir / rec.truth_path) if rec.truth_path else None
        return prepare_slide(
            image,
            rec.slide_id,
            config,
            normalizer,
            patient=rec.patient,
            class_name=rec.class_name,
            split=rec.split,
            truth=truth,
            keep_image=keep_images,
        )

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_one, records))
    return [_one(rec) for rec in records]


def split_slides(slides: list[PreparedSlide]) -> dict[str, list[PreparedSlide]]:
    out: dict[str, list[PreparedSlide]] = {"train": [], "val": [], "test": []}
    for s in slides:
        out.setdefault(s.split, []).append(s)
    return out


def check_patient_disjoint(*splits: list[PreparedSlide]) -> None:
    seen: dict[str, int] = {}
    for i, group in enumerate(splits):
        patients = {s.patient for s in group}
        for p in patients:
            if p in seen and seen[p] != i:
                raise ValueError(f"patient {p!r} spans multiple splits")
            seen[p] = i


class TwoStageClassifier:
    """Orchestrates the full variant pipeline over prepared slides.

    Follows the scikit-learn estimator conventions (constructor stores
    hyperparameters verbatim; fitted state carries trailing underscores) but
    consumes PreparedSlide objects rather than feature matrices.
    """

    def __init__(
        self,
        variant: str = "att-cluster-two-stage",
        hidden_dim: int = 32,
        channels: tuple[int, int, int] = (8, 16, 32),
        reduce_channels: int = 8,
        feature_dim: int = 64,
        tile_size: int = 32,
        low_scale_factor: int = 2,
        epochs: int = 50,
        warmup_epochs: int = 5,
        lr_head: float = 5e-3,
        lr_extractor: float = 1e-4,
        dropout_rate: float = 0.5,
        plateau_patience: int = 10,
        plateau_factor: float = 0.1,
        adam_beta1: float = 0.9,
        adam_beta2: float = 0.999,
        adam_eps: float = 1e-8,
        pretrain_epochs: int = 50,
        pretrain_lr: float = 3e-3,
        pretrain_batch: int = 32,
        max_pretrain_tiles: int = 1200,
        selection_budget: int = 16,
        pca_dim: int = 8,
        n_clusters: int = 4,
        seed: int = 0,
    ):
        self.variant = variant
        self.hidden_dim = hidden_dim
        self.channels = channels
        self.reduce_channels = reduce_channels
        self.feature_dim = feature_dim
        self.tile_size = tile_size
        self.low_scale_factor = low_scale_factor
        self.epochs = epochs
        self.warmup_epochs = warmup_epochs
        self.lr_head = lr_head
        self.lr_extractor = lr_extractor
        self.dropout_rate = dropout_rate
        self.plateau_patience = plateau_patience
        self.plateau_factor = plateau_factor
        self.adam_beta1 = adam_beta1
        self.adam_beta2 = adam_beta2
        self.adam_eps = adam_eps
        self.pretrain_epochs = pretrain_epochs
        self.pretrain_lr = pretrain_lr
        self.pretrain_batch = pretrain_batch
        self.max_pretrain_tiles = max_pretrain_tiles
        self.selection_budget = selection_budget
        self.pca_dim = pca_dim
        self.n_clusters = n_clusters
        self.seed = seed

    @classmethod
    def from_config(cls, config: RunConfig, variant: str | None = None, seed: int | None = None):
        return cls(
            variant=variant if variant is not None else config.variant,
            hidden_dim=config.hidden_dim,
            channels=tuple(config.channels),
            reduce_channels=config.reduce_channels,
            feature_dim=config.feature_dim,
            tile_size=config.tile_size,
            low_scale_factor=config.low_scale_factor,
            epochs=config.epochs,
            warmup_epochs=config.warmup_epochs,
            lr_head=config.lr_head,
            lr_extractor=config.lr_extractor,
            dropout_rate=config.dropout_rate,
            plateau_patience=config.plateau_patience,
            plateau_factor=config.plateau_factor,
            adam_beta1=config.adam_beta1,
            adam_beta2=config.adam_beta2,
            adam_eps=config.adam_eps,
            pretrain_epochs=config.pretrain_epochs,
            pretrain_lr=config.pretrain_lr,
            pretrain_batch=config.pretrain_batch,
            max_pretrain_tiles=config.max_pretrain_tiles,
            selection_budget=config.selection_budget,
            pca_dim=config.pca_dim,
            n_clusters=config.n_clusters,
            seed=seed if seed is not None else config.seed,
        )

    def get_params(self, deep: bool = True) -> dict:
        import inspect

        names = [p for p in inspect.signature(type(self).__init__).parameters if p != "self"]
        return {n: getattr(self, n) for n in names}

    def set_params(self, **kwargs):
        valid = self.get_params()
        for k, v in kwargs.items():
            if k not in valid:
                raise ValueError(f"invalid parameter {k!r}")
            setattr(self, k, v)
        return self

    # ------------------------------------------------------------------ fit

    def _mil_params(self, n_classes: int, input_size: int, dropout: float, seed_tag: str) -> dict:
        return dict(
            n_classes=n_classes,
            hidden_dim=self.hidden_dim,
            input_size=input_size,
            channels=tuple(self.channels),
            reduce_channels=self.reduce_channels,
            feature_dim=self.feature_dim,
            epochs=self.epochs,
            warmup_epochs=self.warmup_epochs,
            lr_head=self.lr_head,
            lr_extractor=self.lr_extractor,
            dropout_rate=dropout,
            plateau_patience=self.plateau_patience,
            plateau_factor=self.plateau_factor,
            adam_beta1=self.adam_beta1,
            adam_beta2=self.adam_beta2,
            adam_eps=self.adam_eps,
            seed=derive_seed(self.seed, seed_tag),
        )

    def _pretrain_tiles(self, slides: list[PreparedSlide], low: bool):
        # Mirrors a tile-level dataset drawn from annotated tumor foci: lesion
        # tiles enter only when their dark-nucleus area is prominent, so the
        # subtle lesion margin stays outside the supervised tile set.
        tiles_by_class: dict[int, list[np.ndarray]] = {0: [], 1: [], 2: []}
        for s in slides:
            if s.truth is None or s.empty:
                continue
            stack = s.low_tiles if low else s.high_tiles
            for i, ref in enumerate(s.tile_refs):
                label = s.truth.label_at(ref.x, ref.y)
                cls = _TILE_LABEL_TO_CLASS.get(label)
                if cls is None:
                    continue
                if cls > 0 and not _salient_lesion_tile(s.high_tiles[i]):
                    continue
                tiles_by_class[cls].append(stack[i])
        rng = np.random.default_rng(derive_seed(self.seed, f"pretrain-subsample:{'low' if low else 'high'}"))
        cap = max(1, self.max_pretrain_tiles // 3)
        tiles, labels = [], []
        for cls, items in tiles_by_class.items():
            if not items:
                continue
            order = rng.permutation(len(items))[:cap]
            tiles.extend(items[i] for i in order)
            labels.extend([cls] * len(order))
        if not tiles:
            return None, None
        return np.stack(tiles), np.array(labels, dtype=np.int64)

    def _pretrained_extractor(self, slides, low: bool, cache: dict):
        from .extractor import ExtractorSpec, init_extractor, pretrain_extractor

        input_size = self.tile_size // self.low_scale_factor if low else self.tile_size
        key = ("pretrain", input_size)
        if key in cache:
            return cache[key]
        spec = ExtractorSpec(
            input_size=input_size,
            channels=tuple(self.channels),
            reduce_channels=self.reduce_channels,
            feature_dim=self.feature_dim,
        )
        tag = f"pretrain:{'low' if low else 'high'}"
        params = init_extractor(spec, derive_seed(self.seed, tag + ":init"))
        tiles, labels = self._pretrain_tiles(slides, low)
        if tiles is not None and np.unique(labels).size >= 2 and self.pretrain_epochs > 0:
            params, _, _ = pretrain_extractor(
                params,
                spec,
                tiles,
                labels,
                epochs=self.pretrain_epochs,
                learning_rate=self.pretrain_lr,
                batch_size=self.pretrain_batch,
                seed=derive_seed(self.seed, tag + ":train"),
            )
        cache[key] = params
        return params

    def fit(self, slides: list[PreparedSlide], y=None, validation: list[PreparedSlide] | None = None, cache: dict | None = None):
        """Train the variant on prepared slides.

        ``validation`` defaults to the training slides. ``cache`` optionally
        shares deterministic sub-results (pretraining, stage-1 models) between
        variants trained with the same seed and configuration.
        """
        spec = resolve_variant(self.variant)
        if self.selection_budget < 1:
            raise ValueError("empty selection budget")
        train = [s for s in slides if not s.empty]
        if not train:
            raise ValueError("empty training split")
        val = [s for s in (validation if validation is not None else slides) if not s.empty]
        if not val:
            raise ValueError("empty validation split")
        if validation is not None:
            check_patient_disjoint(train, val)
        cache = {} if cache is None else cache

        ext_low = ext_high = None
        if spec.pretrain:
            ext_low = self._pretrained_extractor(train, low=True, cache=cache)
            if spec.two_stage:
                ext_high = self._pretrained_extractor(train, low=False, cache=cache)

        low_size = self.tile_size // self.low_scale_factor
        if not spec.two_stage:
            key = ("one-stage",)
            if key in cache:
                self.stage1_ = cache[key]
            else:
                model = MilAttentionClassifier(
                    **self._mil_params(3, low_size, self.dropout_rate, "stage1")
                )
                model.fit(
                    [s.low_tiles for s in train],
                    [s.label for s in train],
                    validation=([s.low_tiles for s in val], [s.label for s in val]),
                    extractor_init=ext_low,
                )
                cache[key] = model
                self.stage1_ = model
            self.stage2_ = None
            return self

        stage1 = None
        if spec.selection != SELECTION_BLUE_RATIO:
            dropout = self.dropout_rate if spec.stage1_dropout else 0.0
            key = ("stage1", dropout, spec.pretrain)
            if key in cache:
                stage1 = cache[key]
            else:
                stage1 = MilAttentionClassifier(**self._mil_params(2, low_size, dropout, "stage1"))
                stage1.fit(
                    [s.low_tiles for s in train],
                    [s.binary_label for s in train],
                    validation=([s.low_tiles for s in val], [s.binary_label for s in val]),
                    extractor_init=ext_low,
                )
                cache[key] = stage1
        self.stage1_ = stage1

        stage2_key = ("stage2", spec.selection, spec.stage1_dropout, spec.pretrain)
        if stage2_key in cache:
            self.stage2_ = cache[stage2_key]
            return self
        stage2_bags, stage2_labels = [], []
        for s in train:
            sel = self.select_tiles(s)
            stage2_bags.append(s.high_tiles[sel.selected_indices])
            stage2_labels.append(s.label)
        val_bags = []
        for s in val:
            sel = self.select_tiles(s)
            val_bags.append(s.high_tiles[sel.selected_indices])
        stage2 = MilAttentionClassifier(
            **self._mil_params(3, self.tile_size, self.dropout_rate, "stage2")
        )
        stage2.fit(
            stage2_bags,
            stage2_labels,
            validation=(val_bags, [s.label for s in val]),
            extractor_init=ext_high,
        )
        cache[stage2_key] = stage2
        self.stage2_ = stage2
        return self

    # ------------------------------------------------------------- selection

    def select_tiles(self, slide: PreparedSlide) -> SelectionResult:
        """Apply the variant's selection method to one prepared slide."""
        spec = resolve_variant(self.variant)
        if self.selection_budget < 1:
            raise ValueError("empty selection budget")
        if slide.empty:
            raise ValueError(f"slide {slide.slide_id} has no tiles to select from")
        method = spec.selection if spec.two_stage else SELECTION_ATT_TOPK
        if method == SELECTION_BLUE_RATIO:
            if slide.blue_ratio_scores is not None:
                scores = np.asarray(slide.blue_ratio_scores, dtype=np.float64)
            else:
                scores = mean_blue_ratio(slide.high_tiles)
            pseudo = scores / scores.sum() if scores.sum() > 0 else np.full(len(scores), 1.0 / len(scores))
            return select_top_attention(slide.tile_refs, pseudo, n_select=self.selection_budget)
        if self.stage1_ is None:
            raise RuntimeError("stage-1 model is not fitted")
        _, alpha, features = self.stage1_.forward(slide.low_tiles)
        if method == SELECTION_ATT_TOPK:
            return select_top_attention(slide.tile_refs, alpha, n_select=self.selection_budget)
        return select_attention_clusters(
            slide.tile_refs,
            alpha,
            features,
            n_components=self.pca_dim,
            n_clusters=self.n_clusters,
            total=self.selection_budget,
            seed=derive_seed(self.seed, f"kmeans:{slide.slide_id}"),
        )

    # ------------------------------------------------------------- predict

    def predict_one(self, slide: PreparedSlide) -> Prediction:
        """Deterministic, dropout-free prediction for one slide."""
        spec = resolve_variant(self.variant)
        if self.selection_budget < 1:
            raise ValueError("empty selection budget")
        if slide.empty:
            return Prediction(slide.slide_id, 0, None, None, None, flagged=True)
        if not spec.two_stage:
            probs, alpha, _ = self.stage1_.forward(slide.low_tiles)
            return Prediction(slide.slide_id, int(probs.argmax()), probs, alpha, None)
        selection = self.select_tiles(slide)
        alpha = None
        if spec.selection != SELECTION_BLUE_RATIO:
            alpha = selection.alpha
        bag = slide.high_tiles[selection.selected_indices]
        probs, _, _ = self.stage2_.forward(bag)
        return Prediction(slide.slide_id, int(probs.argmax()), probs, alpha, selection)

    def predict(self, slides: list[PreparedSlide]) -> np.ndarray:
        return np.array([self.predict_one(s).label for s in slides], dtype=np.int64)

    # ---------------------------------------------------------- persistence

    def save_checkpoints(self, ckpt_dir) -> list[str]:
        """Write each trained stage as a binary tensor file; returns paths."""
        from .tensorio import save_tensors

        ckpt_dir = Path(ckpt_dir)
        written = []
        for name, model in (("stage1", self.stage1_), ("stage2", self.stage2_)):
            if model is None:
                continue
            path = ckpt_dir / f"{name}.milw"
            save_tensors(path, model.export_tensors())
            written.append(str(path))
        return written

    def load_checkpoints(self, ckpt_dir):
        """Rebuild stage models from checkpoint tensors written earlier."""
        from .tensorio import load_tensors

        spec = resolve_variant(self.variant)
        ckpt_dir = Path(ckpt_dir)
        low_size = self.tile_size // self.low_scale_factor
        self.stage1_ = None
        self.stage2_ = None
        stage1_path = ckpt_dir / "stage1.milw"
        if stage1_path.exists():
            n1 = 3 if not spec.two_stage else 2
            model = MilAttentionClassifier(**self._mil_params(n1, low_size, 0.0, "stage1"))
            model.load_tensors(load_tensors(stage1_path))
            self.stage1_ = model
        stage2_path = ckpt_dir / "stage2.milw"
        if stage2_path.exists():
            model = MilAttentionClassifier(**self._mil_params(3, self.tile_size, 0.0, "stage2"))
            model.load_tensors(load_tensors(stage2_path))
            self.stage2_ = model
        if self.stage1_ is None and self.stage2_ is None:
            raise ValueError(f"no checkpoints found under {ckpt_dir}")
        return self

    def evaluate(self, slides: list[PreparedSlide]) -> EvalReport:
        """Accuracy and a truth-by-prediction confusion matrix."""
        if not slides:
            raise ValueError("empty test set")
        confusion = np.zeros((3, 3), dtype=np.int64)
        per_slide = []
        with single_thread_blas():
            predictions = [self.predict_one(s) for s in slides]
        for s, pred in zip(slides, predictions):
            confusion[s.label, pred.label] += 1
            per_slide.append(
                {
                    "slide_id": s.slide_id,
                    "truth": s.class_name,
                    "prediction": CLASS_NAMES[pred.label],
                    "flagged": bool(pred.flagged),
                }
            )
        accuracy = float(np.trace(confusion) / confusion.sum())
        return EvalReport(accuracy=accuracy, confusion=confusion, per_slide=per_slide)


@dataclass
class AblationResult:
    rows: list[tuple[str, int, float]]  # variant, seed, accuracy
    variants: list[str]
    seeds: list[int]

    def mean_accuracy(self, variant: str) -> float:
        vals = [acc for v, _, acc in self.rows if v == variant]
        return float(np.mean(vals))

    def per_seed(self, variant: str) -> list[float]:
        return [acc for v, _, acc in self.rows if v == variant]

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("variant,seed,accuracy\n")
            for variant, seed, acc in self.rows:
                fh.write(f"{variant},{seed},{acc!r}\n")


def run_ablation_suite(
    splits: dict[str, list[PreparedSlide]],
    config: RunConfig,
    variants: list[str] | None = None,
    seeds: list[int] | None = None,
) -> AblationResult:
    """Train and evaluate every variant for every seed over shared splits.

    Deterministic per (config, seeds): rows come out in (seed, variant) order.
    Needs at least three seeds so per-variant means are meaningful.
    """
    variants = list(variants) if variants is not None else list(VARIANTS)
    seeds = list(seeds) if seeds is not None else list(config.ablation_seeds)
    if len(seeds) < 3:
        raise ValueError("ablation needs at least 3 seeds")
    rows = []
    for seed in seeds:
        cache: dict = {}
        for name in variants:
            model = TwoStageClassifier.from_config(config, variant=name, seed=seed)
            model.fit(splits["train"], validation=splits["val"], cache=cache)
            report = model.evaluate(splits["test"])
            rows.append((name, seed, report.accuracy))
    return AblationResult(rows=rows, variants=variants, seeds=seeds)
