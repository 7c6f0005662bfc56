"""Run configuration: defaults, JSON file loading, and override resolution.

Precedence is defaults < config file < explicit overrides (CLI flags). A
single master seed determines every downstream RNG through tagged derivation
(see ``slidemil.seeds``), so a frozen config reproduces a run bit-exactly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path


@dataclass
class RunConfig:
    # paths
    dataset_dir: str = "data"
    output_dir: str = "runs/default"
    # dataset generation
    n_per_class: int = 40
    patients_per_class: int = 5
    slide_size: int = 256
    lesion_fraction_lo: float = 0.16
    lesion_fraction_hi: float = 0.28
    background_fraction_lo: float = 0.25
    background_fraction_hi: float = 0.42
    pen_marker_fraction: float = 0.25
    # preprocessing
    tile_size: int = 32
    overlap_fraction: float = 0.125
    min_tissue: float = 0.8
    hue_lo: float = 0.60
    hue_hi: float = 0.98
    morph_radius: int = 2
    low_scale_factor: int = 2
    # extractor
    channels: tuple[int, int, int] = (8, 16, 32)
    reduce_channels: int = 8
    feature_dim: int = 64
    hidden_dim: int = 32
    # slide-model training
    epochs: int = 50
    warmup_epochs: int = 5
    lr_head: float = 5e-3
    lr_extractor: float = 1e-4
    dropout_rate: float = 0.5
    plateau_patience: int = 10
    plateau_factor: float = 0.1
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # tile-level pretraining
    pretrain_epochs: int = 50
    pretrain_lr: float = 3e-3
    pretrain_batch: int = 32
    max_pretrain_tiles: int = 1200
    # selection
    selection_budget: int = 16
    pca_dim: int = 8
    n_clusters: int = 4
    # run control
    variant: str = "att-cluster-two-stage"
    seed: int = 1
    ablation_seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    threads: int = 1

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, values: dict) -> "RunConfig":
        known = set(cls.field_names())
        unknown = set(values) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        coerced = {}
        for f in dataclasses.fields(cls):
            if f.name not in values:
                continue
            v = values[f.name]
            if isinstance(f.default, tuple) and not isinstance(v, tuple):
                v = tuple(v)
            coerced[f.name] = v
        return cls(**coerced)

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def with_overrides(self, overrides: dict) -> "RunConfig":
        merged = self.to_dict()
        merged.update({k: v for k, v in overrides.items() if v is not None})
        return self.from_dict(merged)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    def to_json(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    cfg = RunConfig.from_file(path) if path else RunConfig()
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
