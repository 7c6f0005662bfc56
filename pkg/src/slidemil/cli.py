"""Command-line entry point.

Subcommands: generate | preprocess | train | eval | ablate | visualize.
Every RunConfig key is exposed as a kebab-case flag; precedence is defaults <
--config file < flags. Exit codes: 0 success, 1 runtime failure, 2
usage/config error. All artifacts land under the run's output directory:
config.json, checkpoints/, logs/, reports/, overlays/.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .config import RunConfig, load_config
from .mil import write_epoch_csv
from .pipeline import (
    VARIANTS,
    TwoStageClassifier,
    prepare_dataset,
    run_ablation_suite,
    split_slides,
)
from .preprocess import (
    blue_ratio,
    extract_tile_grid,
    filter_tiles,
    read_png,
    tissue_mask,
    write_blue_ratio_csv,
    write_mask_png,
)
from .selection import write_selection_csv
from .synthdata import generate_dataset, read_manifest
from .visualize import write_overlay_png


class ConfigError(ValueError):
    pass


def _parse_tuple(text: str):
    return tuple(int(v) if v.strip().lstrip("-").isdigit() else float(v) for v in text.split(","))


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="JSON config file")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if isinstance(f.default, bool):
            parser.add_argument(flag, type=lambda s: s.lower() in ("1", "true", "yes"), default=None)
        elif isinstance(f.default, tuple):
            parser.add_argument(flag, type=_parse_tuple, default=None, metavar="V,V,...")
        elif isinstance(f.default, int):
            parser.add_argument(flag, type=int, default=None)
        elif isinstance(f.default, float):
            parser.add_argument(flag, type=float, default=None)
        else:
            parser.add_argument(flag, type=str, default=None)


def _resolve_config(args: argparse.Namespace) -> RunConfig:
    overrides = {
        f.name: getattr(args, f.name)
        for f in dataclasses.fields(RunConfig)
        if getattr(args, f.name, None) is not None
    }
    try:
        return load_config(args.config, overrides)
    except (OSError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _load_prepared(config: RunConfig, keep_images: bool = False):
    manifest = Path(config.dataset_dir) / "manifest.jsonl"
    if not manifest.exists():
        raise ConfigError(f"dataset manifest not found: {manifest}")
    records = read_manifest(manifest)
    slides = prepare_dataset(records, config.dataset_dir, config, keep_images=keep_images, threads=config.threads)
    return records, slides


def cmd_generate(args) -> int:
    config = _resolve_config(args)
    records = generate_dataset(
        config.dataset_dir,
        n_per_class=config.n_per_class,
        patients_per_class=config.patients_per_class,
        seed=config.seed,
        slide_size=config.slide_size,
        tile_size=config.tile_size,
        overlap_fraction=config.overlap_fraction,
        lesion_fraction_range=(config.lesion_fraction_lo, config.lesion_fraction_hi),
        background_fraction_range=(config.background_fraction_lo, config.background_fraction_hi),
        pen_marker_fraction=config.pen_marker_fraction,
    )
    print(f"generated {len(records)} slides under {config.dataset_dir}")
    return 0


def cmd_preprocess(args) -> int:
    config = _resolve_config(args)
    manifest = Path(config.dataset_dir) / "manifest.jsonl"
    if not manifest.exists():
        raise ConfigError(f"dataset manifest not found: {manifest}")
    out = Path(config.output_dir) / "preprocess"
    for rec in read_manifest(manifest):
        image = read_png(Path(config.dataset_dir) / rec.path)
        mask = tissue_mask(image, config.hue_lo, config.hue_hi, config.morph_radius)
        grid = extract_tile_grid(image.shape[1], image.shape[0], config.tile_size, config.overlap_fraction)
        refs = filter_tiles(grid, mask, config.min_tissue, slide_id=rec.slide_id)
        write_mask_png(out / "masks" / f"{rec.slide_id}.png", mask)
        tiles_csv = out / "tiles" / f"{rec.slide_id}.csv"
        tiles_csv.parent.mkdir(parents=True, exist_ok=True)
        with open(tiles_csv, "w", encoding="utf-8") as fh:
            fh.write("x,y,tissue_fraction\n")
            for ref in refs:
                fh.write(f"{ref.x},{ref.y},{ref.tissue_fraction!r}\n")
        if args.write_blue_ratio:
            write_blue_ratio_csv(out / "blue_ratio" / f"{rec.slide_id}.csv", blue_ratio(image))
    print(f"preprocessing artifacts under {out}")
    return 0


def cmd_train(args) -> int:
    config = _resolve_config(args)
    variant = config.variant
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}; valid: {', '.join(sorted(VARIANTS))}")
    run_dir = Path(config.output_dir)
    ckpt_dir = run_dir / "checkpoints"
    if ckpt_dir.exists() and any(ckpt_dir.iterdir()) and not args.force:
        raise ConfigError(f"run directory {run_dir} already holds checkpoints; use --force to retrain")
    _, slides = _load_prepared(config)
    splits = split_slides(slides)
    if not splits["train"] or not splits["val"]:
        raise ConfigError("dataset must provide non-empty train and val splits")
    model = TwoStageClassifier.from_config(config, variant=variant, seed=config.seed)
    model.fit(splits["train"], validation=splits["val"])
    config_with_variant = config.with_overrides({"variant": variant})
    config_with_variant.to_json(run_dir / "config.json")
    model.save_checkpoints(ckpt_dir)
    for name, stage in (("stage1", model.stage1_), ("stage2", model.stage2_)):
        if stage is not None and stage.history_:
            write_epoch_csv(run_dir / "logs" / f"{name}_epochs.csv", stage.history_)
    print(f"trained {variant}; artifacts under {run_dir}")
    return 0


def _rebuild_model(args):
    run_dir = Path(args.run_dir) if args.run_dir else None
    if run_dir is not None and (run_dir / "config.json").exists() and not args.config:
        args.config = str(run_dir / "config.json")
    config = _resolve_config(args)
    if run_dir is None:
        run_dir = Path(config.output_dir)
    model = TwoStageClassifier.from_config(config, seed=config.seed)
    try:
        model.load_checkpoints(run_dir / "checkpoints")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return config, run_dir, model


def cmd_eval(args) -> int:
    config, run_dir, model = _rebuild_model(args)
    _, slides = _load_prepared(config)
    splits = split_slides(slides)
    if not splits["test"]:
        raise ConfigError("dataset has no test split")
    report = model.evaluate(splits["test"])
    report.write_json(run_dir / "reports" / "eval.json")
    report.write_confusion_csv(run_dir / "reports" / "confusion.csv")
    print(f"test accuracy {report.accuracy:.4f}; reports under {run_dir / 'reports'}")
    return 0


def cmd_ablate(args) -> int:
    config = _resolve_config(args)
    variants = args.variants.split(",") if args.variants else None
    if variants:
        unknown = [v for v in variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants: {unknown}")
    _, slides = _load_prepared(config)
    splits = split_slides(slides)
    result = run_ablation_suite(splits, config, variants=variants, seeds=list(config.ablation_seeds))
    out = Path(config.output_dir) / "reports" / "ablation.csv"
    result.write_csv(out)
    for variant in result.variants:
        print(f"{variant}: mean accuracy {result.mean_accuracy(variant):.4f}")
    print(f"table written to {out}")
    return 0


def cmd_visualize(args) -> int:
    config, run_dir, model = _rebuild_model(args)
    _, slides = _load_prepared(config, keep_images=True)
    matches = [s for s in slides if s.slide_id == args.slide_id]
    if not matches:
        raise ConfigError(f"slide {args.slide_id!r} not found in manifest")
    slide = matches[0]
    pred = model.predict_one(slide)
    if slide.empty:
        raise ConfigError(f"slide {args.slide_id!r} has no tissue tiles to visualize")
    alpha = pred.alpha if pred.alpha is not None else pred.selection.alpha
    selected = pred.selection.selected if pred.selection is not None else []
    out = Path(args.out) if args.out else run_dir / "overlays" / f"{slide.slide_id}.png"
    write_overlay_png(out, slide.image, slide.tile_refs, alpha, selected, config.tile_size)
    if pred.selection is not None:
        write_selection_csv(out.with_suffix(".csv"), slide.tile_refs, pred.selection)
    print(f"overlay written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slidemil", description="Two-stage attention-MIL slide classification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate a synthetic dataset")
    _add_config_flags(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("preprocess", help="write masks and tile tables")
    _add_config_flags(p)
    p.add_argument("--write-blue-ratio", action="store_true", help="also dump blue-ratio maps as CSV")
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("train", help="train one variant (pick with --variant)")
    _add_config_flags(p)
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained run on the test split")
    _add_config_flags(p)
    p.add_argument("--run-dir", default=None, help="run directory holding config.json and checkpoints/")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate all variants over the ablation seeds")
    _add_config_flags(p)
    p.add_argument("--variants", default=None, help="comma-separated subset of variants")
    p.set_defaults(fn=cmd_ablate)

    p = sub.add_parser("visualize", help="render attention heat and selected-tile boxes")
    _add_config_flags(p)
    p.add_argument("--run-dir", default=None)
    p.add_argument("--slide-id", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_visualize)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
