"""Command-line interface.

Subcommands cover the full pipeline: synthetic corpus generation, image
preprocessing, patient-disjoint splitting, training one experiment
configuration, evaluating saved parameters, dataset dissimilarity, paired
statistical comparison, and report emission. Every command prints a JSON
summary to stdout so runs can be scripted.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import binary_subset, generate_synthetic, patient_disjoint_split, save_manifest
from .dedims import dedims, feature_source_from_params
from .errors import ConfigurationError, ContractError, DataError, TrainingError
from .experiment import (
    ExperimentConfig,
    RunResult,
    compare_runs,
    emit_report,
    load_experiment_config,
    load_image_dataset,
    run_configuration,
)
from .model import init_model, load_params, save_params
from .preprocess import background_mask, read_image, resize_bilinear, write_image
from .stats import wilcoxon_signed_rank
from .training import evaluate_params


def _emit(doc: dict, out: str | None) -> None:
    text = json.dumps(doc, indent=1, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = generate_synthetic(
        n_patients=args.patients,
        images_per_patient=args.images_per_patient,
        positive_rate=args.positive_rate,
        domain_shift=args.domain_shift,
        tag_artifacts=args.tag_artifacts,
        size=args.size,
        seed=args.seed,
    )
    for record in dataset.records:
        write_image(dataset.images[record.image_path], out / record.image_path)
    manifest = out / "manifest.csv"
    save_manifest(dataset.records, manifest)
    positives = sum(1 for r in dataset.records if r.birads >= 4)
    _emit(
        {
            "manifest": str(manifest),
            "images": len(dataset.records),
            "patients": args.patients,
            "positiveImages": positives,
            "domainShift": args.domain_shift,
            "seed": args.seed,
        },
        None,
    )
    return 0


def _cmd_preprocess(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataset = load_image_dataset(args.manifest)
    provenance: dict[str, dict] = {}
    for record in dataset.records:
        img = dataset.images[record.image_path]
        entry: dict = {"threshold": None}
        if not args.skip_background_removal:
            mask, threshold = background_mask(img, radius=args.rolling_ball_radius)
            img = img * mask
            entry["threshold"] = threshold
            entry["foregroundFraction"] = float(mask.mean())
        if args.resize is not None:
            img = resize_bilinear(img, args.resize, args.resize)
        target = out / record.image_path
        target.parent.mkdir(parents=True, exist_ok=True)
        write_image(img, target)
        provenance[record.image_path] = entry
    save_manifest(dataset.records, out / "manifest.csv")
    prov_path = out / "provenance.json"
    prov_path.write_text(
        json.dumps(
            {
                "rollingBallRadius": args.rolling_ball_radius,
                "skipBackgroundRemoval": bool(args.skip_background_removal),
                "resize": args.resize,
                "images": provenance,
            },
            indent=1,
            sort_keys=True,
        )
        + "\n"
    )
    _emit(
        {
            "manifest": str(out / "manifest.csv"),
            "provenance": str(prov_path),
            "images": len(dataset.records),
        },
        None,
    )
    return 0


def _cmd_split(args) -> int:
    dataset = load_image_dataset(args.manifest)
    pairs = binary_subset(dataset.records)
    split = patient_disjoint_split(pairs, train_fraction=args.train_fraction, seed=args.seed)
    _emit(
        {
            "seed": args.seed,
            "trainFraction": args.train_fraction,
            "train": split.train_paths,
            "test": split.test_paths,
        },
        args.out,
    )
    return 0


def _cmd_train(args) -> int:
    config = load_experiment_config(args.config)
    if args.seed is not None:
        config.master_seed = args.seed
    if args.subsets is not None:
        config.n_subsets = args.subsets
    if config.target_manifest is None:
        raise ConfigurationError("config must set target_manifest")
    target = load_image_dataset(config.target_manifest, config.target_images)
    source = None
    if config.needs_source:
        if config.source_manifest is None:
            raise ConfigurationError(
                f"configuration {config.configuration} requires source_manifest"
            )
        source = load_image_dataset(config.source_manifest, config.source_images)

    sink = None
    if args.save_params:
        params_dir = Path(args.save_params)
        params_dir.mkdir(parents=True, exist_ok=True)

        def sink(subset, params):
            save_params(params, params_dir / f"subset{subset}.json")

    result = run_configuration(config, target, source, params_sink=sink)
    doc = result.to_dict()
    summary = result.aggregate()
    _emit(
        {
            "result": doc,
            "gMeanMean": summary["g_mean"][0],
            "gMeanStd": summary["g_mean"][1],
        },
        None,
    )
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    return 0


def _cmd_eval(args) -> int:
    params = load_params(args.params)
    dataset = load_image_dataset(args.manifest)
    pairs = binary_subset(dataset.records)
    images = np.stack([dataset.images[r.image_path] for r, _ in pairs])
    labels = np.array([label for _, label in pairs])
    report = evaluate_params(params, images, labels)
    _emit(
        {
            "metrics": report.as_dict(),
            "degenerate": sorted(report.degenerate),
            "nImages": len(pairs),
        },
        args.out,
    )
    return 0


def _cmd_dedims(args) -> int:
    dataset_a = load_image_dataset(args.a)
    dataset_b = load_image_dataset(args.b)
    images_a = np.stack([dataset_a.images[r.image_path] for r in dataset_a.records])
    images_b = np.stack([dataset_b.images[r.image_path] for r in dataset_b.records])
    if args.params:
        params = load_params(args.params)
    else:
        h, w = images_a.shape[1:]
        from .model import ClassifierConfig

        params = init_model(
            ClassifierConfig(input_height=h, input_width=w, hidden_sizes=(32,), seed=args.seed)
        )
    source = feature_source_from_params(params)
    report = dedims(
        source,
        images_a,
        images_b,
        np.random.default_rng(args.seed),
        n_batches=args.batches,
        batch_size=args.batch_size,
        sort=not args.raw_order,
    )
    _emit(
        {
            "mean": report.mean,
            "std": report.std,
            "perBatch": report.per_batch,
            "batches": report.n_batches,
            "batchSize": report.batch_size,
            "encoding": report.encoding,
        },
        args.out,
    )
    return 0


def _cmd_compare(args) -> int:
    with open(args.a) as fh:
        run_a = RunResult.from_dict(json.load(fh))
    with open(args.b) as fh:
        run_b = RunResult.from_dict(json.load(fh))
    record = compare_runs(run_a, run_b, metric=args.metric, alternative=args.alternative)
    _emit(record.to_dict(), args.out)
    return 0


def _cmd_report(args) -> int:
    runs = []
    for path in args.results:
        with open(path) as fh:
            runs.append(RunResult.from_dict(json.load(fh)))
    comparisons = []
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            a, b = runs[i], runs[j]
            same_budget = (
                a.n_labeled == b.n_labeled
                or "S+No-FT" in (a.configuration, b.configuration)
            )
            if a.configuration == b.configuration or not same_budget:
                continue
            if len(a.reports) != len(b.reports):
                continue
            comparisons.append(
                compare_runs(a, b, metric=args.metric, alternative=args.alternative)
            )
    csv_path, json_path = emit_report(runs, comparisons, args.out)
    _emit({"csv": csv_path, "json": json_path, "comparisons": len(comparisons)}, None)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mammossl",
        description="Semi-supervised classification experiments on image manifests.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled image corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--patients", type=int, default=40)
    p.add_argument("--images-per-patient", type=int, default=3)
    p.add_argument("--positive-rate", type=float, default=0.05)
    p.add_argument("--domain-shift", type=float, default=0.0)
    p.add_argument("--tag-artifacts", action="store_true")
    p.add_argument("--size", type=int, default=24)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("preprocess", help="background removal and resizing over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rolling-ball-radius", type=int, default=5)
    p.add_argument("--skip-background-removal", action="store_true")
    p.add_argument("--resize", type=int, default=None, help="square output side length")
    p.set_defaults(fn=_cmd_preprocess)

    p = sub.add_parser("split", help="patient-disjoint train/test split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_split)

    p = sub.add_parser("train", help="run one experiment configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config master seed")
    p.add_argument("--subsets", type=int, default=None, help="override the subset count")
    p.add_argument("--out", default=None, help="write the run result JSON here")
    p.add_argument("--save-params", default=None, help="directory for per-subset parameters")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate saved parameters on a manifest")
    p.add_argument("--params", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("dedims", help="feature-space dissimilarity between two manifests")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--batches", type=int, default=10)
    p.add_argument("--batch-size", type=int, default=40)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--raw-order", action="store_true", help="skip the per-feature sort")
    p.add_argument("--params", default=None, help="feature extractor parameters")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_dedims)

    p = sub.add_parser("compare", help="paired signed-rank test between two run results")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", default="g_mean")
    p.add_argument(
        "--alternative", default="greater", choices=("two-sided", "greater", "less")
    )
    p.add_argument("--out", default=None)
    p.set_defaults(fn=_cmd_compare)

    p = sub.add_parser("report", help="aggregate run results into CSV/JSON tables")
    p.add_argument("--results", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output path prefix")
    p.add_argument("--metric", default="g_mean")
    p.add_argument(
        "--alternative", default="two-sided", choices=("two-sided", "greater", "less")
    )
    p.set_defaults(fn=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ConfigurationError, ContractError, DataError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
