#!/usr/bin/env python3
"""Run the four training configurations over a grid of label budgets.

Works on a user-supplied manifest pair (--target-manifest/--source-manifest)
or, by default, on a freshly generated shifted synthetic corpus pair. Emits
one report (CSV + JSON) covering every (configuration, nLabeled) cell plus
paired SSDL+FT vs S+FT significance tests.

Example:
    python3 scripts/run_experiment_grid.py --workdir /tmp/grid --subsets 10
"""

import argparse
import sys
import time
from pathlib import Path

from mammossl import (
    CONFIGURATIONS,
    ExperimentConfig,
    compare_runs,
    emit_report,
    generate_synthetic,
    load_image_dataset,
    run_configuration,
    save_manifest,
)
from mammossl.experiment import ImageDataset


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--workdir", default="grid_out", help="output directory for corpora and the report")
    p.add_argument("--target-manifest", default=None, help="existing target manifest (skips synthesis)")
    p.add_argument("--source-manifest", default=None, help="existing source manifest (skips synthesis)")
    p.add_argument("--n-labeled", type=int, nargs="+", default=[20, 40, 60])
    p.add_argument("--configurations", nargs="+", default=list(CONFIGURATIONS), choices=list(CONFIGURATIONS))
    p.add_argument("--subsets", type=int, default=10)
    p.add_argument("--master-seed", type=int, default=0)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--pretrain-epochs", type=int, default=50)
    p.add_argument("--lr", type=float, default=0.00002)
    p.add_argument("--weight-decay", type=float, default=0.001)
    p.add_argument("--gamma", type=float, default=200.0)
    p.add_argument("--rampup", type=float, default=3000.0)
    p.add_argument("--hidden", type=int, nargs="+", default=[64])
    p.add_argument("--val-fraction", type=float, default=0.15)
    p.add_argument("--negative-fraction", type=float, default=0.95)
    # synthesis knobs, ignored when both manifests are supplied
    p.add_argument("--patients", type=int, default=87)
    p.add_argument("--images-per-patient", type=int, default=3)
    p.add_argument("--positive-rate", type=float, default=0.2)
    p.add_argument("--size", type=int, default=24)
    p.add_argument("--shift", type=float, default=1.2, help="domain shift applied to the target corpus")
    p.add_argument("--target-seed", type=int, default=101)
    p.add_argument("--source-seed", type=int, default=202)
    return p


def synthesize_pair(args, workdir: Path) -> tuple[ImageDataset, ImageDataset]:
    datasets = []
    for name, seed, shift in (("target", args.target_seed, args.shift), ("source", args.source_seed, 0.0)):
        d = generate_synthetic(
            n_patients=args.patients,
            images_per_patient=args.images_per_patient,
            positive_rate=args.positive_rate,
            size=args.size,
            seed=seed,
            domain_shift=shift,
        )
        save_manifest(d.records, workdir / f"{name}_manifest.csv")
        datasets.append(ImageDataset(records=d.records, images=d.images))
    return datasets[0], datasets[1]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    workdir = Path(args.workdir)
    workdir.mkdir(parents=True, exist_ok=True)

    if args.target_manifest and args.source_manifest:
        target = load_image_dataset(args.target_manifest)
        source = load_image_dataset(args.source_manifest)
    elif args.target_manifest or args.source_manifest:
        print("error: supply both manifests or neither", file=sys.stderr)
        return 2
    else:
        target, source = synthesize_pair(args, workdir)

    height, width = next(iter(target.images.values())).shape

    runs, comparisons = [], []
    for n_labeled in args.n_labeled:
        by_config = {}
        for configuration in args.configurations:
            config = ExperimentConfig(
                configuration=configuration,
                input_height=height,
                input_width=width,
                n_labeled=n_labeled,
                negative_fraction=args.negative_fraction,
                n_subsets=args.subsets,
                epochs=args.epochs,
                pretrain_epochs=args.pretrain_epochs,
                hidden_sizes=tuple(args.hidden),
                learning_rate=args.lr,
                weight_decay=args.weight_decay,
                gamma=args.gamma,
                rampup_denominator=args.rampup,
                val_fraction=args.val_fraction,
                master_seed=args.master_seed,
            )
            start = time.perf_counter()
            result = run_configuration(config, target, source if config.needs_source else None)
            elapsed = time.perf_counter() - start
            agg = result.aggregate()
            print(
                f"n={n_labeled:3d} {configuration:8s} "
                f"gMean {agg['g_mean'][0]:.4f} +- {agg['g_mean'][1]:.4f}  ({elapsed:.1f}s)"
            )
            runs.append(result)
            by_config[configuration] = result
        if "SSDL+FT" in by_config and "S+FT" in by_config:
            comparisons.append(compare_runs(by_config["SSDL+FT"], by_config["S+FT"]))

    json_path, csv_path = emit_report(runs, comparisons, str(workdir / "report"))
    print(f"report: {csv_path}")
    print(f"        {json_path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
