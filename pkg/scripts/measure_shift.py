#!/usr/bin/env python3
"""Measure feature-space dissimilarity between corpora at growing shift levels.

Generates a reference corpus and shifted variants of the same scenes, then
reports mean +- std dissimilarity per level over repeated random batches.
Monotone growth in the printed column is the expected signature.

Example:
    python3 scripts/measure_shift.py --levels 0.25 0.5 0.75 --seeds 5
"""

import argparse

import numpy as np

from mammossl import FeatureSource, dedims, generate_synthetic


def image_stack(images: dict) -> np.ndarray:
    return np.stack([images[p] for p in sorted(images)])


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--levels", type=float, nargs="+", default=[0.25, 0.5, 0.75])
    p.add_argument("--patients", type=int, default=30)
    p.add_argument("--size", type=int, default=24)
    p.add_argument("--seeds", type=int, default=5, help="corpus seeds per level")
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--n-batches", type=int, default=10)
    args = p.parse_args(argv)

    source = FeatureSource(
        extract=lambda batch: batch.reshape(len(batch), -1),
        feature_dim=args.size * args.size,
        name="flatten",
    )
    print(f"{'shift':>6s} {'dissimilarity':>20s}")
    for level in [0.0] + sorted(args.levels):
        values = []
        for seed in range(args.seeds):
            base = generate_synthetic(n_patients=args.patients, images_per_patient=2,
                                      positive_rate=0.2, size=args.size, seed=seed)
            shifted = generate_synthetic(n_patients=args.patients, images_per_patient=2,
                                         positive_rate=0.2, size=args.size, seed=seed,
                                         domain_shift=level)
            report = dedims(source, image_stack(base.images), image_stack(shifted.images),
                            np.random.default_rng(seed), n_batches=args.n_batches,
                            batch_size=args.batch_size)
            values.append(report.mean)
        print(f"{level:6.2f} {np.mean(values):14.4f} +- {np.std(values):.4f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
