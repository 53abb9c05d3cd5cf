"""Dataset dissimilarity in the feature space of a fixed reference model.

Two image sets are compared by pushing equal-size random batches through the
same feature extractor, summarizing each feature column as its sorted
(quantile) vector, and summing per-column cosine distances. Larger values
mean the sets look less alike to that extractor.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ContractError, DataError
from .model import ModelParams, extract_penultimate


@dataclass
class FeatureSource:
    """A batch-to-features callable plus its output width."""

    extract: Callable[[np.ndarray], np.ndarray]
    feature_dim: int
    name: str = "penultimate"


def feature_source_from_params(params: ModelParams, name: str = "penultimate") -> FeatureSource:
    dim = params.layers[-1].weight.shape[0]
    return FeatureSource(extract=lambda batch: extract_penultimate(params, batch), feature_dim=dim, name=name)


def cosine_distance(a, b) -> float:
    """1 - cos(a, b); 0 for parallel vectors, 2 for opposite ones."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ContractError("cosine_distance expects two equal-length vectors")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise ContractError("cosine distance is undefined for zero vectors")
    return float(1.0 - np.dot(a, b) / (na * nb))


def feature_dissimilarity(features_a, features_b, sort: bool = True) -> float:
    """Sum of per-column cosine distances between two feature matrices.

    With ``sort=True`` (the default) each column is sorted first, comparing
    the two batches' per-feature quantile profiles; row order then cannot
    matter. ``sort=False`` keeps raw batch order for comparison runs.
    Columns where either side has zero norm contribute 0.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape or a.shape[0] < 2 or a.shape[1] < 1:
        raise ContractError("feature matrices must share shape with >= 2 rows")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ContractError("feature matrices must be finite")
    if sort:
        a = np.sort(a, axis=0)
        b = np.sort(b, axis=0)
    total = 0.0
    for col in range(a.shape[1]):
        va = a[:, col]
        vb = b[:, col]
        na = np.linalg.norm(va)
        nb = np.linalg.norm(vb)
        if na == 0.0 or nb == 0.0:
            continue  # silent-feature guard: undefined angle counts as no evidence
        total += 1.0 - float(np.dot(va, vb)) / (na * nb)
    return total


@dataclass
class DissimilarityReport:
    mean: float
    std: float
    per_batch: list[float]
    n_batches: int
    batch_size: int
    encoding: str  # "sorted-quantile" or "raw-order"


def dedims(source: FeatureSource, images_a, images_b, rng: np.random.Generator, n_batches: int = 10, batch_size: int = 40, sort: bool = True) -> DissimilarityReport:
    """Mean +/- sample std of feature dissimilarity over random batch pairs.

    Each batch draws ``batch_size`` distinct images from each set (A's
    indices first, then B's), so both sets must hold at least that many.
    """
    images_a = np.asarray(images_a, dtype=np.float64)
    images_b = np.asarray(images_b, dtype=np.float64)
    if n_batches < 1 or batch_size < 2:
        raise ContractError("need n_batches >= 1 and batch_size >= 2")
    for name, images in (("A", images_a), ("B", images_b)):
        if images.ndim != 3:
            raise ContractError(f"dataset {name} must be an (n, H, W) stack")
        if images.shape[0] < batch_size:
            raise DataError(f"dataset {name} has {images.shape[0]} images, fewer than batch_size={batch_size}")

    values = []
    for _ in range(n_batches):
        idx_a = rng.choice(images_a.shape[0], size=batch_size, replace=False)
        idx_b = rng.choice(images_b.shape[0], size=batch_size, replace=False)
        feats_a = source.extract(images_a[idx_a])
        feats_b = source.extract(images_b[idx_b])
        values.append(feature_dissimilarity(feats_a, feats_b, sort=sort))
    arr = np.asarray(values)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return DissimilarityReport(
        mean=float(arr.mean()),
        std=std,
        per_batch=[float(v) for v in values],
        n_batches=n_batches,
        batch_size=batch_size,
        encoding="sorted-quantile" if sort else "raw-order",
    )
