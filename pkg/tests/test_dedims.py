"""Feature-space dataset dissimilarity: exact properties and separation."""

import math

import numpy as np
import pytest

from mammossl import (
    ClassifierConfig,
    ContractError,
    DataError,
    FeatureSource,
    cosine_distance,
    dedims,
    feature_dissimilarity,
    feature_source_from_params,
    init_model,
)
from mammossl.data import generate_synthetic


def brute_force_dissimilarity(a, b):
    """Column-by-column sorted cosine distances, written out longhand."""
    total = 0.0
    for j in range(a.shape[1]):
        va = np.sort(a[:, j])
        vb = np.sort(b[:, j])
        na = math.sqrt(float(va @ va))
        nb = math.sqrt(float(vb @ vb))
        if na == 0.0 or nb == 0.0:
            continue
        total += 1.0 - float(va @ vb) / (na * nb)
    return total


def flat_source(dim):
    return FeatureSource(
        extract=lambda imgs: np.asarray(imgs).reshape(len(imgs), -1)[:, :dim],
        feature_dim=dim,
        name="flatten",
    )


def test_cosine_distance_cases():
    v = np.array([1.0, 2.0, 3.0])
    assert cosine_distance(v, v) == pytest.approx(0.0, abs=1e-12)
    assert cosine_distance([1.0, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-12)
    assert cosine_distance([1.0, 0.0], [-1.0, 0.0]) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(ContractError):
        cosine_distance([0.0, 0.0], [1.0, 0.0])
    with pytest.raises(ContractError):
        cosine_distance([1.0], [1.0, 2.0])


def test_feature_dissimilarity_identical_is_zero():
    rng = np.random.default_rng(1)
    f = rng.normal(size=(40, 8))
    assert abs(feature_dissimilarity(f, f)) <= 1e-9


def test_feature_dissimilarity_symmetry_exact():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(30, 6))
    b = rng.normal(size=(30, 6))
    assert feature_dissimilarity(a, b) == feature_dissimilarity(b, a)


def test_feature_dissimilarity_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = rng.normal(size=(25, 7))
        b = rng.normal(size=(25, 7))
        assert feature_dissimilarity(a, b) == pytest.approx(
            brute_force_dissimilarity(a, b), abs=1e-12
        )


def test_feature_dissimilarity_opposite_columns():
    # every column of B is the negation of A's positive column: distance 2 each.
    # Raw order keeps the vectors exact negatives; the quantile encoding only
    # does so when sorting cannot reorder the column (constant values).
    rng = np.random.default_rng(4)
    cols = 5
    v = rng.uniform(0.1, 1.0, size=40)
    a = np.tile(v[:, None], (1, cols))
    assert feature_dissimilarity(a, -a, sort=False) == pytest.approx(2.0 * cols, abs=1e-9)
    const = np.full((40, cols), 0.7)
    assert feature_dissimilarity(const, -const) == pytest.approx(2.0 * cols, abs=1e-9)


def test_row_permutation_invariance_100_permutations():
    rng = np.random.default_rng(5)
    a = rng.normal(size=(32, 6))
    b = rng.normal(size=(32, 6))
    baseline = feature_dissimilarity(a, b)
    for _ in range(100):
        pa = a[rng.permutation(len(a))]
        pb = b[rng.permutation(len(b))]
        assert feature_dissimilarity(pa, pb) == baseline


def test_raw_order_mode_is_order_sensitive():
    rng = np.random.default_rng(6)
    a = rng.normal(size=(20, 4))
    b = rng.normal(size=(20, 4))
    raw = feature_dissimilarity(a, b, sort=False)
    shuffled = feature_dissimilarity(a[rng.permutation(20)], b, sort=False)
    assert raw != shuffled
    # identical matrices are still at distance zero without sorting
    assert abs(feature_dissimilarity(a, a, sort=False)) <= 1e-9


def test_zero_columns_contribute_nothing():
    rng = np.random.default_rng(7)
    a = rng.normal(size=(15, 3))
    b = rng.normal(size=(15, 3))
    a2 = np.hstack([a, np.zeros((15, 2))])
    b2 = np.hstack([b, rng.normal(size=(15, 2))])
    assert feature_dissimilarity(a2, b2) == pytest.approx(
        feature_dissimilarity(a, b), abs=1e-15
    )


def test_feature_dissimilarity_shape_checks():
    with pytest.raises(ContractError):
        feature_dissimilarity(np.zeros((4, 3)), np.zeros((5, 3)))
    with pytest.raises(ContractError):
        feature_dissimilarity(np.zeros((1, 3)), np.zeros((1, 3)))


def test_dedims_report_structure_and_determinism():
    rng_data = np.random.default_rng(8)
    images_a = rng_data.random((60, 6, 6))
    images_b = rng_data.random((60, 6, 6))
    source = flat_source(36)
    r1 = dedims(source, images_a, images_b, np.random.default_rng(42), n_batches=5, batch_size=20)
    r2 = dedims(source, images_a, images_b, np.random.default_rng(42), n_batches=5, batch_size=20)
    assert r1.per_batch == r2.per_batch
    assert r1.mean == r2.mean and r1.std == r2.std
    assert len(r1.per_batch) == 5
    assert r1.batch_size == 20
    assert r1.encoding == "sorted-quantile"
    mean = sum(r1.per_batch) / 5
    var = sum((v - mean) ** 2 for v in r1.per_batch) / 4
    assert r1.mean == pytest.approx(mean, abs=1e-12)
    assert r1.std == pytest.approx(math.sqrt(var), abs=1e-12)


def test_dedims_too_small_dataset():
    source = flat_source(9)
    imgs = np.random.default_rng(0).random((10, 3, 3))
    with pytest.raises(DataError):
        dedims(source, imgs, imgs, np.random.default_rng(0), n_batches=2, batch_size=20)


def test_dedims_intensity_shift_separates_from_baseline():
    source = flat_source(25)
    for seed in range(5):
        rng_data = np.random.default_rng(100 + seed)
        base = rng_data.random((80, 5, 5))
        shifted = np.clip(base + 0.3, 0.0, 1.3)
        same = dedims(source, base, base, np.random.default_rng(seed), n_batches=6, batch_size=30)
        cross = dedims(source, base, shifted, np.random.default_rng(seed), n_batches=6, batch_size=30)
        assert cross.mean > same.mean, seed


def test_dedims_monotone_over_synthetic_shift_levels():
    # mirrors the acceptance gate at a reduced size: 3 шift levels, most seeds ordered
    source = flat_source(64)
    wins = 0
    for seed in range(4):
        means = []
        ref = generate_synthetic(n_patients=20, images_per_patient=2, positive_rate=0.1,
                                 domain_shift=0.0, size=16, seed=900 + seed)
        ref_stack = np.stack([ref.images[r.image_path] for r in ref.records])
        for level in (0.25, 0.5, 0.75):
            shifted = generate_synthetic(n_patients=20, images_per_patient=2, positive_rate=0.1,
                                         domain_shift=level, size=16, seed=900 + seed)
            stack = np.stack([shifted.images[r.image_path] for r in shifted.records])
            report = dedims(source, ref_stack, stack, np.random.default_rng(seed),
                            n_batches=5, batch_size=20)
            means.append(report.mean)
        if means[0] < means[1] < means[2]:
            wins += 1
    assert wins >= 3


def test_feature_source_from_params_dims():
    cfg = ClassifierConfig(input_height=6, input_width=6, hidden_sizes=(12, 7), num_classes=2, seed=1)
    params = init_model(cfg)
    source = feature_source_from_params(params)
    assert source.feature_dim == 7
    feats = source.extract(np.random.default_rng(0).random((5, 6, 6)))
    assert feats.shape == (5, 7)
