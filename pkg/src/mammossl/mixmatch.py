"""Semi-supervised batch construction and the compound training loss.

A training step guesses soft labels for unlabeled images from augmented
predictions, sharpens them, mixes labeled and unlabeled examples with
Beta-drawn convex weights, and scores the result with a supervised
cross-entropy term plus a ramped consistency term. Per-batch inverse
pseudo-frequency weights counteract class imbalance on both terms.

Every function takes an explicit ``numpy.random.Generator`` and consumes
draws in a documented order, so a scripted re-run of the same seeds
reproduces each batch bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import preprocess
from .errors import ConfigurationError, ContractError, TrainingError
from .model import (
    ModelParams,
    backward,
    euclidean_loss,
    forward,
    soft_cross_entropy,
)


@dataclass
class MixMatchConfig:
    """Knobs of the semi-supervised objective."""

    k: int = 2
    temperature: float = 0.25
    alpha: float = 0.75
    gamma: float = 200.0
    rampup_denominator: float = 3000.0
    pbc_enabled: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.temperature <= 0:
            raise ConfigurationError("temperature must be positive")
        if self.alpha <= 0:
            raise ConfigurationError("alpha must be positive")
        if self.gamma < 0:
            raise ConfigurationError("gamma must be >= 0")
        if self.rampup_denominator <= 0:
            raise ConfigurationError("rampup_denominator must be positive")


@dataclass
class LabeledBatch:
    images: np.ndarray  # (n, H, W)
    labels: np.ndarray  # (n,) integer class ids


@dataclass
class PseudoLabeledBatch:
    images: np.ndarray
    soft_labels: np.ndarray  # row-stochastic (n, C)


@dataclass
class MixedBatch:
    labeled_images: np.ndarray
    labeled_soft_labels: np.ndarray
    unlabeled_images: np.ndarray
    unlabeled_soft_labels: np.ndarray


@dataclass
class PbcWeights:
    labeled: np.ndarray  # (C,)
    unlabeled: np.ndarray  # (C,)


@dataclass
class LossComponents:
    supervised: float
    unsupervised: float
    effective_gamma: float


def sharpen(p, temperature: float) -> np.ndarray:
    """Raise a distribution to 1/T and renormalize; works on rows too.

    T < 1 concentrates mass on the argmax without changing its position;
    T = 1 is the identity.
    """
    if temperature <= 0:
        raise ContractError("temperature must be positive")
    p = np.asarray(p, dtype=np.float64)
    if p.ndim not in (1, 2):
        raise ContractError("sharpen expects a vector or a matrix of rows")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ContractError("probabilities must be non-negative and finite")
    powered = p ** (1.0 / temperature)
    total = powered.sum(axis=-1, keepdims=True)
    if np.any(total <= 0):
        raise ContractError("cannot sharpen an all-zero distribution")
    return powered / total


def one_hot(labels, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise ContractError("labels must be a vector")
    if labels.size and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError("labels out of range")
    out = np.zeros((labels.size, num_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def guess_labels(params: ModelParams, images: np.ndarray, k: int, temperature: float, rng: np.random.Generator, augment_fn=None) -> PseudoLabeledBatch:
    """Sharpened mean prediction over ``k`` independent augmentations.

    Draw order: for each augmentation round, every image in batch order. The
    returned images are the first round's augmented copies (they are what the
    consistency term will train on).
    """
    if k < 1:
        raise ContractError("k must be >= 1")
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] < 1:
        raise ContractError("images must be a non-empty (n, H, W) batch")
    if augment_fn is None:
        augment_fn = preprocess.augment
    mean_probs = None
    first_round = None
    for round_idx in range(k):
        augmented = np.stack([augment_fn(img, rng) for img in images])
        if round_idx == 0:
            first_round = augmented
        probs, _ = forward(params, augmented)
        mean_probs = probs if mean_probs is None else mean_probs + probs
    mean_probs = mean_probs / k
    return PseudoLabeledBatch(images=first_round, soft_labels=sharpen(mean_probs, temperature))


def sample_mix_lambda(alpha: float, rng: np.random.Generator) -> float:
    """Beta(alpha, alpha) draw folded onto [0.5, 1] so the first argument dominates."""
    if alpha <= 0:
        raise ContractError("alpha must be positive")
    lam = float(rng.beta(alpha, alpha))
    return max(lam, 1.0 - lam)


def mix_up(image_a, label_a, image_b, label_b, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Convex combination lam*a + (1-lam)*b of both image and soft label."""
    if not 0.0 <= lam <= 1.0:
        raise ContractError("lambda must lie in [0, 1]")
    image_a = np.asarray(image_a, dtype=np.float64)
    image_b = np.asarray(image_b, dtype=np.float64)
    label_a = np.asarray(label_a, dtype=np.float64)
    label_b = np.asarray(label_b, dtype=np.float64)
    if image_a.shape != image_b.shape or label_a.shape != label_b.shape:
        raise ContractError("mix_up arguments must share shapes")
    return lam * image_a + (1 - lam) * image_b, lam * label_a + (1 - lam) * label_b


def mix_match_batch(labeled: LabeledBatch, unlabeled_images, params: ModelParams, config: MixMatchConfig, rng: np.random.Generator, pseudo: PseudoLabeledBatch | None = None, augment_fn=None, lambda_fn=None) -> MixedBatch:
    """Build one semi-supervised training batch.

    Procedure (and rng draw order): augment each labeled image once; guess
    pseudo-labels for the unlabeled images (skipped when ``pseudo`` is given);
    shuffle the union of both sets into a partner pool; mix every element
    (as the dominant argument) with its positional partner using a fresh
    folded-Beta weight per pair. Output sizes equal input sizes.
    """
    images = np.asarray(labeled.images, dtype=np.float64)
    labels = np.asarray(labeled.labels)
    unlabeled_images = np.asarray(unlabeled_images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] < 1:
        raise ContractError("labeled images must be a non-empty (n, H, W) batch")
    if labels.shape != (images.shape[0],):
        raise ContractError("labeled batch needs one label per image")
    if unlabeled_images.ndim != 3 or unlabeled_images.shape[0] < 1:
        raise ContractError("unlabeled images must be a non-empty (n, H, W) batch")
    if images.shape[1:] != unlabeled_images.shape[1:]:
        raise ContractError("labeled and unlabeled image sizes differ")
    if augment_fn is None:
        augment_fn = preprocess.augment
    if lambda_fn is None:
        lambda_fn = lambda r: sample_mix_lambda(config.alpha, r)

    num_classes = params.num_classes()
    labeled_aug = np.stack([augment_fn(img, rng) for img in images])
    labeled_soft = one_hot(labels, num_classes)
    if pseudo is None:
        pseudo = guess_labels(params, unlabeled_images, config.k, config.temperature, rng, augment_fn=augment_fn)

    n_l = labeled_aug.shape[0]
    n_u = pseudo.images.shape[0]
    pool_images = np.concatenate([labeled_aug, pseudo.images], axis=0)
    pool_labels = np.concatenate([labeled_soft, pseudo.soft_labels], axis=0)
    perm = rng.permutation(n_l + n_u)

    mixed_l_img = np.empty_like(labeled_aug)
    mixed_l_lab = np.empty_like(labeled_soft)
    for i in range(n_l):
        lam = lambda_fn(rng)
        j = perm[i]
        mixed_l_img[i], mixed_l_lab[i] = mix_up(labeled_aug[i], labeled_soft[i], pool_images[j], pool_labels[j], lam)

    mixed_u_img = np.empty_like(pseudo.images)
    mixed_u_lab = np.empty_like(pseudo.soft_labels)
    for i in range(n_u):
        lam = lambda_fn(rng)
        j = perm[n_l + i]
        mixed_u_img[i], mixed_u_lab[i] = mix_up(pseudo.images[i], pseudo.soft_labels[i], pool_images[j], pool_labels[j], lam)

    return MixedBatch(
        labeled_images=mixed_l_img,
        labeled_soft_labels=mixed_l_lab,
        unlabeled_images=mixed_u_img,
        unlabeled_soft_labels=mixed_u_lab,
    )


def rampup(step: int, denominator: float = 3000.0) -> float:
    """Linear warmup min(step/denominator, 1) for the consistency weight."""
    if step < 0:
        raise ContractError("step must be >= 0")
    if denominator <= 0:
        raise ContractError("denominator must be positive")
    return min(step / denominator, 1.0)


def pbc_weights(labeled_counts, pseudo_counts) -> PbcWeights:
    """Inverse-frequency weights w_c = N / (C * max(N_c, 1)) for both sides.

    Counts come from the current batch: hard labels on the labeled side,
    pseudo-label argmaxes on the unlabeled side. Absent classes use a floor
    count of 1 so their weight stays finite.
    """

    def side(counts):
        counts = np.asarray(counts)
        if counts.ndim != 1 or counts.size < 2:
            raise ContractError("counts must be a per-class vector with >= 2 classes")
        if np.any(counts < 0) or np.any(counts != np.floor(counts)):
            raise ContractError("counts must be non-negative integers")
        total = counts.sum()
        if total < 1:
            raise ContractError("counts must cover at least one observation")
        return total / (counts.size * np.maximum(counts.astype(np.float64), 1.0))

    return PbcWeights(labeled=side(labeled_counts), unlabeled=side(pseudo_counts))


def unit_weights(num_classes: int) -> PbcWeights:
    return PbcWeights(labeled=np.ones(num_classes), unlabeled=np.ones(num_classes))


def _compound_pieces(params: ModelParams, mixed: MixedBatch, config: MixMatchConfig, step: int, weights: PbcWeights):
    probs_l, trace_l = forward(params, mixed.labeled_images)
    probs_u, trace_u = forward(params, mixed.unlabeled_images)
    supervised = soft_cross_entropy(probs_l, mixed.labeled_soft_labels, weights.labeled)
    example_w = weights.unlabeled[np.argmax(mixed.unlabeled_soft_labels, axis=1)]
    unsupervised = euclidean_loss(probs_u, mixed.unlabeled_soft_labels, example_w)
    effective_gamma = config.gamma * rampup(step, config.rampup_denominator)
    total = supervised + effective_gamma * unsupervised
    if not np.isfinite(total):
        raise TrainingError(f"non-finite compound loss at step {step}")
    return total, LossComponents(supervised, unsupervised, effective_gamma), (trace_l, trace_u, example_w)


def compound_loss(params: ModelParams, mixed: MixedBatch, config: MixMatchConfig, step: int, weights: PbcWeights) -> tuple[float, LossComponents]:
    """Supervised cross-entropy plus gamma * rampup(step) * consistency term."""
    total, components, _ = _compound_pieces(params, mixed, config, step, weights)
    return total, components


def compound_grads(params: ModelParams, mixed: MixedBatch, config: MixMatchConfig, step: int, weights: PbcWeights):
    """Loss, components, and exact parameter gradients of the compound loss."""
    total, components, (trace_l, trace_u, example_w) = _compound_pieces(params, mixed, config, step, weights)
    grads_l = backward(params, trace_l, mixed.labeled_images, "soft_ce", {"soft_targets": mixed.labeled_soft_labels, "weights": weights.labeled})
    grads_u = backward(params, trace_u, mixed.unlabeled_images, "euclidean", {"pseudo_targets": mixed.unlabeled_soft_labels, "example_weights": example_w})
    eff = components.effective_gamma
    grads = [(gl[0] + eff * gu[0], gl[1] + eff * gu[1]) for gl, gu in zip(grads_l, grads_u)]
    return total, components, grads
