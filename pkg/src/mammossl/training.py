"""Training loops: plain supervised and the semi-supervised variant.

Both trainers walk the labeled set in shuffled size-10 minibatches, apply the
flip/rotate augmentation after per-batch standardization, and keep whichever
epoch scores the best validation G-Mean (ties fall to the earlier epoch, and
there is no patience cutoff -- every epoch runs).

Randomness is split into named substreams derived from one seed (batch order,
augmentation/mixing, unlabeled order), so the labeled batch stream of the
semi-supervised trainer lines up exactly with the supervised one under the
same seed.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import mixmatch as mm
from .errors import ContractError, TrainingError
from .metrics import MetricReport, compute_report, confusion_from_predictions
from .model import ModelParams, OptimState, backward, forward, sgd_step, weighted_cross_entropy
from .preprocess import augment, standardize_batch

BATCH_SIZE = 10

# substream roles
_ROLE_SHUFFLE = 101
_ROLE_AUGMENT = 102
_ROLE_UNLABELED = 103


def derived_rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *[int(k) for k in keys]]))


@dataclass
class TrainOutcome:
    params: ModelParams
    best_epoch: int
    best_g_mean: float
    epoch_g_means: list[float] = field(default_factory=list)
    steps_run: int = 0


def evaluate_params(params: ModelParams, images, labels) -> MetricReport:
    """Metric report on a labeled set; the whole set standardizes as one batch."""
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 3 or images.shape[0] != labels.shape[0] or images.shape[0] < 1:
        raise ContractError("evaluation needs one label per image")
    probs, _ = forward(params, standardize_batch(images))
    predictions = probs.argmax(axis=1)
    return compute_report(confusion_from_predictions(labels, predictions, positive_label=1))


def _check_training_inputs(images, labels, val_images, val_labels):
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels)
    if images.ndim != 3 or images.shape[0] < 1 or labels.shape != (images.shape[0],):
        raise ContractError("training set needs one label per image")
    val_images = np.asarray(val_images, dtype=np.float64)
    val_labels = np.asarray(val_labels)
    if val_images.ndim != 3 or val_images.shape[0] < 1 or val_labels.shape != (val_images.shape[0],):
        raise ContractError("validation set needs one label per image")
    return images, labels, val_images, val_labels


def _inverse_frequency_weights(labels: np.ndarray, num_classes: int) -> np.ndarray:
    counts = np.bincount(labels, minlength=num_classes)
    return len(labels) / (num_classes * np.maximum(counts.astype(np.float64), 1.0))


def _select_best(params, best, epoch, score):
    # strictly-greater keeps the earlier epoch on ties
    if best is None or score > best["score"]:
        return {"params": copy.deepcopy(params), "epoch": epoch, "score": score}
    return best


def train_supervised(params: ModelParams, images, labels, optim: OptimState, epochs: int, val_images, val_labels, seed: int = 0, augment_fn=None, class_weights=None, log_fn=None) -> TrainOutcome:
    """Weighted cross-entropy SGD; returns the best-validation-G-Mean epoch.

    Class weights default to inverse frequency over the full labeled set.
    ``epochs=0`` returns the initial parameters with best_epoch=0.
    """
    images, labels, val_images, val_labels = _check_training_inputs(images, labels, val_images, val_labels)
    if epochs < 0:
        raise ContractError("epochs must be >= 0")
    if augment_fn is None:
        augment_fn = augment
    num_classes = params.num_classes()
    weights = _inverse_frequency_weights(labels, num_classes) if class_weights is None else np.asarray(class_weights, dtype=np.float64)

    shuffle_rng = derived_rng(seed, _ROLE_SHUFFLE)
    augment_rng = derived_rng(seed, _ROLE_AUGMENT)

    best = None
    history = []
    if epochs == 0:
        return TrainOutcome(params=copy.deepcopy(params), best_epoch=0, best_g_mean=float("nan"), epoch_g_means=[], steps_run=0)
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(images.shape[0])
        for start in range(0, len(order), BATCH_SIZE):
            take = order[start : start + BATCH_SIZE]
            batch = standardize_batch(images[take])
            batch = np.stack([augment_fn(img, augment_rng) for img in batch])
            targets = labels[take]
            probs, trace = forward(params, batch)
            loss = weighted_cross_entropy(probs, targets, weights)
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite supervised loss at step {optim.step}")
            grads = backward(params, trace, batch, "weighted_ce", {"targets": targets, "weights": weights})
            if log_fn is not None:
                log_fn({
                    "step": optim.step,
                    "epoch": epoch,
                    "supervised": loss,
                    "unsupervised": 0.0,
                    "effectiveGamma": 0.0,
                    "labeledWeights": weights.tolist(),
                    "unlabeledWeights": [],
                    "pseudoCounts": [],
                })
            sgd_step(params, grads, optim)
        score = evaluate_params(params, val_images, val_labels).g_mean
        history.append(score)
        best = _select_best(params, best, epoch, score)
    return TrainOutcome(params=best["params"], best_epoch=best["epoch"], best_g_mean=best["score"], epoch_g_means=history, steps_run=optim.step)


def train_ssdl(params: ModelParams, labeled_images, labeled_labels, unlabeled_images, optim: OptimState, config: mm.MixMatchConfig, epochs: int, val_images, val_labels, seed: int = 0, augment_fn=None, lambda_fn=None, log_fn=None) -> TrainOutcome:
    """Semi-supervised training with the compound mixed-batch loss.

    Each step pairs a labeled minibatch with an unlabeled one (both up to
    size 10), builds the mixed batch, and takes one SGD step on
    supervised + gamma * rampup(step) * consistency. Per-batch inverse
    pseudo-frequency weights are applied to both terms while
    ``config.pbc_enabled``; otherwise both sides use unit weights.
    """
    labeled_images, labeled_labels, val_images, val_labels = _check_training_inputs(labeled_images, labeled_labels, val_images, val_labels)
    unlabeled_images = np.asarray(unlabeled_images, dtype=np.float64)
    if unlabeled_images.ndim != 3 or unlabeled_images.shape[0] < 1:
        raise ContractError("unlabeled pool must be a non-empty (n, H, W) stack")
    if epochs < 0:
        raise ContractError("epochs must be >= 0")
    if augment_fn is None:
        augment_fn = augment
    num_classes = params.num_classes()

    shuffle_rng = derived_rng(seed, _ROLE_SHUFFLE)
    mix_rng = derived_rng(seed, _ROLE_AUGMENT)
    unlabeled_rng = derived_rng(seed, _ROLE_UNLABELED)

    u_batch = min(BATCH_SIZE, unlabeled_images.shape[0])
    u_order: list[int] = []

    best = None
    history = []
    if epochs == 0:
        return TrainOutcome(params=copy.deepcopy(params), best_epoch=0, best_g_mean=float("nan"), epoch_g_means=[], steps_run=0)
    for epoch in range(1, epochs + 1):
        order = shuffle_rng.permutation(labeled_images.shape[0])
        for start in range(0, len(order), BATCH_SIZE):
            take = order[start : start + BATCH_SIZE]
            if len(u_order) < u_batch:
                u_order = list(unlabeled_rng.permutation(unlabeled_images.shape[0]))
            u_take = [u_order.pop() for _ in range(u_batch)]

            batch = standardize_batch(labeled_images[take])
            targets = labeled_labels[take]
            u_std = standardize_batch(unlabeled_images[u_take])

            pseudo = mm.guess_labels(params, u_std, config.k, config.temperature, mix_rng, augment_fn=augment_fn)
            if config.pbc_enabled:
                weights = mm.pbc_weights(
                    np.bincount(targets, minlength=num_classes),
                    np.bincount(pseudo.soft_labels.argmax(axis=1), minlength=num_classes),
                )
            else:
                weights = mm.unit_weights(num_classes)

            mixed = mm.mix_match_batch(
                mm.LabeledBatch(images=batch, labels=targets),
                u_std,
                params,
                config,
                mix_rng,
                pseudo=pseudo,
                augment_fn=augment_fn,
                lambda_fn=lambda_fn,
            )
            _, components, grads = mm.compound_grads(params, mixed, config, optim.step, weights)
            if log_fn is not None:
                log_fn({
                    "step": optim.step,
                    "epoch": epoch,
                    "supervised": components.supervised,
                    "unsupervised": components.unsupervised,
                    "effectiveGamma": components.effective_gamma,
                    "labeledWeights": weights.labeled.tolist(),
                    "unlabeledWeights": weights.unlabeled.tolist(),
                    "pseudoCounts": np.bincount(
                        pseudo.soft_labels.argmax(axis=1), minlength=num_classes
                    ).tolist(),
                })
            sgd_step(params, grads, optim)
        score = evaluate_params(params, val_images, val_labels).g_mean
        history.append(score)
        best = _select_best(params, best, epoch, score)
    return TrainOutcome(params=best["params"], best_epoch=best["epoch"], best_g_mean=best["score"], epoch_g_means=history, steps_run=optim.step)
