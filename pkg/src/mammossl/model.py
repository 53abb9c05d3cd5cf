"""Minimal dense softmax classifier with exact reverse-mode gradients.

The network is flatten -> dense -> tanh -> ... -> dense -> softmax, sized so
a desk CPU trains it in seconds. Everything is float64 numpy; no framework.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ContractError, DataError

LOG_CLAMP = 1e-12

PARAMS_FORMAT = "mammossl-params"
PARAMS_VERSION = 1


@dataclass
class ClassifierConfig:
    """Architecture and init settings for the classifier."""

    input_height: int
    input_width: int
    hidden_sizes: tuple[int, ...] = (32,)
    num_classes: int = 2
    init_scale: float = 0.05
    seed: int = 0

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if self.input_height < 1 or self.input_width < 1:
            raise ConfigurationError("input size must be positive")
        if not 1 <= len(self.hidden_sizes) <= 2:
            raise ConfigurationError("hidden_sizes takes one or two entries")
        if any(h < 1 or h > 512 for h in self.hidden_sizes):
            raise ConfigurationError("hidden sizes must be in 1..512")
        if self.num_classes < 2:
            raise ConfigurationError("num_classes must be >= 2")
        if self.init_scale < 0:
            raise ConfigurationError("init_scale must be >= 0")
        sizes = self.layer_sizes()
        n_params = sum(a * b + b for a, b in zip(sizes, sizes[1:]))
        if n_params > 50_000_000:
            raise ConfigurationError(f"parameter count {n_params} overflows the desk-scale budget")

    def layer_sizes(self) -> list[int]:
        return [self.input_height * self.input_width, *self.hidden_sizes, self.num_classes]

    def architecture_tag(self) -> str:
        hidden = "x".join(str(h) for h in self.hidden_sizes)
        return f"mlp-{self.input_height}x{self.input_width}-h{hidden}-c{self.num_classes}"


@dataclass
class DenseLayer:
    weight: np.ndarray  # (fan_in, fan_out)
    bias: np.ndarray  # (fan_out,)


@dataclass
class ModelParams:
    layers: list[DenseLayer]
    architecture_tag: str
    input_shape: tuple[int, int]

    def num_classes(self) -> int:
        return self.layers[-1].bias.shape[0]


@dataclass
class OptimState:
    """Plain SGD with decoupled-by-formula weight decay; step counts updates."""

    learning_rate: float = 0.00002
    weight_decay: float = 0.001
    step: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigurationError("learning_rate and weight_decay must be >= 0")


@dataclass
class ForwardTrace:
    """Intermediate values needed by backward."""

    flat_inputs: np.ndarray
    pre_activations: list[np.ndarray] = field(default_factory=list)
    hidden_activations: list[np.ndarray] = field(default_factory=list)
    probabilities: np.ndarray | None = None


def init_model(config: ClassifierConfig) -> ModelParams:
    """Deterministically initialize parameters for ``config``.

    Weights are uniform in [-1, 1] scaled by init_scale/sqrt(fan_in); biases
    are zero. The same config (same seed) always yields identical values.
    """
    rng = np.random.default_rng(config.seed)
    sizes = config.layer_sizes()
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        scale = config.init_scale / np.sqrt(fan_in)
        weight = rng.uniform(-1.0, 1.0, size=(fan_in, fan_out)) * scale
        layers.append(DenseLayer(weight=weight, bias=np.zeros(fan_out)))
    return ModelParams(
        layers=layers,
        architecture_tag=config.architecture_tag(),
        input_shape=(config.input_height, config.input_width),
    )


def _flatten_batch(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim != 3 or batch.shape[0] < 1:
        raise ContractError(f"batch must be (n, H, W), got shape {batch.shape}")
    h, w = params.input_shape
    if batch.shape[1:] != (h, w):
        raise ContractError(f"batch images {batch.shape[1:]} do not match model input {(h, w)}")
    if not np.all(np.isfinite(batch)):
        raise ContractError("batch contains non-finite values")
    return batch.reshape(batch.shape[0], h * w)


def _softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def forward(params: ModelParams, batch: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network; returns (probabilities, trace for backward)."""
    x = _flatten_batch(params, batch)
    trace = ForwardTrace(flat_inputs=x)
    a = x
    for i, layer in enumerate(params.layers):
        z = a @ layer.weight + layer.bias
        trace.pre_activations.append(z)
        if i < len(params.layers) - 1:
            a = np.tanh(z)
            trace.hidden_activations.append(a)
    probs = _softmax(trace.pre_activations[-1])
    trace.probabilities = probs
    return probs, trace


def extract_penultimate(params: ModelParams, batch: np.ndarray) -> np.ndarray:
    """Activations of the last hidden layer, one row per image."""
    _, trace = forward(params, batch)
    return trace.hidden_activations[-1]


def _check_probs(probs: np.ndarray) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2 or probs.shape[0] < 1:
        raise ContractError("probabilities must be a non-empty (n, C) matrix")
    return probs


def _check_class_weights(weights, num_classes: int) -> np.ndarray:
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (num_classes,) or np.any(weights <= 0) or not np.all(np.isfinite(weights)):
        raise ContractError("class weights must be a positive vector, one entry per class")
    return weights


def weighted_cross_entropy(probs, targets, weights) -> float:
    """Mean of -w[y_i] * log(p_i[y_i]) with log clamped at 1e-12.

    Parameters
    ----------
    probs : (n, C) row-stochastic matrix
    targets : n integer labels in [0, C)
    weights : positive per-class weight vector
    """
    probs = _check_probs(probs)
    n, c = probs.shape
    targets = np.asarray(targets)
    if targets.shape != (n,):
        raise ContractError("targets length must match the batch")
    if targets.min() < 0 or targets.max() >= c:
        raise ContractError("target labels out of range")
    weights = _check_class_weights(weights, c)
    picked = probs[np.arange(n), targets]
    return float(np.mean(-weights[targets] * np.log(np.maximum(picked, LOG_CLAMP))))


def soft_cross_entropy(probs, soft_targets, weights) -> float:
    """Mean of -sum_c w_c * y_c * log(p_c) for soft target rows."""
    probs = _check_probs(probs)
    soft_targets = np.asarray(soft_targets, dtype=np.float64)
    if soft_targets.shape != probs.shape:
        raise ContractError("soft targets must match probabilities in shape")
    weights = _check_class_weights(weights, probs.shape[1])
    logs = np.log(np.maximum(probs, LOG_CLAMP))
    return float(np.mean(-(soft_targets * weights * logs).sum(axis=1)))


def euclidean_loss(probs, pseudo_targets, example_weights=None) -> float:
    """Mean squared L2 distance per example between prediction and target rows."""
    probs = _check_probs(probs)
    pseudo_targets = np.asarray(pseudo_targets, dtype=np.float64)
    if pseudo_targets.shape != probs.shape:
        raise ContractError("pseudo targets must match probabilities in shape")
    d = ((probs - pseudo_targets) ** 2).sum(axis=1)
    if example_weights is not None:
        example_weights = np.asarray(example_weights, dtype=np.float64)
        if example_weights.shape != (probs.shape[0],):
            raise ContractError("example weights must have one entry per row")
        d = d * example_weights
    return float(np.mean(d))


def _logit_gradient(trace: ForwardTrace, loss_kind: str, loss_args: dict) -> np.ndarray:
    probs = trace.probabilities
    n, c = probs.shape
    if loss_kind == "weighted_ce":
        targets = np.asarray(loss_args["targets"])
        weights = _check_class_weights(loss_args["weights"], c)
        one_hot = np.zeros((n, c))
        one_hot[np.arange(n), targets] = 1.0
        return weights[targets][:, None] * (probs - one_hot) / n
    if loss_kind == "soft_ce":
        soft = np.asarray(loss_args["soft_targets"], dtype=np.float64)
        weights = _check_class_weights(loss_args["weights"], c)
        wy = soft * weights
        return (probs * wy.sum(axis=1, keepdims=True) - wy) / n
    if loss_kind == "euclidean":
        pseudo = np.asarray(loss_args["pseudo_targets"], dtype=np.float64)
        g = 2.0 * (probs - pseudo)
        ew = loss_args.get("example_weights")
        if ew is not None:
            g = g * np.asarray(ew, dtype=np.float64)[:, None]
        g = g / n
        # chain through softmax: dz_k = p_k * (g_k - <g, p>)
        return probs * (g - (g * probs).sum(axis=1, keepdims=True))
    raise ContractError(f"unknown loss kind {loss_kind!r}")


def backward(params: ModelParams, trace: ForwardTrace, batch: np.ndarray, loss_kind: str, loss_args: dict) -> list[tuple[np.ndarray, np.ndarray]]:
    """Exact gradients of the named loss w.r.t. every parameter.

    Returns one (dW, db) pair per layer, in layer order. The trace must come
    from a forward pass of ``batch`` on ``params``.
    """
    x = _flatten_batch(params, batch)
    if trace.probabilities is None or trace.flat_inputs.shape != x.shape:
        raise ContractError("trace is stale or does not match the batch")
    if trace.probabilities.shape[1] != params.num_classes():
        raise ContractError("trace does not match the model head")

    delta = _logit_gradient(trace, loss_kind, loss_args)
    acts = [x, *trace.hidden_activations]
    grads: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(len(params.layers) - 1, -1, -1):
        grads.append((acts[i].T @ delta, delta.sum(axis=0)))
        if i > 0:
            delta = (delta @ params.layers[i].weight.T) * (1.0 - acts[i] ** 2)
    grads.reverse()
    return grads


def sgd_step(params: ModelParams, grads: list[tuple[np.ndarray, np.ndarray]], optim: OptimState) -> None:
    """In-place update w <- w - lr * (grad + weight_decay * w); biases undecayed."""
    if len(grads) != len(params.layers):
        raise ContractError("gradient list does not match the layer list")
    for layer, (dw, db) in zip(params.layers, grads):
        if dw.shape != layer.weight.shape or db.shape != layer.bias.shape:
            raise ContractError("gradient shapes do not match parameters")
        layer.weight -= optim.learning_rate * (dw + optim.weight_decay * layer.weight)
        layer.bias -= optim.learning_rate * (db + optim.weight_decay * layer.bias)
    optim.step += 1


def _loss_value(params: ModelParams, batch: np.ndarray, loss_kind: str, loss_args: dict) -> float:
    probs, _ = forward(params, batch)
    if loss_kind == "weighted_ce":
        return weighted_cross_entropy(probs, loss_args["targets"], loss_args["weights"])
    if loss_kind == "soft_ce":
        return soft_cross_entropy(probs, loss_args["soft_targets"], loss_args["weights"])
    if loss_kind == "euclidean":
        return euclidean_loss(probs, loss_args["pseudo_targets"], loss_args.get("example_weights"))
    raise ContractError(f"unknown loss kind {loss_kind!r}")


def gradient_check(config: ClassifierConfig, images: np.ndarray, targets, loss_kind: str = "weighted_ce", weights=None, epsilon: float = 1e-4) -> float:
    """Max relative error between backward and central finite differences.

    Builds a fresh model from ``config`` and perturbs every parameter in turn,
    so keep the config tiny (a few thousand parameters).
    """
    params = init_model(config)
    n_params = sum(l.weight.size + l.bias.size for l in params.layers)
    if n_params > 20_000:
        raise ConfigurationError(f"gradient_check is exhaustive; {n_params} parameters is too many")

    targets = np.asarray(targets)
    if weights is None:
        weights = np.ones(config.num_classes)
    if loss_kind == "euclidean":
        rng = np.random.default_rng(config.seed + 1)
        raw = rng.uniform(0.1, 1.0, size=(len(targets), config.num_classes))
        loss_args = {"pseudo_targets": raw / raw.sum(axis=1, keepdims=True)}
    else:
        key = "targets" if loss_kind == "weighted_ce" else "soft_targets"
        if loss_kind == "soft_ce" and targets.ndim == 1:
            one_hot = np.zeros((len(targets), config.num_classes))
            one_hot[np.arange(len(targets)), targets.astype(int)] = 1.0
            loss_args = {key: one_hot, "weights": weights}
        else:
            loss_args = {key: targets, "weights": weights}

    _, trace = forward(params, images)
    analytic = backward(params, trace, images, loss_kind, loss_args)

    worst = 0.0
    for layer, (dw, db) in zip(params.layers, analytic):
        for arr, grad in ((layer.weight, dw), (layer.bias, db)):
            flat = arr.reshape(-1)
            gflat = grad.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + epsilon
                hi = _loss_value(params, images, loss_kind, loss_args)
                flat[j] = orig - epsilon
                lo = _loss_value(params, images, loss_kind, loss_args)
                flat[j] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                scale = max(abs(numeric) + abs(gflat[j]), 1e-6)
                worst = max(worst, abs(numeric - gflat[j]) / scale)
    return worst


def save_params(params: ModelParams, path) -> None:
    """Write the versioned JSON parameter container (row-major values)."""
    doc = {
        "format": PARAMS_FORMAT,
        "version": PARAMS_VERSION,
        "architecture_tag": params.architecture_tag,
        "input_shape": list(params.input_shape),
        "layers": [
            {
                "weight_shape": list(l.weight.shape),
                "weight": l.weight.reshape(-1).tolist(),
                "bias": l.bias.tolist(),
            }
            for l in params.layers
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


def load_params(path) -> ModelParams:
    """Read a parameter container written by :func:`save_params`."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read parameter file {path}: {exc}") from exc
    if not isinstance(doc, dict) or doc.get("format") != PARAMS_FORMAT:
        raise DataError(f"{path} is not a parameter container")
    if doc.get("version") != PARAMS_VERSION:
        raise DataError(f"unsupported parameter container version {doc.get('version')!r}")
    try:
        layers = []
        for entry in doc["layers"]:
            shape = tuple(entry["weight_shape"])
            weight = np.asarray(entry["weight"], dtype=np.float64).reshape(shape)
            bias = np.asarray(entry["bias"], dtype=np.float64)
            if bias.shape != (shape[1],):
                raise DataError("bias length does not match weight columns")
            layers.append(DenseLayer(weight=weight, bias=bias))
        params = ModelParams(
            layers=layers,
            architecture_tag=str(doc["architecture_tag"]),
            input_shape=(int(doc["input_shape"][0]), int(doc["input_shape"][1])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed parameter container {path}: {exc}") from exc
    for a, b in zip(params.layers, params.layers[1:]):
        if a.weight.shape[1] != b.weight.shape[0]:
            raise DataError("layer shapes do not chain")
    if params.layers[0].weight.shape[0] != params.input_shape[0] * params.input_shape[1]:
        raise DataError("input shape does not match the first layer")
    return params
