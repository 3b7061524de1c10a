"""From-scratch feed-forward softmax classifier.

Architecture: input -> optional tanh hidden layer -> softmax.  Training
is plain mini-batch SGD with momentum on cross-entropy plus an L2
penalty on the weights (not biases).  Inputs are standardized per
feature with statistics fitted on the training split only; zero
variance features get std 1 so they pass through centered.

Everything is deterministic given the seed: initialization and epoch
shuffles come from one Philox stream, and the returned model carries
the parameters of the epoch with the best validation loss.

Models serialize to a versioned JSON document with hex-float strings,
so save/load round-trips are bit-exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .spectral import FeatureVector

__all__ = [
    "TrainConfig",
    "Model",
    "Metrics",
    "TrainingDataError",
    "DivergenceError",
    "CompatibilityError",
    "ModelFormatError",
    "train",
    "predict",
    "predict_proba",
    "predict_classes",
    "evaluate",
    "loss_and_grads",
    "init_params",
    "save_model",
    "load_model",
]

MODEL_FORMAT_VERSION = 1


class TrainingDataError(ValueError):
    """Labels outside [0, n_classes) or a class absent from training data."""


class DivergenceError(RuntimeError):
    """Loss went non-finite during training."""


class CompatibilityError(ValueError):
    """Feature layout fingerprint does not match the model."""


class ModelFormatError(ValueError):
    """Model file is corrupt or has an unsupported version."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 100
    l2: float = 1e-4
    hidden_dim: int = 64  # 0 drops the hidden layer entirely
    patience: int = 10

    def __post_init__(self):
        if self.learning_rate <= 0 or not math.isfinite(self.learning_rate):
            raise ValueError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.batch_size < 1 or self.epochs < 1 or self.patience < 1:
            raise ValueError("batch_size, epochs, and patience must be >= 1")
        if self.hidden_dim < 0:
            raise ValueError(f"hidden_dim must be >= 0, got {self.hidden_dim}")
        if self.l2 < 0:
            raise ValueError(f"l2 must be >= 0, got {self.l2}")


@dataclass
class Model:
    input_dim: int
    hidden_dim: int
    n_classes: int
    norm_mean: np.ndarray
    norm_std: np.ndarray
    layers: list[tuple[np.ndarray, np.ndarray]]  # [(W, b), ...]
    feature_fingerprint: str

    def standardize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.norm_mean) / self.norm_std


@dataclass
class Metrics:
    accuracy: float
    precision: np.ndarray  # per class; 0 when the class is never predicted
    recall: np.ndarray  # per class; 0 when the class never occurs
    confusion: np.ndarray  # [true, predicted] counts
    mean_cross_entropy: float
    n_samples: int = field(default=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def init_params(
    input_dim: int, hidden_dim: int, n_classes: int, rng: np.random.Generator
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Gaussian fan-in-scaled weights, zero biases."""
    dims = [input_dim] + ([hidden_dim] if hidden_dim > 0 else []) + [n_classes]
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))
        layers.append((w, np.zeros(fan_out)))
    return layers


def _forward(layers, x: np.ndarray):
    """Returns (softmax probabilities, per-layer activations)."""
    activations = [x]
    a = x
    for i, (w, b) in enumerate(layers):
        z = a @ w + b
        a = np.tanh(z) if i < len(layers) - 1 else z
        activations.append(a)
    return softmax(activations[-1]), activations


def loss_and_grads(layers, x: np.ndarray, y: np.ndarray, l2: float):
    """Mean cross-entropy + 0.5*l2*sum(W^2) and its parameter gradients.

    x: (n, d) standardized features; y: (n,) integer labels.
    """
    n = x.shape[0]
    probs, activations = _forward(layers, x)
    eps = 1e-12  # guards log(0) when a probability underflows
    nll = -np.log(probs[np.arange(n), y] + eps).mean()
    loss = nll + 0.5 * l2 * sum(float(np.sum(w * w)) for w, _ in layers)

    delta = probs.copy()
    delta[np.arange(n), y] -= 1.0
    delta /= n
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        w, _ = layers[i]
        grads[i] = (activations[i].T @ delta + l2 * w, delta.sum(axis=0))
        if i > 0:
            # tanh'(z) = 1 - tanh(z)^2; activations[i] already holds tanh(z)
            delta = (delta @ w.T) * (1.0 - activations[i] ** 2)
    return loss, grads


def _check_training_data(x, y, n_classes: int, name: str):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim != 2:
        raise TrainingDataError(f"{name} features must be 2D, got shape {x.shape}")
    if y.shape != (x.shape[0],):
        raise TrainingDataError(
            f"{name} labels must be shape ({x.shape[0]},), got {y.shape}"
        )
    if not np.issubdtype(y.dtype, np.integer):
        y = y.astype(np.int64)
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise TrainingDataError(
            f"{name} labels must lie in [0, {n_classes}), "
            f"got range [{y.min()}, {y.max()}]"
        )
    return x, y.astype(np.int64)


def train(
    train_set: tuple[np.ndarray, np.ndarray],
    val_set: tuple[np.ndarray, np.ndarray] | None,
    n_classes: int,
    config: TrainConfig = TrainConfig(),
    seed: int = 0,
    feature_fingerprint: str = "",
) -> Model:
    """Fit the classifier; returns the parameters with best validation loss.

    Early stopping: training halts when the validation loss has not
    improved for `config.patience` consecutive epochs.  Without a
    validation set the final-epoch parameters are returned and early
    stopping is disabled.  Raises DivergenceError (with the epoch) if
    the loss goes non-finite, TrainingDataError if any class in
    [0, n_classes) is missing from the training labels.
    """
    if n_classes < 2:
        raise TrainingDataError(f"need at least 2 classes, got {n_classes}")
    x_train, y_train = _check_training_data(*train_set, n_classes, "train")
    if x_train.shape[0] == 0:
        raise TrainingDataError("training set is empty")
    present = np.unique(y_train)
    if len(present) != n_classes:
        missing = sorted(set(range(n_classes)) - set(present.tolist()))
        raise TrainingDataError(f"training data is missing classes {missing}")
    if val_set is not None:
        x_val, y_val = _check_training_data(*val_set, n_classes, "val")
        if x_val.shape[0] == 0:
            raise TrainingDataError("validation set is empty; pass None to disable")

    # standardization fitted on the training split only
    mean = x_train.mean(axis=0)
    std = x_train.std(axis=0)
    std[std == 0.0] = 1.0
    xt = (x_train - mean) / std
    xv = (x_val - mean) / std if val_set is not None else None

    rng = np.random.Generator(np.random.Philox(key=[int(seed) & (2**64 - 1), 2]))
    layers = init_params(x_train.shape[1], config.hidden_dim, n_classes, rng)
    velocity = [(np.zeros_like(w), np.zeros_like(b)) for w, b in layers]

    best_layers = [(w.copy(), b.copy()) for w, b in layers]
    best_val = np.inf
    stall = 0
    n = xt.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = loss_and_grads(layers, xt[batch], y_train[batch], config.l2)
            if not math.isfinite(loss):
                raise DivergenceError(f"training loss went non-finite at epoch {epoch}")
            for i, ((w, b), (gw, gb), (vw, vb)) in enumerate(
                zip(layers, grads, velocity)
            ):
                vw = config.momentum * vw - config.learning_rate * gw
                vb = config.momentum * vb - config.learning_rate * gb
                layers[i] = (w + vw, b + vb)
                velocity[i] = (vw, vb)
        if xv is not None:
            val_loss, _ = loss_and_grads(layers, xv, y_val, config.l2)
            if not math.isfinite(val_loss):
                raise DivergenceError(
                    f"validation loss went non-finite at epoch {epoch}"
                )
            if val_loss < best_val:
                best_val = val_loss
                best_layers = [(w.copy(), b.copy()) for w, b in layers]
                stall = 0
            else:
                stall += 1
                if stall >= config.patience:
                    break
        else:
            best_layers = layers

    return Model(
        input_dim=x_train.shape[1],
        hidden_dim=config.hidden_dim,
        n_classes=n_classes,
        norm_mean=mean,
        norm_std=std,
        layers=best_layers,
        feature_fingerprint=feature_fingerprint,
    )


def predict_proba(model: Model, features: np.ndarray) -> np.ndarray:
    """Class probabilities for an (n, d) feature matrix."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ValueError(
            f"expected features of shape (n, {model.input_dim}), got {x.shape}"
        )
    probs, _ = _forward(model.layers, model.standardize(x))
    return probs


def predict(model: Model, features) -> np.ndarray:
    """Probabilities for a single feature vector.

    Accepts a FeatureVector (fingerprint checked against the model) or
    a bare length-d array.
    """
    if isinstance(features, FeatureVector):
        if model.feature_fingerprint and features.fingerprint != model.feature_fingerprint:
            raise CompatibilityError(
                f"feature fingerprint {features.fingerprint} does not match "
                f"model fingerprint {model.feature_fingerprint}"
            )
        features = features.values
    return predict_proba(model, np.asarray(features)[None, :])[0]


def predict_classes(model: Model, features: np.ndarray) -> np.ndarray:
    """Argmax classes; ties break toward the lower class index."""
    return np.argmax(predict_proba(model, features), axis=1)


def evaluate(model: Model, features: np.ndarray, labels: np.ndarray) -> Metrics:
    """Accuracy, per-class precision/recall, confusion matrix, mean CE."""
    x, y = _check_training_data(features, labels, model.n_classes, "eval")
    if x.shape[0] == 0:
        raise TrainingDataError("evaluation set is empty")
    probs = predict_proba(model, x)
    predicted = np.argmax(probs, axis=1)
    c = model.n_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y, predicted), 1)
    col = confusion.sum(axis=0)
    row = confusion.sum(axis=1)
    diag = np.diag(confusion)
    precision = np.divide(diag, col, out=np.zeros(c, dtype=np.float64), where=col > 0)
    recall = np.divide(diag, row, out=np.zeros(c, dtype=np.float64), where=row > 0)
    mean_ce = float(-np.log(probs[np.arange(len(y)), y] + 1e-12).mean())
    return Metrics(
        accuracy=float(diag.sum() / len(y)),
        precision=precision,
        recall=recall,
        confusion=confusion,
        mean_cross_entropy=mean_ce,
        n_samples=len(y),
    )


def _hex_list(arr: np.ndarray) -> list[str]:
    return [float(v).hex() for v in np.asarray(arr, dtype=np.float64).ravel()]


def _from_hex(values, shape) -> np.ndarray:
    return np.array([float.fromhex(v) for v in values], dtype=np.float64).reshape(shape)


def save_model(model: Model, path) -> None:
    """Versioned JSON with hex-float weights; reruns are byte-identical."""
    doc = {
        "format_version": MODEL_FORMAT_VERSION,
        "input_dim": model.input_dim,
        "hidden_dim": model.hidden_dim,
        "n_classes": model.n_classes,
        "feature_fingerprint": model.feature_fingerprint,
        "norm_mean": _hex_list(model.norm_mean),
        "norm_std": _hex_list(model.norm_std),
        "layers": [
            {
                "rows": w.shape[0],
                "cols": w.shape[1],
                "weights": _hex_list(w),
                "bias": _hex_list(b),
            }
            for w, b in model.layers
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_model(path) -> Model:
    """Inverse of save_model.

    Raises ModelFormatError with the byte offset for corrupt JSON, and
    for unsupported versions or missing fields (fingerprint included).
    """
    with open(path, "r") as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(
            f"{path}: corrupt model file at byte offset {exc.pos}: {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{path}: model document must be a JSON object")
    version = doc.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"{path}: unsupported model format version {version!r} "
            f"(supported: {MODEL_FORMAT_VERSION})"
        )
    required = (
        "input_dim",
        "hidden_dim",
        "n_classes",
        "feature_fingerprint",
        "norm_mean",
        "norm_std",
        "layers",
    )
    missing = [key for key in required if key not in doc]
    if missing:
        if "feature_fingerprint" in missing:
            raise CompatibilityError(f"{path}: model lacks a feature fingerprint")
        raise ModelFormatError(f"{path}: missing fields {missing}")
    try:
        input_dim = int(doc["input_dim"])
        layers = [
            (
                _from_hex(layer["weights"], (layer["rows"], layer["cols"])),
                _from_hex(layer["bias"], (layer["cols"],)),
            )
            for layer in doc["layers"]
        ]
        model = Model(
            input_dim=input_dim,
            hidden_dim=int(doc["hidden_dim"]),
            n_classes=int(doc["n_classes"]),
            norm_mean=_from_hex(doc["norm_mean"], (input_dim,)),
            norm_std=_from_hex(doc["norm_std"], (input_dim,)),
            layers=layers,
            feature_fingerprint=str(doc["feature_fingerprint"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: malformed model fields ({exc})") from None
    if not model.layers or model.layers[-1][0].shape[1] != model.n_classes:
        raise ModelFormatError(f"{path}: layer shapes disagree with n_classes")
    return model
