"""Dense feed-forward networks trained with Adam, dropout and plateau LR decay.

Weights follow the ``(fan_out, fan_in)`` convention: ``weights[l][j, i]`` is
the synapse from neuron ``i`` of layer ``l`` to neuron ``j`` of layer ``l+1``.
Every array is float64.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConfigError,
    DivergedTrainingError,
    InputShapeError,
    ModelFormatError,
    ModelVersionError,
)

MODEL_FORMAT = "fairrepair-model"
MODEL_FORMAT_VERSION = 1

HEADS = ("softmax", "linear")


@dataclass
class NetworkConfig:
    layer_sizes: list
    hidden_activation: str = "relu"
    output_head: str = "softmax"
    dropout_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        self.layer_sizes = [int(s) for s in self.layer_sizes]
        if len(self.layer_sizes) < 2:
            raise ConfigError("a network needs at least an input and an output layer")
        if any(s < 1 for s in self.layer_sizes):
            raise ConfigError(f"layer sizes must be positive, got {self.layer_sizes}")
        if self.hidden_activation != "relu":
            raise ConfigError(f"unsupported hidden activation {self.hidden_activation!r}")
        if self.output_head not in HEADS:
            raise ConfigError(f"output_head must be one of {HEADS}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must lie in [0, 1), got {self.dropout_rate}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        self.seed = int(self.seed)


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.9999
    adam_epsilon: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 30
    plateau_factor: float = 0.1
    plateau_patience: int = 5
    per_sample_weights: Optional[np.ndarray] = None
    # Shuffling seed. Dropout masks come from the network's own generator.
    seed: int = 0
    # Keep the parameters with the lowest validation loss seen.
    restore_best: bool = False

    def __post_init__(self):
        if not 0.0 < self.plateau_factor < 1.0:
            raise ConfigError("plateau_factor must lie in (0, 1)")
        if not (0.0 < self.beta1 < 1.0 and 0.0 < self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1 or self.plateau_patience < 1:
            raise ConfigError("batch_size, max_epochs and plateau_patience must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")


@dataclass
class ForwardTrace:
    """Activations of one sample. ``post[-1]`` holds the raw output-layer values
    (logits for a softmax head); ``output`` has the head applied."""

    pre: list
    post: list
    output: np.ndarray


class Network:
    def __init__(self, config: NetworkConfig, weights=None, biases=None):
        self.config = config
        self.dropout_enabled = False
        self.rng = np.random.default_rng(config.seed)
        sizes = config.layer_sizes
        if weights is None:
            weights, biases = [], []
            for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
                limit = math.sqrt(6.0 / fan_in)
                weights.append(self.rng.uniform(-limit, limit, size=(fan_out, fan_in)))
                biases.append(np.zeros(fan_out))
        self.weights = [np.array(w, dtype=np.float64) for w in weights]
        self.biases = [np.array(b, dtype=np.float64) for b in biases]
        self._check_shapes()

    def _check_shapes(self):
        sizes = self.config.layer_sizes
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise InputShapeError("parameter count does not match layer_sizes")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]) or b.shape != (sizes[l + 1],):
                raise InputShapeError(
                    f"layer {l}: expected W{(sizes[l + 1], sizes[l])} b({sizes[l + 1]},), "
                    f"got W{w.shape} b{b.shape}"
                )

    @property
    def n_layers(self):
        return len(self.config.layer_sizes)

    @property
    def input_size(self):
        return self.config.layer_sizes[0]

    @property
    def head(self):
        return self.config.output_head

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    def parameters(self):
        for w, b in zip(self.weights, self.biases):
            yield w
            yield b

    def all_finite(self) -> bool:
        return all(np.isfinite(p).all() for p in self.parameters())

    def same_parameters(self, other: "Network") -> bool:
        if self.config.layer_sizes != other.config.layer_sizes:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.parameters(), other.parameters()))

    def raw_output(self, X):
        """Output-layer values before the head, evaluated without dropout."""
        a = _as_batch(self, X)
        last = len(self.weights) - 1
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w.T + b
            if l < last:
                np.maximum(a, 0.0, out=a)
        return a

    def predict_scores(self, X):
        """Softmax probabilities, or the linear score vector for a linear head."""
        z = self.raw_output(X)
        if self.head == "softmax":
            return softmax(z)
        return z

    def positive_score(self, X):
        """A per-row score in [0, 1] for the positive class.

        Linear-head targets are centred on the decision boundary at 0, so
        ``(z + 1) / 2`` clipped to [0, 1] maps that boundary to 0.5.
        """
        z = self.raw_output(X)
        if self.head == "softmax":
            return softmax(z)[:, 1]
        return np.clip((z[:, 0] + 1.0) / 2.0, 0.0, 1.0)

    def predict(self, X):
        """Binary decisions: argmax for softmax, ``score > 0`` for the linear head."""
        z = self.raw_output(X)
        if self.head == "softmax":
            return np.argmax(z, axis=1).astype(np.int64)
        return (z[:, 0] > 0.0).astype(np.int64)


def _as_batch(net, X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != net.input_size:
        raise InputShapeError(f"expected inputs with {net.input_size} features, got shape {X.shape}")
    return X


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def set_dropout(net: Network, enabled: bool) -> Network:
    """Toggle dropout for training passes. Evaluation and tracing never use it."""
    net.dropout_enabled = bool(enabled)
    return net


def dropout_mask(rng, shape, rate):
    """Inverted-dropout mask: zeros with probability ``rate``, survivors scaled by 1/(1-rate)."""
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def forward_trace(net: Network, x) -> ForwardTrace:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_size:
        raise InputShapeError(f"expected a vector of {net.input_size} features, got shape {x.shape}")
    pre, post = [x.copy()], [x.copy()]
    a = x
    last = len(net.weights) - 1
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = w @ a + b
        a = np.maximum(z, 0.0) if l < last else z
        pre.append(z)
        post.append(a)
    out = softmax(a) if net.head == "softmax" else a.copy()
    return ForwardTrace(pre=pre, post=post, output=out)


def forward_batch_post(net: Network, X):
    """Post-activations of every layer for a batch (dropout bypassed).

    Rows are evaluated one at a time with the same matrix-vector products as
    :func:`forward_trace`. A batched matrix product may round a row
    differently depending on its neighbours, and slicing and profiling need
    each sample's values to be independent of how the batch was chunked.
    """
    X = _as_batch(net, X)
    n = X.shape[0]
    post = [X] + [np.empty((n, s)) for s in net.config.layer_sizes[1:]]
    last = len(net.weights) - 1
    for i in range(n):
        a = np.ascontiguousarray(X[i])
        for l, (w, b) in enumerate(zip(net.weights, net.biases)):
            a = w @ a + b
            if l < last:
                a = np.maximum(a, 0.0)
            post[l + 1][i] = a
    return post


def head_targets(net: Network, y, scores=None):
    """Training targets: class indices for softmax; for a linear head the
    centred ``scores`` when given, else -1/+1 from the binary labels."""
    y = np.asarray(y)
    if net.head == "softmax":
        return y.astype(np.int64)
    if scores is not None:
        return np.asarray(scores, dtype=np.float64)[:, None]
    return (2.0 * y.astype(np.float64) - 1.0)[:, None]


def data_targets(net: Network, data):
    return head_targets(net, data.Y, getattr(data, "T", None))


def loss_and_gradients(net: Network, X, targets, weights=None, masks=None):
    """Weighted loss and its gradients with respect to every weight and bias.

    The loss is ``sum_i w_i * l_i / n``: cross-entropy per row for the softmax
    head, squared error summed over outputs for the linear head. ``masks``
    holds one dropout mask per hidden layer, or None.

    Returns ``(loss, grad_w, grad_b)``.
    """
    X = _as_batch(net, X)
    n = X.shape[0]
    if n == 0:
        raise InputShapeError("empty batch")
    w_rows = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w_rows.shape != (n,):
        raise InputShapeError("per-sample weights must have one entry per row")

    last = len(net.weights) - 1
    acts, pres = [X], []
    a = X
    for l, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = a @ w.T + b
        pres.append(z)
        if l < last:
            a = np.maximum(z, 0.0)
            if masks is not None:
                a = a * masks[l]
            acts.append(a)
        else:
            a = z

    if net.head == "softmax":
        t = np.asarray(targets, dtype=np.int64)
        zs = a - a.max(axis=1, keepdims=True)
        logsum = np.log(np.exp(zs).sum(axis=1))
        logp = zs[np.arange(n), t] - logsum
        loss = float(-(w_rows * logp).sum() / n)
        dz = np.exp(zs - logsum[:, None])
        dz[np.arange(n), t] -= 1.0
    else:
        t = np.asarray(targets, dtype=np.float64).reshape(a.shape)
        r = a - t
        loss = float((w_rows * (r * r).sum(axis=1)).sum() / n)
        dz = 2.0 * r
    dz *= (w_rows / n)[:, None]

    grad_w = [None] * len(net.weights)
    grad_b = [None] * len(net.weights)
    for l in range(last, -1, -1):
        grad_w[l] = dz.T @ acts[l]
        grad_b[l] = dz.sum(axis=0)
        if l > 0:
            da = dz @ net.weights[l]
            if masks is not None:
                da = da * masks[l - 1]
            dz = da * (pres[l - 1] > 0.0)
    return loss, grad_w, grad_b


class Adam:
    """Adam moments for one network. ``lr`` is ``lr0 * factor**k`` after k decays."""

    def __init__(self, net: Network, cfg: TrainConfig):
        self.lr0 = cfg.learning_rate
        self.factor = cfg.plateau_factor
        self.decays = 0
        self.beta1, self.beta2, self.eps = cfg.beta1, cfg.beta2, cfg.adam_epsilon
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    @property
    def lr(self):
        return self.lr0 * self.factor**self.decays

    def decay(self):
        self.decays += 1

    def step(self, net: Network, grad_w, grad_b):
        self.t += 1
        grads = [g for pair in zip(grad_w, grad_b) for g in pair]
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        lr = self.lr
        for p, g, m, v in zip(net.parameters(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class PlateauScheduler:
    """Decays the optimizer's learning rate when the monitored loss stalls."""

    def __init__(self, opt: Adam, patience: int, threshold: float = 1e-4):
        self.opt = opt
        self.patience = patience
        self.threshold = threshold
        self.best = math.inf
        self.bad_epochs = 0

    def step(self, value: float) -> bool:
        """Record one epoch's loss; returns True when a decay fired."""
        if value < self.best * (1.0 - self.threshold):
            self.best = value
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        if self.bad_epochs >= self.patience:
            self.opt.decay()
            self.bad_epochs = 0
            return True
        return False


def fit_pass(net: Network, opt: Adam, X, targets, weights, batch_size, shuffle_rng, dropout, epoch=0):
    """One shuffled mini-batch pass over ``X``; returns the mean batch loss.

    Dropout masks are drawn from ``net.rng`` only when ``dropout`` is set and
    the rate is positive, so a disabled pass consumes no randomness.
    """
    n = X.shape[0]
    if n == 0:
        return float("nan")
    order = shuffle_rng.permutation(n)
    rate = net.config.dropout_rate
    use_dropout = dropout and rate > 0.0
    hidden = net.config.layer_sizes[1:-1]
    total, batches = 0.0, 0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        masks = None
        if use_dropout:
            masks = [dropout_mask(net.rng, (len(idx), h), rate) for h in hidden]
        w = None if weights is None else weights[idx]
        loss, gw, gb = loss_and_gradients(net, X[idx], targets[idx], w, masks)
        if not math.isfinite(loss):
            raise DivergedTrainingError(epoch)
        opt.step(net, gw, gb)
        total += loss
        batches += 1
    if not net.all_finite():
        raise DivergedTrainingError(epoch, "parameters became non-finite")
    return total / batches


def dataset_loss(net: Network, X, targets, weights=None):
    loss, _, _ = loss_and_gradients(net, X, targets, weights)
    return loss


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    decays: int = 0


def train(net: Network, data, cfg: TrainConfig, validation=None):
    """Train a copy of ``net`` on ``data`` (anything with ``X`` and ``Y``).

    The learning rate decays by ``cfg.plateau_factor`` after
    ``cfg.plateau_patience`` epochs without validation improvement; without a
    validation set the training loss is monitored instead.

    Returns ``(trained_network, TrainHistory)``.
    """
    if data.X.shape[0] == 0:
        raise InputShapeError("cannot train on an empty dataset")
    y = np.asarray(data.Y)
    if net.head == "softmax" and not np.isin(y, (0, 1)).all():
        raise InputShapeError("softmax head expects labels in {0, 1}")
    net = net.copy()
    X = np.asarray(data.X, dtype=np.float64)
    targets = data_targets(net, data)
    weights = cfg.per_sample_weights
    if weights is not None:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (X.shape[0],):
            raise InputShapeError("per_sample_weights must have one entry per training row")
    if validation is not None:
        vX = np.asarray(validation.X, dtype=np.float64)
        vT = data_targets(net, validation)

    opt = Adam(net, cfg)
    sched = PlateauScheduler(opt, cfg.plateau_patience)
    shuffle_rng = np.random.default_rng(cfg.seed)
    hist = TrainHistory()
    best_val, best_params = math.inf, None
    for epoch in range(cfg.max_epochs):
        tl = fit_pass(net, opt, X, targets, weights, cfg.batch_size, shuffle_rng, net.dropout_enabled, epoch)
        hist.train_loss.append(tl)
        hist.lr.append(opt.lr)
        monitored = tl
        if validation is not None and vX.shape[0] > 0:
            monitored = dataset_loss(net, vX, vT)
            hist.val_loss.append(monitored)
            if cfg.restore_best and monitored < best_val:
                best_val = monitored
                best_params = ([w.copy() for w in net.weights], [b.copy() for b in net.biases])
        if sched.step(monitored):
            hist.decays += 1
    if best_params is not None:
        net.weights, net.biases = best_params
    return net, hist


# -- persistence -------------------------------------------------------------

def model_to_dict(net: Network) -> dict:
    return {
        "format": MODEL_FORMAT,
        "version": MODEL_FORMAT_VERSION,
        "config": asdict(net.config),
        "layers": [
            {"weight": w.tolist(), "bias": b.tolist()} for w, b in zip(net.weights, net.biases)
        ],
    }


def model_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a fairrepair model document")
    if doc.get("version") != MODEL_FORMAT_VERSION:
        raise ModelVersionError(doc.get("version"), MODEL_FORMAT_VERSION)
    try:
        config = NetworkConfig(**doc["config"])
        weights = [np.array(layer["weight"], dtype=np.float64) for layer in doc["layers"]]
        biases = [np.array(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
        # A zero-column weight list round-trips as shape (k, 0) only via reshape.
        weights = [
            w.reshape(config.layer_sizes[l + 1], config.layer_sizes[l]) for l, w in enumerate(weights)
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"malformed model document: {exc}") from exc
    return Network(config, weights, biases)


def save_model(net: Network, path) -> None:
    # json writes floats with repr(), which round-trips float64 exactly.
    Path(path).write_text(json.dumps(model_to_dict(net)), encoding="ascii")


def load_model(path) -> Network:
    raw = Path(path).read_bytes()
    try:
        doc = json.loads(raw.decode("ascii"))
    except UnicodeDecodeError as exc:
        raise ModelFormatError("model file is not ASCII", exc.start) from exc
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc.msg}", exc.pos) from exc
    return model_from_dict(doc)


def build_network(layer_sizes: Sequence[int], head="softmax", dropout_rate=0.5, seed=0) -> Network:
    return Network(NetworkConfig(list(layer_sizes), "relu", head, dropout_rate, seed))
