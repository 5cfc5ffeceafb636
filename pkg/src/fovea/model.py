"""The detection network: an eight-layer convolutional heatmap regressor.

Layer widths are fixed at (32, 32, 32, 256, 512, 256, 256, 1); the nine
stock kernel-size schedules in FILTER_SIZE_CONFIGS trade receptive field
against depth-of-small-kernels. A single 2x2 max pool after layer 1
(conv, activation, pool) halves resolution, layers 6 and 7 carry 50%
dropout during training, and the final 1x1 layer emits a linear
one-channel heatmap at half the input tile size.

Training minimizes mean squared error against target heatmaps with Adam.
All randomness (init, batch order, dropout masks) is derived from
explicit integer seeds, so every run is reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from . import nn
from .errors import ConfigError, EmptyDatasetError, TrainingDivergedError

FILTER_COUNTS = (32, 32, 32, 256, 512, 256, 256, 1)

# Stock kernel-size schedules, widest receptive field first.
FILTER_SIZE_CONFIGS = {
    1: (19, 17, 15, 13, 11, 9, 7, 1),
    2: (17, 15, 13, 11, 9, 7, 5, 1),
    3: (15, 13, 11, 9, 7, 5, 3, 1),
    4: (13, 11, 9, 7, 5, 3, 3, 1),
    5: (11, 9, 7, 5, 3, 3, 3, 1),
    6: (9, 7, 5, 3, 3, 3, 3, 1),
    7: (7, 5, 3, 3, 3, 3, 3, 1),
    8: (5, 3, 3, 3, 3, 3, 3, 1),
    9: (3, 3, 3, 3, 3, 3, 3, 1),
}

_DROPOUT_LAYERS = (5, 6)  # zero-based: the 6th and 7th convolutional layers
_POOL_AFTER_LAYER = 0


@dataclass(frozen=True)
class ModelConfig:
    filter_sizes: tuple[int, ...]
    in_channels: int
    activation: str = "elu"
    leaky_slope: float = 0.01
    elu_alpha: float = 1.0
    dropout_rate: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "filter_sizes", tuple(int(s) for s in self.filter_sizes))
        if len(self.filter_sizes) != 8:
            raise ConfigError(f"filter_sizes needs 8 entries, got {len(self.filter_sizes)}")
        if any(s < 1 or s % 2 == 0 for s in self.filter_sizes):
            raise ConfigError(f"filter_sizes must be odd and positive, got {self.filter_sizes}")
        if self.filter_sizes[-1] != 1:
            raise ConfigError(
                f"filter_sizes must end with a 1x1 layer, got {self.filter_sizes[-1]}"
            )
        if self.in_channels < 1 or self.in_channels % 2 == 0:
            raise ConfigError(f"in_channels must be odd and >= 1, got {self.in_channels}")
        if self.activation not in nn.ACTIVATION_KINDS:
            raise ConfigError(
                f"activation must be one of {nn.ACTIVATION_KINDS}, got {self.activation!r}"
            )
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")

    def layer_shapes(self) -> list[tuple[int, int, int, int]]:
        shapes = []
        for i, (count, size) in enumerate(zip(FILTER_COUNTS, self.filter_sizes)):
            cin = self.in_channels if i == 0 else FILTER_COUNTS[i - 1]
            shapes.append((count, cin, size, size))
        return shapes


@dataclass
class Model:
    config: ModelConfig
    layers: list[nn.ConvLayer]

    def astype(self, dtype) -> "Model":
        return Model(self.config, [layer.astype(dtype) for layer in self.layers])


@dataclass
class TrainSpec:
    lr: float = 1e-5
    batch_size: int = 32
    max_steps: int = 0
    seed: int = 0
    heatmap_sigma: float = 2.0
    eval_every: int = 0
    checkpoint_every: int = 0

    def __post_init__(self):
        if self.lr < 0:
            raise ConfigError(f"lr must be >= 0, got {self.lr}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_steps < 0:
            raise ConfigError(f"max_steps must be >= 0, got {self.max_steps}")
        if self.heatmap_sigma <= 0:
            raise ConfigError(f"heatmap_sigma must be > 0, got {self.heatmap_sigma}")


class PairDataset(Protocol):
    """Anything exposing aligned stack/target arrays can be trained on."""

    stacks: np.ndarray   # (n, c, N, N)
    targets: np.ndarray  # (n, 1, N/2, N/2)


def build_model(cfg: ModelConfig, seed: int) -> Model:
    """Xavier-initialize all eight layers from per-layer child seeds."""
    children = np.random.SeedSequence(seed).spawn(8)
    layers = []
    for shape, child in zip(cfg.layer_shapes(), children):
        blank = nn.ConvLayer(np.zeros(shape, np.float32), np.zeros(shape[0], np.float32))
        layers.append(nn.xavier_init(blank, child))
    return Model(cfg, layers)


def _layer_dropout_seed(dropout_seed: int, layer_idx: int) -> int:
    return int(np.random.SeedSequence((dropout_seed, layer_idx)).generate_state(1)[0])


def _forward_full(net: Model, x: nn.Tensor4, training: bool, dropout_seed: int):
    cfg = net.config
    caches = []
    for i, layer in enumerate(net.layers):
        cache = {"x": x}
        z = nn.conv2d_forward(x, layer)
        cache["z"] = z
        out = z
        if i < 7:
            out = nn.activation_forward(z, cfg.activation, cfg.leaky_slope, cfg.elu_alpha)
            if i == _POOL_AFTER_LAYER:
                out, cache["argmax"] = nn.maxpool2x2_forward(out)
            if training and i in _DROPOUT_LAYERS:
                cache["dseed"] = _layer_dropout_seed(dropout_seed, i)
                out = nn.dropout(out, cfg.dropout_rate, cache["dseed"], training=True)
        caches.append(cache)
        x = out
    return x, caches


def forward(net: Model, stacks: np.ndarray, training: bool = False, dropout_seed: int = 0) -> np.ndarray:
    """Heatmaps for a batch of tiles; (b, c, N, N) -> (b, 1, N/2, N/2)."""
    out, _ = _forward_full(net, nn.Tensor4(stacks), training, dropout_seed)
    return out.values


def _backward_full(net: Model, caches, grad: nn.Tensor4):
    cfg = net.config
    grads = [None] * 8
    g = grad
    for i in reversed(range(8)):
        cache = caches[i]
        if i < 7:
            if "dseed" in cache:
                g = nn.dropout_backward(g, cfg.dropout_rate, cache["dseed"], training=True)
            if i == _POOL_AFTER_LAYER:
                g = nn.maxpool2x2_backward(g, cache["argmax"])
            g = nn.activation_backward(g, cache["z"], cfg.activation, cfg.leaky_slope, cfg.elu_alpha)
        g, gw, gb = nn.conv2d_backward(g, cache["x"], net.layers[i])
        grads[i] = (gw, gb)
    return grads


def mse_forward(net: Model, stacks: np.ndarray, targets: np.ndarray,
                training: bool = False, dropout_seed: int = 0) -> tuple[float, np.ndarray]:
    """Loss plus predicted heatmaps, without gradients."""
    pred, _ = _forward_full(net, nn.Tensor4(stacks), training, dropout_seed)
    loss, _ = nn.mse_loss(pred, nn.Tensor4(targets))
    return loss, pred.values


def loss_and_gradients(net: Model, stacks: np.ndarray, targets: np.ndarray,
                       training: bool = False, dropout_seed: int = 0) -> tuple[float, np.ndarray]:
    """Loss and the flat gradient vector over all weights and biases."""
    pred, caches = _forward_full(net, nn.Tensor4(stacks), training, dropout_seed)
    loss, grad = nn.mse_loss(pred, nn.Tensor4(targets))
    per_layer = _backward_full(net, caches, grad)
    flat = [a.ravel() for gw, gb in per_layer for a in (gw, gb)]
    return loss, np.concatenate(flat)


def params_to_vector(net: Model) -> np.ndarray:
    return np.concatenate([a.ravel() for layer in net.layers for a in (layer.weights, layer.bias)])


def vector_to_model(cfg: ModelConfig, vec: np.ndarray) -> Model:
    layers = []
    pos = 0
    for shape in cfg.layer_shapes():
        wn = int(np.prod(shape))
        w = vec[pos:pos + wn].reshape(shape)
        pos += wn
        b = vec[pos:pos + shape[0]]
        pos += shape[0]
        layers.append(nn.ConvLayer(w.copy(), b.copy()))
    if pos != vec.size:
        raise nn.DimensionError(f"vector has {vec.size} params, config needs {pos}")
    return Model(cfg, layers)


def _step_dropout_seed(seed: int, step: int) -> int:
    return int(np.random.SeedSequence((seed, step)).generate_state(1)[0])


def train(net: Model, dataset: PairDataset, spec: TrainSpec,
          on_step: Callable[[int, float, Model], None] | None = None) -> tuple[Model, list[float]]:
    """Minibatch Adam over (stack, heatmap) pairs.

    Returns the trained model and the per-step loss curve. The input model
    is not mutated. `on_step(step, loss, model)` fires after each update,
    giving callers a hook for eval cadence and periodic checkpoints.
    """
    n = len(dataset.stacks)
    if n == 0:
        raise EmptyDatasetError("dataset has no training pairs")
    if dataset.stacks.shape[1] != net.config.in_channels:
        raise ConfigError(
            f"dataset stacks have {dataset.stacks.shape[1]} channels, "
            f"model expects {net.config.in_channels}"
        )
    params = params_to_vector(net)
    adam = nn.AdamState.fresh(params.size, lr=spec.lr)
    rng = np.random.default_rng(spec.seed)
    losses: list[float] = []
    last_finite = float("nan")
    current = net
    for step in range(spec.max_steps):
        idx = rng.integers(0, n, size=spec.batch_size)
        current = vector_to_model(net.config, params)
        loss, grad = loss_and_gradients(
            current, dataset.stacks[idx], dataset.targets[idx],
            training=True, dropout_seed=_step_dropout_seed(spec.seed, step),
        )
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, spec.lr, last_finite)
        last_finite = loss
        losses.append(loss)
        params, adam = nn.adam_step(params, grad, adam)
        if on_step is not None:
            on_step(step, loss, vector_to_model(net.config, params))
    return vector_to_model(net.config, params), losses


def finetune(net: Model, dataset: PairDataset, spec: TrainSpec,
             on_step: Callable[[int, float, Model], None] | None = None) -> tuple[Model, list[float]]:
    """Continue training pretrained weights with a fresh optimizer state."""
    return train(net, dataset, spec, on_step=on_step)


def dead_unit_fraction(net: Model, probe: np.ndarray) -> list[float]:
    """Per activated layer: fraction of channels with no positive pre-activation.

    A channel that never goes above zero on the probe batch gets no
    gradient through a hard rectifier. Reported for the seven activated
    layers; elu has no zero-gradient region, so its fractions are 0 by
    convention.
    """
    _, caches = _forward_full(net, nn.Tensor4(probe), training=False, dropout_seed=0)
    fractions = []
    for cache in caches[:7]:
        if net.config.activation == "elu":
            fractions.append(0.0)
            continue
        z = cache["z"].values
        dead = np.all(z <= 0.0, axis=(0, 2, 3))
        fractions.append(float(dead.mean()))
    return fractions
