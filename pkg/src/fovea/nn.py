"""Minimal deterministic numeric core.

Rank-4 float tensors, the fixed set of layer operations the detection
network needs (same-padded convolution, 2x2 max pooling, pointwise
activations, inverted dropout, mean squared error), hand-derived
reverse-mode gradients for each of them, Xavier initialization and the
Adam update.

Everything is a pure function of its arguments plus an explicit seed;
storage is float32, but every operation preserves float64 inputs so
tests can run a 64-bit shadow pass.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_FLOAT_DTYPES = (np.float32, np.float64)


class DimensionError(ValueError):
    """Operand shapes are inconsistent with the operation."""


@dataclass
class Tensor4:
    """A (batch, channels, height, width) array plus an optional gradient."""

    values: np.ndarray
    grad: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.dtype not in _FLOAT_DTYPES:
            self.values = self.values.astype(np.float32)
        if self.values.ndim != 4:
            raise DimensionError(f"Tensor4 needs 4 dims, got shape {self.values.shape}")
        if self.grad is not None:
            self.grad = np.asarray(self.grad, dtype=self.values.dtype)
            if self.grad.shape != self.values.shape:
                raise DimensionError(
                    f"grad shape {self.grad.shape} != values shape {self.values.shape}"
                )

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.values.shape


@dataclass
class ConvLayer:
    """Square odd-sized kernel bank with 'same' zero padding, stride 1."""

    weights: np.ndarray  # (out_ch, in_ch, k, k)
    bias: np.ndarray     # (out_ch,)

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        self.bias = np.asarray(self.bias)
        if self.weights.dtype not in _FLOAT_DTYPES:
            self.weights = self.weights.astype(np.float32)
        if self.bias.dtype not in _FLOAT_DTYPES:
            self.bias = self.bias.astype(np.float32)
        if self.weights.ndim != 4 or self.weights.shape[2] != self.weights.shape[3]:
            raise DimensionError(f"weights must be (out, in, k, k), got {self.weights.shape}")
        if self.kernel_size % 2 == 0:
            raise DimensionError(f"kernel size must be odd, got {self.kernel_size}")
        if self.bias.shape != (self.out_channels,):
            raise DimensionError(
                f"bias shape {self.bias.shape} does not match {self.out_channels} filters"
            )

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> int:
        return self.weights.shape[2]

    @property
    def padding(self) -> int:
        return (self.kernel_size - 1) // 2

    def astype(self, dtype) -> "ConvLayer":
        return ConvLayer(self.weights.astype(dtype), self.bias.astype(dtype))


def _im2col(x: np.ndarray, k: int) -> np.ndarray:
    """Zero-pad x by (k-1)/2 and unfold kxk windows into (b*h*w, c*k*k) rows."""
    b, c, h, w = x.shape
    p = (k - 1) // 2
    if p:
        x = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (b, c, h, w, k, k)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b * h * w, c * k * k)


def _conv_same(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None) -> np.ndarray:
    b, _, h, w = x.shape
    co, ci, k, _ = weights.shape
    if k == 1:
        # 1x1 kernels are a plain channel mix, no unfolding needed
        y = np.tensordot(weights[:, :, 0, 0], x, axes=([1], [1]))  # (co, b, h, w)
        y = np.ascontiguousarray(y.transpose(1, 0, 2, 3))
    else:
        cols = _im2col(x, k)
        y = cols @ weights.reshape(co, ci * k * k).T.astype(x.dtype, copy=False)
        y = np.ascontiguousarray(y.reshape(b, h, w, co).transpose(0, 3, 1, 2))
    if bias is not None:
        y += bias.reshape(1, co, 1, 1).astype(x.dtype, copy=False)
    return y


def conv2d_forward(x: Tensor4, layer: ConvLayer) -> Tensor4:
    """Same-padded stride-1 convolution; output spatial dims equal input's."""
    if x.dims[1] != layer.in_channels:
        raise DimensionError(
            f"input has {x.dims[1]} channels (shape {x.dims}) but layer expects "
            f"{layer.in_channels} (weights {layer.weights.shape})"
        )
    return Tensor4(_conv_same(x.values, layer.weights, layer.bias))


def conv2d_backward(
    grad_out: Tensor4, saved_input: Tensor4, layer: ConvLayer
) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Gradients of the convolution wrt input, weights and bias."""
    b, ci, h, w = saved_input.dims
    expected = (b, layer.out_channels, h, w)
    if grad_out.dims != expected:
        raise DimensionError(f"grad_out shape {grad_out.dims} != forward output {expected}")
    g = grad_out.values
    co, _, k, _ = layer.weights.shape

    grad_bias = g.sum(axis=(0, 2, 3))

    # dL/dW: correlate the saved input with the output gradient
    if k == 1:
        gflat = g.transpose(1, 0, 2, 3).reshape(co, -1)
        xflat = saved_input.values.transpose(1, 0, 2, 3).reshape(ci, -1)
        grad_w = (gflat @ xflat.T).reshape(co, ci, 1, 1)
    else:
        cols = _im2col(saved_input.values, k)
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, co)
        grad_w = (gmat.T @ cols).reshape(co, ci, k, k)

    # dL/dX: same-padded convolution of the gradient with the
    # channel-transposed, spatially flipped kernels
    w_t = np.ascontiguousarray(layer.weights.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    grad_in = _conv_same(g, w_t, None)
    return Tensor4(grad_in), grad_w, grad_bias


def maxpool2x2_forward(x: Tensor4) -> tuple[Tensor4, np.ndarray]:
    """2x2 max pooling, stride 2. Ties pick the first window index in scan order."""
    b, c, h, w = x.dims
    if h % 2 or w % 2:
        raise DimensionError(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    win = x.values.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(b, c, h // 2, w // 2, 4)
    argmax = win.argmax(axis=-1).astype(np.uint8)  # first max wins
    out = np.take_along_axis(win, argmax[..., None].astype(np.intp), axis=-1)[..., 0]
    return Tensor4(np.ascontiguousarray(out)), argmax


def maxpool2x2_backward(grad_out: Tensor4, argmax: np.ndarray) -> Tensor4:
    """Route each output gradient to the recorded argmax position."""
    b, c, h2, w2 = grad_out.dims
    if argmax.shape != (b, c, h2, w2):
        raise DimensionError(f"argmax shape {argmax.shape} != grad shape {grad_out.dims}")
    win = np.zeros((b, c, h2, w2, 4), dtype=grad_out.values.dtype)
    np.put_along_axis(win, argmax[..., None].astype(np.intp), grad_out.values[..., None], axis=-1)
    gx = win.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)
    return Tensor4(np.ascontiguousarray(gx))


ACTIVATION_KINDS = ("relu", "leaky_relu", "elu")


def _check_activation(kind: str, slope: float, alpha: float):
    if kind not in ACTIVATION_KINDS:
        raise ValueError(f"unknown activation {kind!r}, expected one of {ACTIVATION_KINDS}")
    if kind == "leaky_relu" and slope <= 0:
        raise ValueError(f"leaky_relu slope must be positive, got {slope}")
    if kind == "elu" and alpha <= 0:
        raise ValueError(f"elu alpha must be positive, got {alpha}")


def activation_forward(x: Tensor4, kind: str, slope: float = 0.01, alpha: float = 1.0) -> Tensor4:
    _check_activation(kind, slope, alpha)
    v = x.values
    if kind == "relu":
        out = np.maximum(v, 0)
    elif kind == "leaky_relu":
        out = np.where(v > 0, v, slope * v)
    else:
        out = np.where(v > 0, v, alpha * np.expm1(np.minimum(v, 0)))
    return Tensor4(out.astype(v.dtype, copy=False))


def activation_backward(
    grad_out: Tensor4, saved_input: Tensor4, kind: str, slope: float = 0.01, alpha: float = 1.0
) -> Tensor4:
    _check_activation(kind, slope, alpha)
    if grad_out.dims != saved_input.dims:
        raise DimensionError(f"grad shape {grad_out.dims} != input shape {saved_input.dims}")
    v = saved_input.values
    if kind == "relu":
        d = (v > 0).astype(v.dtype)
    elif kind == "leaky_relu":
        d = np.where(v > 0, v.dtype.type(1), v.dtype.type(slope))
    else:
        d = np.where(v > 0, v.dtype.type(1), alpha * np.exp(np.minimum(v, 0)))
    return Tensor4((grad_out.values * d).astype(v.dtype, copy=False))


def _dropout_mask(shape, rate: float, seed: int, dtype) -> np.ndarray:
    rng = np.random.default_rng(seed)
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / dtype.type(1.0 - rate)


def dropout(x: Tensor4, rate: float, seed: int, training: bool) -> Tensor4:
    """Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).

    Inference (training=False) is the identity. The mask is a pure function
    of the seed, so the matching backward regenerates it from the same seed.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return Tensor4(x.values)
    return Tensor4(x.values * _dropout_mask(x.dims, rate, seed, x.values.dtype))


def dropout_backward(grad_out: Tensor4, rate: float, seed: int, training: bool) -> Tensor4:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return Tensor4(grad_out.values)
    return Tensor4(grad_out.values * _dropout_mask(grad_out.dims, rate, seed, grad_out.values.dtype))


def mse_loss(pred: Tensor4, target: Tensor4) -> tuple[float, Tensor4]:
    """Mean of elementwise squared differences and its gradient wrt pred."""
    if pred.dims != target.dims:
        raise DimensionError(f"pred shape {pred.dims} != target shape {target.dims}")
    diff = pred.values - target.values
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = diff * (2.0 / diff.size)
    return loss, Tensor4(grad)


@dataclass
class AdamState:
    """First/second moment accumulators for one flat parameter vector."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0

    def __post_init__(self):
        if not 0.0 < self.beta1 < 1.0 or not 0.0 < self.beta2 < 1.0:
            raise ValueError(f"betas must lie in (0, 1), got {self.beta1}, {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.m.shape != self.v.shape:
            raise DimensionError(f"moment shapes differ: {self.m.shape} vs {self.v.shape}")

    @classmethod
    def fresh(cls, n_params: int, lr: float, **kwargs) -> "AdamState":
        return cls(lr=lr, m=np.zeros(n_params, dtype=np.float32),
                   v=np.zeros(n_params, dtype=np.float32), **kwargs)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update. Returns new params and state."""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError(
            f"length mismatch: params {params.shape}, grads {grads.shape}, moments {state.m.shape}"
        )
    t = state.step + 1
    m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - state.lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params.astype(params.dtype, copy=False), replace(state, m=m, v=v, step=t)


def xavier_init(layer: ConvLayer, seed: int) -> ConvLayer:
    """Uniform Xavier weights in +-sqrt(6/(fan_in+fan_out)), zero bias."""
    co, ci, k, _ = layer.weights.shape
    fan_in = ci * k * k
    fan_out = co * k * k
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-bound, bound, size=(co, ci, k, k)).astype(np.float32)
    return ConvLayer(weights, np.zeros(co, dtype=np.float32))
