"""Per-frame feature extraction: a small conv/ReLU/max-pool stack or a passthrough.

Convolutions are "valid" (no padding). Layout is NCHW; a clip of ``T`` frames
is ``(T, C, H, W)`` and a batch of clips ``(B, T, C, H, W)``.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .numerics import init_uniform, relu


@dataclass(frozen=True)
class ConvLayerSpec:
    kernel: int
    out_channels: int
    stride: int = 1
    pool: bool = False


@dataclass(frozen=True)
class ConvStackConfig:
    input_shape: tuple
    layers: tuple = field(default_factory=tuple)
    feature_dim: int = None

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if len(self.input_shape) != 3 or min(self.input_shape) < 1:
            raise ValueError(f"input shape must be (C, H, W) with positive sizes, got {self.input_shape}")
        shapes = self.layer_shapes()
        computed = int(np.prod(shapes[-1]))
        if self.feature_dim is None:
            object.__setattr__(self, "feature_dim", computed)
        elif self.feature_dim != computed:
            raise ValueError(f"declared feature dim {self.feature_dim} != computed {computed}")

    def layer_shapes(self):
        """Output shape (C, H, W) after each layer, starting with the input."""
        c, h, w = self.input_shape
        shapes = [(c, h, w)]
        for n, layer in enumerate(self.layers):
            if layer.kernel < 1 or layer.stride < 1 or layer.out_channels < 1:
                raise ValueError(f"layer {n}: kernel, stride and channels must be positive")
            h = (h - layer.kernel) // layer.stride + 1
            w = (w - layer.kernel) // layer.stride + 1
            c = layer.out_channels
            if layer.pool:
                h, w = h // 2, w // 2
            if h < 1 or w < 1:
                raise ValueError(f"layer {n}: output spatial size {h}x{w} is not positive")
            shapes.append((c, h, w))
        return shapes

    @classmethod
    def default(cls, input_shape=(1, 32, 32)):
        layers = tuple(ConvLayerSpec(3, ch, 1, True) for ch in (8, 16, 32))
        return cls(input_shape, layers)


@dataclass
class ConvStackParams:
    kernels: list
    biases: list


def init_conv_params(config, rng):
    kernels, biases = [], []
    c = config.input_shape[0]
    for layer in config.layers:
        k = layer.kernel
        kernels.append(init_uniform((layer.out_channels, c, k, k), rng,
                                    c * k * k, layer.out_channels * k * k))
        biases.append(np.zeros(layer.out_channels))
        c = layer.out_channels
    return ConvStackParams(kernels, biases)


def conv2d(x, kernel, bias, stride):
    """Valid 2-D cross-correlation of ``x`` (N, C, H, W) with ``kernel`` (F, C, k, k)."""
    f, c, k, _ = kernel.shape
    patches = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    n, _, ho, wo = patches.shape[:4]
    cols = patches.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * k * k)
    out = cols @ kernel.reshape(f, -1).T + bias
    return out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2), cols


def conv2d_backward(dout, x_shape, cols, kernel, stride):
    f, c, k, _ = kernel.shape
    n, _, ho, wo = dout.shape
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dkernel = (d2.T @ cols).reshape(kernel.shape)
    dbias = d2.sum(axis=0)
    dcols = (d2 @ kernel.reshape(f, -1)).reshape(n, ho, wo, c, k, k)
    dx = np.zeros(x_shape)
    for i in range(k):
        for j in range(k):
            dx[:, :, i:i + stride * (ho - 1) + 1:stride, j:j + stride * (wo - 1) + 1:stride] += \
                dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return dkernel, dbias, dx


def maxpool2(x):
    n, c, h, w = x.shape
    hp, wp = h // 2, w // 2
    win = x[:, :, :2 * hp, :2 * wp].reshape(n, c, hp, 2, wp, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, hp, wp, 4)
    arg = np.argmax(win, axis=-1)
    return np.take_along_axis(win, arg[..., None], axis=-1)[..., 0], arg


def maxpool2_backward(dout, x_shape, arg):
    n, c, h, w = x_shape
    hp, wp = dout.shape[2:]
    dwin = np.zeros((n, c, hp, wp, 4))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, c, hp, wp, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * hp, 2 * wp)
    dx = np.zeros(x_shape)
    dx[:, :, :2 * hp, :2 * wp] = dwin
    return dx


def conv_forward(config, params, clip):
    """Run every frame of ``clip`` through the stack.

    Returns ``(features, cache)`` with features shaped ``clip.shape[:-3] + (D,)``.
    """
    clip = np.asarray(clip, dtype=np.float64)
    if clip.ndim < 4 or clip.shape[-3:] != config.input_shape:
        raise ValueError(f"clip shape {clip.shape} does not match input shape (..., {config.input_shape})")
    lead = clip.shape[:-3]
    x = clip.reshape((-1,) + config.input_shape)
    layers = []
    for layer, kernel, bias in zip(config.layers, params.kernels, params.biases):
        z, cols = conv2d(x, kernel, bias, layer.stride)
        a = relu(z)
        entry = {"x_shape": x.shape, "cols": cols, "a": a}
        if layer.pool:
            a_shape = a.shape
            a, arg = maxpool2(a)
            entry.update(pool_arg=arg, a_shape=a_shape)
        layers.append(entry)
        x = a
    features = x.reshape(lead + (config.feature_dim,))
    return features, {"config": config, "params": params, "layers": layers,
                      "lead": lead, "out_shape": x.shape}


def conv_backward(cache, grad_features):
    config, params = cache["config"], cache["params"]
    dx = np.asarray(grad_features, dtype=np.float64).reshape(cache["out_shape"])
    dkernels, dbiases = [None] * len(config.layers), [None] * len(config.layers)
    for n in reversed(range(len(config.layers))):
        layer, entry = config.layers[n], cache["layers"][n]
        if layer.pool:
            dx = maxpool2_backward(dx, entry["a_shape"], entry["pool_arg"])
        dz = dx * (entry["a"] > 0)
        dkernels[n], dbiases[n], dx = conv2d_backward(
            dz, entry["x_shape"], entry["cols"], params.kernels[n], layer.stride)
    grad_clip = dx.reshape(cache["lead"] + config.input_shape)
    return ConvStackParams(dkernels, dbiases), grad_clip


def passthrough(features):
    return np.asarray(features, dtype=np.float64)


def passthrough_backward(grad_features):
    return np.asarray(grad_features, dtype=np.float64)
