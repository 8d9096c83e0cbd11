"""The full network: feature extractor -> (bi)LSTM -> linear head.

Parameters live in one flat ``dict`` of named arrays, which is what the
optimizer and the checkpoint format operate on. Inputs are always flat
per-frame vectors; with a conv extractor they are reshaped to (C, H, W).
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import features as fx
from . import recurrent as rc
from .losses import mdn_output_width
from .numerics import make_rng

MODES = ("point", "mdn")


@dataclass(frozen=True)
class ModelConfig:
    input_dim: int
    hidden: int = 64
    mode: str = "point"
    components: int = 1
    bidirectional: bool = True
    conv: fx.ConvStackConfig = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.hidden < 1 or self.components < 1 or self.input_dim < 1:
            raise ValueError("input_dim, hidden and components must be positive")
        if self.conv is not None and int(np.prod(self.conv.input_shape)) != self.input_dim:
            raise ValueError(f"input_dim {self.input_dim} does not match conv input shape {self.conv.input_shape}")

    @property
    def feature_dim(self):
        return self.conv.feature_dim if self.conv is not None else self.input_dim

    @property
    def output_width(self):
        return 7 if self.mode == "point" else mdn_output_width(self.components)

    @property
    def head_width(self):
        return (2 if self.bidirectional else 1) * self.hidden

    def to_dict(self):
        d = asdict(self)
        if self.conv is not None:
            d["conv"] = {"input_shape": list(self.conv.input_shape),
                         "layers": [asdict(layer) for layer in self.conv.layers],
                         "feature_dim": self.conv.feature_dim}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        conv = d.pop("conv", None)
        if conv is not None:
            conv = fx.ConvStackConfig(tuple(conv["input_shape"]),
                                      tuple(fx.ConvLayerSpec(**layer) for layer in conv["layers"]),
                                      conv.get("feature_dim"))
        return cls(conv=conv, **d)


def _lstm_names(prefix):
    return [f"{prefix}.{name}" for name in rc.LstmParams.__dataclass_fields__]


class Model:
    def __init__(self, config, params):
        self.config = config
        self.params = params
        self._check()

    def _check(self):
        expected = self.param_shapes(self.config)
        if list(expected) != list(self.params):
            missing = sorted(set(expected) - set(self.params))
            extra = sorted(set(self.params) - set(expected))
            raise ValueError(f"parameter names mismatch (missing {missing}, unexpected {extra})")
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ValueError(f"parameter {name} has shape {self.params[name].shape}, expected {shape}")

    @staticmethod
    def param_shapes(config):
        shapes = {}
        if config.conv is not None:
            c = config.conv.input_shape[0]
            for n, layer in enumerate(config.conv.layers):
                shapes[f"conv.{n}.kernel"] = (layer.out_channels, c, layer.kernel, layer.kernel)
                shapes[f"conv.{n}.bias"] = (layer.out_channels,)
                c = layer.out_channels
        d, h = config.feature_dim, config.hidden
        for prefix in ("fwd", "bwd") if config.bidirectional else ("fwd",):
            for name in _lstm_names(prefix):
                kind = name.split(".")[1][0]
                shapes[name] = {"W": (h, d), "U": (h, h), "b": (h,)}[kind]
        shapes["head.W_y"] = (config.output_width, config.head_width)
        shapes["head.b_y"] = (config.output_width,)
        return shapes

    @classmethod
    def init(cls, config, rng=None, seed=0):
        rng = make_rng(seed) if rng is None else rng
        params = {}
        if config.conv is not None:
            conv = fx.init_conv_params(config.conv, rng)
            for n, (k, b) in enumerate(zip(conv.kernels, conv.biases)):
                params[f"conv.{n}.kernel"] = k
                params[f"conv.{n}.bias"] = b
        for prefix in ("fwd", "bwd") if config.bidirectional else ("fwd",):
            lstm = rc.LstmParams.init(config.feature_dim, config.hidden, rng)
            for name, value in lstm.items():
                params[f"{prefix}.{name}"] = value
        head = rc.OutputHead.init(config.head_width, rng, config.output_width)
        params["head.W_y"], params["head.b_y"] = head.W_y, head.b_y
        return cls(config, params)

    @classmethod
    def zeros(cls, config):
        return cls(config, {k: np.zeros(s) for k, s in cls.param_shapes(config).items()})

    def copy(self):
        return Model(self.config, {k: v.copy() for k, v in self.params.items()})

    def lstm(self, prefix):
        return rc.LstmParams(**{name.split(".")[1]: self.params[name] for name in _lstm_names(prefix)})

    def head(self):
        return rc.OutputHead(self.params["head.W_y"], self.params["head.b_y"])

    def conv_params(self):
        n = len(self.config.conv.layers)
        return fx.ConvStackParams([self.params[f"conv.{i}.kernel"] for i in range(n)],
                                  [self.params[f"conv.{i}.bias"] for i in range(n)])

    def forward(self, inputs):
        """Raw network outputs for ``(T, F)`` or ``(B, T, F)`` inputs."""
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim not in (2, 3) or inputs.shape[-1] != self.config.input_dim:
            raise ValueError(f"inputs of shape {inputs.shape} do not match input dim {self.config.input_dim}")
        cache = {}
        if self.config.conv is not None:
            frames = inputs.reshape(inputs.shape[:-1] + self.config.conv.input_shape)
            feats, cache["conv"] = fx.conv_forward(self.config.conv, self.conv_params(), frames)
        else:
            feats = fx.passthrough(inputs)
        if self.config.bidirectional:
            out, cache["rnn"] = rc.bilstm_forward(self.lstm("fwd"), self.lstm("bwd"), self.head(), feats)
        else:
            out, cache["rnn"] = rc.unidirectional_forward(self.lstm("fwd"), self.head(), feats)
        return out, cache

    def backward(self, cache, grad_outputs, return_input_grad=False):
        """Gradients for every parameter, keyed like ``self.params``.

        With ``return_input_grad`` also returns the gradient w.r.t. the inputs.
        """
        grads = {}
        if self.config.bidirectional:
            g_fwd, g_bwd, g_head, g_feats = rc.bilstm_backward(cache["rnn"], grad_outputs)
            parts = (("fwd", g_fwd), ("bwd", g_bwd))
        else:
            g_fwd, g_head, g_feats = rc.unidirectional_backward(cache["rnn"], grad_outputs)
            parts = (("fwd", g_fwd),)
        g_inputs = g_feats
        if self.config.conv is not None:
            g_conv, g_frames = fx.conv_backward(cache["conv"], g_feats)
            g_inputs = g_frames.reshape(g_frames.shape[:-3] + (-1,))
            for n, (k, b) in enumerate(zip(g_conv.kernels, g_conv.biases)):
                grads[f"conv.{n}.kernel"] = k
                grads[f"conv.{n}.bias"] = b
        for prefix, g in parts:
            for name, value in g.items():
                grads[f"{prefix}.{name}"] = value
        grads["head.W_y"], grads["head.b_y"] = g_head.W_y, g_head.b_y
        grads = {k: grads[k] for k in self.params}
        return (grads, g_inputs) if return_input_grad else grads
