"""Adam, the clip-batched BPTT training loop, inference and checkpoints.

Checkpoint layout (all integers little-endian)::

    magic   b"SEQLOCK\\x00"
    u32     format version
    u64     length of config JSON, then the UTF-8 JSON bytes
    u32     tensor count
    per tensor:
        u16 name length, name bytes (UTF-8)
        u8  ndim, ndim x u64 dims
        float64 payload, little-endian, row-major
"""

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .features import ConvStackConfig
from .losses import LossWeights, mdn_activations, mdn_nll, mdn_point_estimate, pose_loss
from .model import Model, ModelConfig
from .numerics import make_rng
from .pose import unpack

log = logging.getLogger(__name__)

MAGIC = b"SEQLOCK\x00"
FORMAT_VERSION = 1


class TrainingDiverged(RuntimeError):
    def __init__(self, message, model):
        super().__init__(message)
        self.model = model


class CheckpointError(ValueError):
    pass


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state, params, grads):
    """One in-place bias-corrected Adam update of every array in ``params``."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {params[name].shape}")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state, params


def clip_global_norm(grads, max_norm):
    total = float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))
    if max_norm and total > max_norm:
        scale = max_norm / total
        for g in grads.values():
            g *= scale
    return total


@dataclass
class TrainConfig:
    window: int = 20
    stride: int = None
    batch_size: int = 8
    epochs: int = 100
    seed: int = 0
    alpha1: float = 1.0
    alpha2: float = 10.0
    mode: str = "point"
    components: int = 1
    hidden: int = 64
    lr: float = 1e-3
    clip_norm: float = 5.0
    bidirectional: bool = True
    conv: ConvStackConfig = None

    def __post_init__(self):
        if self.window < 1 or self.batch_size < 1 or self.epochs < 1:
            raise ValueError("window, batch_size and epochs must be positive")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be positive")
        LossWeights(self.alpha1, self.alpha2)

    @property
    def weights(self):
        return LossWeights(self.alpha1, self.alpha2)

    def model_config(self, input_dim):
        return ModelConfig(input_dim, self.hidden, self.mode, self.components, self.bidirectional, self.conv)

    def to_dict(self):
        d = asdict(self)
        d.pop("conv")
        return d


@dataclass
class TrainHistory:
    iteration_loss: list = field(default_factory=list)
    epoch_loss: list = field(default_factory=list)
    epoch_of_iteration: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,epoch,loss\n")
            for k, (e, loss) in enumerate(zip(self.epoch_of_iteration, self.iteration_loss), 1):
                fh.write(f"{k},{e},{loss:.17g}\n")


def batch_loss(model, inputs, targets, weights):
    """Mean per-clip loss of a batch and its gradient w.r.t. the parameters."""
    out, cache = model.forward(inputs)
    n = inputs.shape[0]
    if model.config.mode == "point":
        loss, g = pose_loss(out, targets, weights)
    else:
        loss, g = mdn_nll(out, targets, model.config.components)
    return loss / n, model.backward(cache, g / n)


def train(config, dataset, model=None, on_epoch=None):
    """Fit a model to every training clip of ``dataset``.

    Returns ``(model, history)``. Clips are reshuffled each epoch from the
    config seed; one Adam step is taken per batch.
    """
    train_part = dataset.split("train")
    if not train_part.sequences:
        train_part = dataset
    inputs, targets = train_part.clips(config.window, config.stride or config.window)
    if len(inputs) == 0:
        raise ValueError(f"empty dataset: no clips of length {config.window}")
    rng = make_rng(config.seed)
    if model is None:
        model = Model.init(config.model_config(inputs.shape[-1]), rng)
    elif model.config.input_dim != inputs.shape[-1]:
        raise ValueError(f"model input dim {model.config.input_dim} != dataset dim {inputs.shape[-1]}")
    opt = AdamState(lr=config.lr)
    history = TrainHistory()
    weights = config.weights
    for epoch in range(1, config.epochs + 1):
        last_good = model.copy()
        order = rng.permutation(len(inputs))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = batch_loss(model, inputs[idx], targets[idx], weights)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"loss became non-finite at epoch {epoch}", last_good)
            clip_global_norm(grads, config.clip_norm)
            adam_step(opt, model.params, grads)
            losses.append(loss)
            history.iteration_loss.append(loss)
            history.epoch_of_iteration.append(epoch)
        history.epoch_loss.append(float(np.mean(losses)))
        if on_epoch is not None:
            on_epoch(epoch, history.epoch_loss[-1])
        log.debug("epoch %d loss %.6g", epoch, history.epoch_loss[-1])
    return model, history


def predict_raw(model, clip):
    """Raw head outputs for a ``(T, F)`` clip or ``(B, T, F)`` batch; never mutates ``model``."""
    clip = np.asarray(clip, dtype=np.float64)
    if clip.shape[-1] != model.config.input_dim:
        raise ValueError(f"clip feature width {clip.shape[-1]} != checkpoint input dim {model.config.input_dim}")
    out, _ = model.forward(clip)
    return out


def raw_to_poses(model, raw):
    """Convert raw outputs (T, W) into poses (and mixtures in mdn mode)."""
    if model.config.mode == "point":
        return [unpack(y) for y in raw], None
    mixes = [mdn_activations(r, model.config.components) for r in raw]
    return [mdn_point_estimate(mx) for mx in mixes], mixes


def predict(model, clip):
    """Poses for one clip; in mdn mode returns ``(poses, mixtures)``."""
    poses, mixes = raw_to_poses(model, predict_raw(model, clip))
    return poses if mixes is None else (poses, mixes)


# --- checkpoints ----------------------------------------------------------------

def save_checkpoint(model, path, train_config=None):
    meta = {"model": model.config.to_dict()}
    if train_config is not None:
        meta["train"] = train_config.to_dict()
    blob = json.dumps(meta, sort_keys=True).encode()
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(blob)), blob,
             struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        nb = name.encode()
        parts += [struct.pack("<H", len(nb)), nb, struct.pack("<B", arr.ndim),
                  struct.pack(f"<{arr.ndim}Q", *arr.shape),
                  np.ascontiguousarray(arr, dtype="<f8").tobytes()]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("truncated checkpoint file")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path):
    """Returns ``(model, meta)`` where ``meta`` is the stored config block."""
    r = _Reader(Path(path).read_bytes())
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    (n,) = r.unpack("<Q")
    try:
        meta = json.loads(r.take(n).decode())
        config = ModelConfig.from_dict(meta["model"])
    except (ValueError, KeyError, TypeError) as e:
        raise CheckpointError(f"{path}: corrupt config block ({e})") from None
    (count,) = r.unpack("<I")
    params = {}
    for _ in range(count):
        (ln,) = r.unpack("<H")
        name = r.take(ln).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}Q") if ndim else ()
        size = int(np.prod(shape)) if shape else 1
        params[name] = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
    if r.pos != len(r.data):
        raise CheckpointError(f"{path}: {len(r.data) - r.pos} trailing bytes")
    try:
        model = Model(config, params)
    except ValueError as e:
        raise CheckpointError(f"{path}: {e}") from None
    return model, meta
