"""Central finite-difference checks for every hand-derived gradient.

Each suite returns ``{group: relative_error}`` where the error of a group is
``||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-10)``.
``inject`` names a group whose analytic gradient is deliberately corrupted,
which lets callers confirm that a broken gradient is caught.
"""

import numpy as np

from . import features as fx
from .losses import LossWeights, mdn_nll, mdn_output_width, pose_loss
from .model import Model, ModelConfig
from .numerics import make_rng

STEP = 1e-5
TOLERANCE = 1e-4


def relative_error(analytic, numeric):
    a, n = np.ravel(analytic), np.ravel(numeric)
    return float(np.linalg.norm(a - n) / max(np.linalg.norm(a), np.linalg.norm(n), 1e-10))


def numeric_grad(f, x, step=STEP):
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x``, perturbed in place."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for k in range(flat.size):
        old = flat[k]
        flat[k] = old + step
        fp = f()
        flat[k] = old - step
        fm = f()
        flat[k] = old
        gflat[k] = (fp - fm) / (2.0 * step)
    return g


def _compare(analytic, numeric, prefix, inject):
    errors = {}
    for name, a in analytic.items():
        group = f"{prefix}{name}"
        if group == inject:
            a = a * 1.01 + 1e-3
        errors[group] = relative_error(a, numeric[name])
    return errors


def check_network(seed, hidden=8, dim=6, steps=7, bidirectional=True, inject=None):
    """All recurrent-model parameter groups plus the input features, under a random linear loss."""
    rng = make_rng(seed)
    model = Model.init(ModelConfig(dim, hidden, bidirectional=bidirectional), rng)
    x = rng.uniform(-2.0, 2.0, size=(steps, dim))
    proj = rng.normal(size=(steps, 7))

    def objective():
        return float(np.sum(model.forward(x)[0] * proj))

    _, cache = model.forward(x)
    grads, gx = model.backward(cache, proj, return_input_grad=True)
    numeric = {name: numeric_grad(objective, p) for name, p in model.params.items()}
    grads["features"], numeric["features"] = gx, numeric_grad(objective, x)
    prefix = "" if bidirectional else "uni."
    return _compare(grads, numeric, prefix, inject)


def check_conv(seed, inject=None):
    """Conv stack kernels, biases and input on a two-layer stack with pooling."""
    rng = make_rng(seed)
    config = fx.ConvStackConfig((2, 9, 9), (fx.ConvLayerSpec(3, 3, 1, True), fx.ConvLayerSpec(2, 4, 1, False)))
    params = fx.init_conv_params(config, rng)
    params.biases = [rng.uniform(-0.1, 0.1, size=b.shape) for b in params.biases]
    clip = rng.uniform(-2.0, 2.0, size=(3,) + config.input_shape)
    proj = rng.normal(size=(3, config.feature_dim))

    def objective():
        return float(np.sum(fx.conv_forward(config, params, clip)[0] * proj))

    _, cache = fx.conv_forward(config, params, clip)
    g, gclip = fx.conv_backward(cache, proj)
    analytic, numeric = {}, {}
    for n in range(len(config.layers)):
        analytic[f"{n}.kernel"] = g.kernels[n]
        numeric[f"{n}.kernel"] = numeric_grad(objective, params.kernels[n])
        analytic[f"{n}.bias"] = g.biases[n]
        numeric[f"{n}.bias"] = numeric_grad(objective, params.biases[n])
    analytic["input"], numeric["input"] = gclip, numeric_grad(objective, clip)
    return _compare(analytic, numeric, "conv.", inject)


def check_pose_loss(seed, steps=7, inject=None):
    rng = make_rng(seed)
    pred = rng.uniform(-2.0, 2.0, size=(steps, 7))
    gt = rng.uniform(-2.0, 2.0, size=(steps, 7))
    gt[:, 3:] /= np.linalg.norm(gt[:, 3:], axis=1, keepdims=True)
    w = LossWeights(rng.uniform(0.5, 2.0), rng.uniform(0.5, 20.0))
    _, g = pose_loss(pred, gt, w)
    num = numeric_grad(lambda: pose_loss(pred, gt, w)[0], pred)
    return _compare({"pred": g}, {"pred": num}, "pose_loss.", inject)


def check_mdn(seed, components=3, steps=7, inject=None):
    rng = make_rng(seed)
    m = components
    raw = rng.uniform(-1.0, 1.0, size=(steps, mdn_output_width(m)))
    gt = rng.uniform(-1.0, 1.0, size=(steps, 7))
    _, g = mdn_nll(raw, gt, m)
    num = numeric_grad(lambda: mdn_nll(raw, gt, m)[0], raw)
    blocks = {"logits": slice(0, m), "means": slice(m, 8 * m), "log_sigmas": slice(8 * m, 9 * m)}
    return _compare({k: g[:, s] for k, s in blocks.items()},
                    {k: num[:, s] for k, s in blocks.items()}, "mdn.", inject)


def run_all(seeds=(0, 1, 2), hidden=8, dim=6, steps=7, components=3, inject=None):
    """Worst relative error per group across ``seeds``."""
    worst = {}
    for seed in seeds:
        suites = [
            check_network(seed, hidden, dim, steps, True, inject),
            check_network(seed, hidden, dim, steps, False, inject),
            check_conv(seed, inject),
            check_pose_loss(seed, steps, inject),
            check_mdn(seed, components, steps, inject),
        ]
        for errors in suites:
            for group, err in errors.items():
                worst[group] = max(worst.get(group, 0.0), err)
    return worst
