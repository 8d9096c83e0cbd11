"""LSTM cell, bidirectional wrapper, linear output head and full BPTT.

Cell equations, per time step::

    f = sigmoid(W_f x + U_f h_prev + b_f)
    i = sigmoid(W_i x + U_i h_prev + b_i)
    o = sigmoid(W_o x + U_o h_prev + b_o)
    c = f * c_prev + i * tanh(W_c x + U_c h_prev + b_c)
    h = o * tanh(c)

The bidirectional state fed to the head is ``[h_backward, h_forward]``.

Sequence functions accept a single clip ``(T, D)`` or a batch ``(B, T, D)``;
internally everything runs time-major as ``(T, B, D)``.
"""

from dataclasses import dataclass, fields

import numpy as np

from .numerics import init_uniform, sigmoid, tanh

GATES = ("f", "i", "o", "c")


@dataclass
class LstmParams:
    W_f: np.ndarray
    W_i: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_f: np.ndarray
    U_i: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_f: np.ndarray
    b_i: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    @property
    def hidden_size(self):
        return self.U_f.shape[0]

    @property
    def input_size(self):
        return self.W_f.shape[1]

    def validate(self):
        h, d = self.hidden_size, self.input_size
        for g in GATES:
            for name, shape in ((f"W_{g}", (h, d)), (f"U_{g}", (h, h)), (f"b_{g}", (h,))):
                if getattr(self, name).shape != shape:
                    raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    def stacked(self):
        w = np.concatenate([getattr(self, f"W_{g}") for g in GATES])
        u = np.concatenate([getattr(self, f"U_{g}") for g in GATES])
        b = np.concatenate([getattr(self, f"b_{g}") for g in GATES])
        return w, u, b

    @classmethod
    def from_stacked(cls, w, u, b):
        h = u.shape[1]
        kw = {}
        for k, g in enumerate(GATES):
            sl = slice(k * h, (k + 1) * h)
            kw[f"W_{g}"], kw[f"U_{g}"], kw[f"b_{g}"] = w[sl], u[sl], b[sl]
        return cls(**kw)

    @classmethod
    def zeros(cls, input_size, hidden_size):
        return cls.from_stacked(np.zeros((4 * hidden_size, input_size)),
                                np.zeros((4 * hidden_size, hidden_size)),
                                np.zeros(4 * hidden_size))

    @classmethod
    def init(cls, input_size, hidden_size, rng, forget_bias=1.0):
        kw = {}
        for g in GATES:
            kw[f"W_{g}"] = init_uniform((hidden_size, input_size), rng, input_size, hidden_size)
            kw[f"U_{g}"] = init_uniform((hidden_size, hidden_size), rng, hidden_size, hidden_size)
            kw[f"b_{g}"] = np.full(hidden_size, forget_bias if g == "f" else 0.0)
        return cls(**kw)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


@dataclass
class LstmState:
    h: np.ndarray
    c: np.ndarray

    @classmethod
    def zeros(cls, hidden_size, batch=None):
        shape = (hidden_size,) if batch is None else (batch, hidden_size)
        return cls(np.zeros(shape), np.zeros(shape))


@dataclass
class OutputHead:
    W_y: np.ndarray
    b_y: np.ndarray

    @classmethod
    def zeros(cls, in_width, out_width=7):
        return cls(np.zeros((out_width, in_width)), np.zeros(out_width))

    @classmethod
    def init(cls, in_width, rng, out_width=7):
        return cls(init_uniform((out_width, in_width), rng, in_width, out_width), np.zeros(out_width))

    def items(self):
        return [("W_y", self.W_y), ("b_y", self.b_y)]


def lstm_step(params, x_t, prev):
    """One cell update. Returns ``(state, cache)``; works on (D,) or (B, D) inputs."""
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape[-1] != params.input_size:
        raise ValueError(f"input width {x_t.shape[-1]} does not match W of shape {params.W_f.shape}")
    if prev.h.shape[-1] != params.hidden_size:
        raise ValueError(f"state width {prev.h.shape[-1]} does not match hidden size {params.hidden_size}")
    w, u, b = params.stacked()
    return _step(w, u, b, x_t @ w.T + b, prev.h, prev.c)


def _step(w, u, b, wx, h_prev, c_prev):
    hs = u.shape[1]
    z = wx + h_prev @ u.T
    gates = sigmoid(z[..., :3 * hs])
    f, i, o = gates[..., :hs], gates[..., hs:2 * hs], gates[..., 2 * hs:]
    g = tanh(z[..., 3 * hs:])
    c = f * c_prev + i * g
    tc = tanh(c)
    h = o * tc
    cache = {"f": f, "i": i, "o": o, "g": g, "tc": tc, "h_prev": h_prev, "c_prev": c_prev}
    return LstmState(h, c), cache


def lstm_step_backward(params, cache, dh, dc_next):
    """Backward through one cell. Returns ``(dz, dh_prev, dc_prev)``.

    ``dz`` is the gradient w.r.t. the stacked gate pre-activations, ordered
    f, i, o, c along the last axis.
    """
    _, u, _ = params.stacked()
    return _backward_core(cache, dh, dc_next, u)


def _run(params, xs, reverse):
    """Run one direction over time-major ``xs`` (T, B, D) from a zero state."""
    params.validate()
    if xs.shape[-1] != params.input_size:
        raise ValueError(f"feature width {xs.shape[-1]} does not match input size {params.input_size}")
    w, u, b = params.stacked()
    t_len, batch = xs.shape[:2]
    wx = xs @ w.T + b
    state = LstmState.zeros(params.hidden_size, batch)
    hs = np.empty((t_len, batch, params.hidden_size))
    caches = [None] * t_len
    order = range(t_len - 1, -1, -1) if reverse else range(t_len)
    for t in order:
        state, caches[t] = _step(w, u, b, wx[t], state.h, state.c)
        hs[t] = state.h
    return hs, {"params": params, "xs": xs, "steps": caches, "reverse": reverse}


def _run_backward(cache, dhs):
    params, xs, steps = cache["params"], cache["xs"], cache["steps"]
    t_len, batch = xs.shape[:2]
    hsz = params.hidden_size
    w, u, _ = params.stacked()
    dz_all = np.empty((t_len, batch, 4 * hsz))
    du = np.zeros_like(u)
    dh_next = np.zeros((batch, hsz))
    dc_next = np.zeros((batch, hsz))
    order = range(t_len) if cache["reverse"] else range(t_len - 1, -1, -1)
    for t in order:
        st = steps[t]
        dz, dh_next, dc_next = _backward_core(st, dhs[t] + dh_next, dc_next, u)
        du += dz.T @ st["h_prev"]
        dz_all[t] = dz
    flat_dz = dz_all.reshape(-1, 4 * hsz)
    dw = flat_dz.T @ xs.reshape(-1, xs.shape[-1])
    db = flat_dz.sum(axis=0)
    dxs = dz_all @ w
    return LstmParams.from_stacked(dw, du, db), dxs


def _backward_core(st, dh, dc_next, u):
    f, i, o, g, tc = st["f"], st["i"], st["o"], st["g"], st["tc"]
    dc = dh * o * (1.0 - tc * tc) + dc_next
    dz = np.concatenate([
        dc * st["c_prev"] * f * (1.0 - f),
        dc * g * i * (1.0 - i),
        dh * tc * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ], axis=-1)
    return dz, dz @ u, dc * f


def _time_major(features):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim == 2:
        batched = False
        x = x[:, None, :]
    elif x.ndim == 3:
        batched = True
        x = x.transpose(1, 0, 2)
    else:
        raise ValueError(f"features must be (T, D) or (B, T, D), got shape {x.shape}")
    if x.shape[0] < 1:
        raise ValueError("empty sequence: at least one frame is required")
    return x, batched


def _batch_major(y, batched):
    return y.transpose(1, 0, 2) if batched else y[:, 0, :]


def _head(head, hcat):
    if hcat.shape[-1] != head.W_y.shape[1]:
        raise ValueError(f"head expects width {head.W_y.shape[1]}, got {hcat.shape[-1]}")
    return hcat @ head.W_y.T + head.b_y


def bilstm_forward(fwd_params, bwd_params, head, features):
    """Bidirectional pass plus linear head. Returns ``(outputs, cache)``."""
    xs, batched = _time_major(features)
    h_fwd, c_fwd = _run(fwd_params, xs, reverse=False)
    h_bwd, c_bwd = _run(bwd_params, xs, reverse=True)
    hcat = np.concatenate([h_bwd, h_fwd], axis=-1)
    y = _head(head, hcat)
    cache = {"fwd": c_fwd, "bwd": c_bwd, "hcat": hcat, "head": head,
             "batched": batched, "h_fwd": h_fwd, "h_bwd": h_bwd}
    return _batch_major(y, batched), cache


def _head_backward(cache, grad_outputs):
    dy, _ = _time_major(grad_outputs)
    head, hcat = cache["head"], cache["hcat"]
    flat_dy = dy.reshape(-1, dy.shape[-1])
    grad_head = OutputHead(flat_dy.T @ hcat.reshape(-1, hcat.shape[-1]), flat_dy.sum(axis=0))
    return grad_head, dy @ head.W_y


def bilstm_backward(cache, grad_outputs):
    """Returns ``(grad_fwd_params, grad_bwd_params, grad_head, grad_features)``."""
    grad_head, dhcat = _head_backward(cache, grad_outputs)
    hsz = cache["bwd"]["params"].hidden_size
    g_bwd, dx_bwd = _run_backward(cache["bwd"], dhcat[..., :hsz])
    g_fwd, dx_fwd = _run_backward(cache["fwd"], dhcat[..., hsz:])
    return g_fwd, g_bwd, grad_head, _batch_major(dx_fwd + dx_bwd, cache["batched"])


def unidirectional_forward(params, head, features):
    """Forward-only (causal) pass; the head consumes width H."""
    xs, batched = _time_major(features)
    h_fwd, c_fwd = _run(params, xs, reverse=False)
    y = _head(head, h_fwd)
    cache = {"fwd": c_fwd, "hcat": h_fwd, "head": head, "batched": batched, "h_fwd": h_fwd}
    return _batch_major(y, batched), cache


def unidirectional_backward(cache, grad_outputs):
    """Returns ``(grad_params, grad_head, grad_features)``."""
    grad_head, dh = _head_backward(cache, grad_outputs)
    g, dx = _run_backward(cache["fwd"], dh)
    return g, grad_head, _batch_major(dx, cache["batched"])
