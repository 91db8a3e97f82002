"""Small fully-connected networks with exact reverse-mode gradients.

Parameters of a network live in one flat float64 vector; per-layer weights
and biases are views into it. Gradients use the same layout, which makes
Adam and Polyak averaging single vector operations and keeps checkpoints a
plain dump of named vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = 1


class StaleCacheError(RuntimeError):
    """Backward was called with a cache from an older parameter version."""


class MlpNet:
    """ReLU MLP with an identity or scaled-tanh output layer.

    ``weights[i]`` has shape ``(layer_sizes[i], layer_sizes[i + 1])`` so a
    batch ``x`` of shape ``(N, in)`` maps to ``x @ W + b``.
    """

    def __init__(self, layer_sizes, output="identity", output_scale=1.0, rng=None,
                 final_layer_scale=None):
        layer_sizes = [int(n) for n in layer_sizes]
        if len(layer_sizes) < 2 or min(layer_sizes) < 1:
            raise ValueError(f"bad layer sizes {layer_sizes}")
        if output not in ("identity", "tanh"):
            raise ValueError(f"unknown output activation {output!r}")
        self.layer_sizes = layer_sizes
        self.output = output
        self.output_scale = np.asarray(output_scale, dtype=np.float64)
        n_params = sum(a * b + b for a, b in zip(layer_sizes[:-1], layer_sizes[1:]))
        self.theta = np.zeros(n_params)
        self._bind_views()
        self.version = 0
        if rng is not None:
            if final_layer_scale is None:
                final_layer_scale = 1e-2 if output == "tanh" else 1.0
            self.init_params(rng, final_layer_scale)

    def _bind_views(self):
        self.weights, self.biases = [], []
        off = 0
        for a, b in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            self.weights.append(self.theta[off:off + a * b].reshape(a, b))
            off += a * b
            self.biases.append(self.theta[off:off + b])
            off += b

    def init_params(self, rng: np.random.Generator, final_layer_scale: float = 1.0):
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases."""
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            bound = 1.0 / np.sqrt(W.shape[0])
            scale = final_layer_scale if i == last else 1.0
            W[...] = rng.uniform(-bound, bound, size=W.shape) * scale
            b[...] = rng.uniform(-bound, bound, size=b.shape) * scale
        self.version += 1

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def num_params(self) -> int:
        return self.theta.size

    def copy(self) -> "MlpNet":
        other = MlpNet.__new__(MlpNet)
        other.layer_sizes = list(self.layer_sizes)
        other.output = self.output
        other.output_scale = self.output_scale.copy()
        other.theta = self.theta.copy()
        other._bind_views()
        other.version = 0
        return other

    def set_params(self, theta):
        self.theta[...] = theta
        self.version += 1

    def __call__(self, x):
        return mlp_forward(self, x, keep_cache=False)[0]

    def __repr__(self):
        return f"MlpNet({self.layer_sizes}, output={self.output!r})"


@dataclass
class ForwardCache:
    net_id: int
    version: int
    squeeze: bool
    inputs: list  # input to every layer
    tanh_out: np.ndarray | None = None


def mlp_forward(net: MlpNet, x, keep_cache: bool = True):
    """Forward pass. Returns ``(output, cache)``; ``cache`` is None if not kept.

    A 1-D input is treated as a batch of one and the output squeezed back.
    """
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[None]
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise ValueError(f"input of shape {x.shape} does not match input size {net.in_dim}")
    inputs = [x]
    h = x
    last = len(net.weights) - 1
    for i, (W, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ W
        h += b
        if i < last:
            np.maximum(h, 0.0, out=h)
            inputs.append(h)
    tanh_out = None
    if net.output == "tanh":
        tanh_out = np.tanh(h)
        h = tanh_out * net.output_scale
    out = h[0] if squeeze else h
    cache = ForwardCache(id(net), net.version, squeeze, inputs, tanh_out) if keep_cache else None
    return out, cache


def mlp_backward(net: MlpNet, cache: ForwardCache, grad_out, param_grads: bool = True):
    """Reverse-mode pass. Returns ``(flat parameter gradient, input gradient)``.

    The parameter gradient is None when ``param_grads`` is False, which is
    how the actor update pulls ``dQ/da`` through a critic cheaply.
    """
    if cache is None or cache.net_id != id(net) or cache.version != net.version:
        raise StaleCacheError("forward cache does not belong to the current parameters")
    g = np.asarray(grad_out, dtype=np.float64)
    if cache.squeeze:
        g = g[None]
    if g.shape != (cache.inputs[0].shape[0], net.out_dim):
        raise ValueError(f"output gradient of shape {g.shape} does not match the forward batch")
    if net.output == "tanh":
        g = g * net.output_scale * (1.0 - cache.tanh_out ** 2)
    grads = np.empty_like(net.theta) if param_grads else None
    if param_grads:
        gw, gb = _views_like(net, grads)
    for i in range(len(net.weights) - 1, -1, -1):
        h_in = cache.inputs[i]
        if param_grads:
            np.matmul(h_in.T, g, out=gw[i])
            np.sum(g, axis=0, out=gb[i])
        g = g @ net.weights[i].T
        if i > 0:
            g *= h_in > 0.0
    dx = g[0] if cache.squeeze else g
    return grads, dx


def _views_like(net: MlpNet, flat):
    ws, bs = [], []
    off = 0
    for a, b in zip(net.layer_sizes[:-1], net.layer_sizes[1:]):
        ws.append(flat[off:off + a * b].reshape(a, b))
        off += a * b
        bs.append(flat[off:off + b])
        off += b
    return ws, bs


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_net(cls, net: MlpNet) -> "AdamState":
        return cls(np.zeros_like(net.theta), np.zeros_like(net.theta))


def adam_step(net: MlpNet, grads, state: AdamState, lr: float):
    """Bias-corrected Adam descent step, in place on ``net`` and ``state``."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != net.theta.shape:
        raise ValueError("gradient shape does not match the network")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * grads
    state.v *= b2
    state.v += (1.0 - b2) * grads * grads
    m_hat = state.m / (1.0 - b1 ** state.t)
    v_hat = state.v / (1.0 - b2 ** state.t)
    net.theta -= lr * m_hat / (np.sqrt(v_hat) + state.eps)
    net.version += 1
    return net, state


def polyak_update(target: MlpNet, online: MlpNet, tau: float) -> MlpNet:
    """``target <- tau * online + (1 - tau) * target`` elementwise."""
    if target.layer_sizes != online.layer_sizes:
        raise ValueError(f"shape mismatch: {target.layer_sizes} vs {online.layer_sizes}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must lie in [0, 1], got {tau}")
    target.theta[...] = tau * online.theta + (1.0 - tau) * target.theta
    target.version += 1
    return target


# ---------------------------------------------------------------------------
# gradient verification


@dataclass
class GradCheckReport:
    param_error: float
    input_error: float
    num_params: int
    worst_param_index: int = -1
    details: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.param_error, self.input_error)


def _rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    denom = np.maximum(np.abs(a) + np.abs(b), 1e-8)
    return np.abs(a - b) / denom


def finite_diff_check(net: MlpNet, x, h: float = 1e-5, rng=None) -> GradCheckReport:
    """Compare :func:`mlp_backward` with central differences.

    The output is scalarized as ``sum(c * f(x))`` with fixed random weights
    ``c``; both parameter and input gradients are checked. Relative error is
    ``|a - n| / max(|a| + |n|, 1e-8)``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    rng = np.random.default_rng(12345) if rng is None else rng
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    out, cache = mlp_forward(net, x)
    c = rng.standard_normal(out.shape)

    def scalar(theta=None, inp=None):
        saved = net.theta.copy()
        if theta is not None:
            net.theta[...] = theta
        y = mlp_forward(net, x if inp is None else inp, keep_cache=False)[0]
        net.theta[...] = saved
        return float(np.sum(c * y))

    g_param, g_input = mlp_backward(net, cache, c)

    num_param = np.empty_like(net.theta)
    theta0 = net.theta.copy()
    for i in range(theta0.size):
        tp = theta0.copy()
        tp[i] += h
        tm = theta0.copy()
        tm[i] -= h
        num_param[i] = (scalar(theta=tp) - scalar(theta=tm)) / (2 * h)

    num_input = np.empty_like(x)
    for idx in np.ndindex(*x.shape):
        xp = x.copy()
        xp[idx] += h
        xm = x.copy()
        xm[idx] -= h
        num_input[idx] = (scalar(inp=xp) - scalar(inp=xm)) / (2 * h)

    perr = _rel_err(g_param, num_param)
    ierr = _rel_err(g_input, num_input)
    return GradCheckReport(float(perr.max()), float(ierr.max()), theta0.size, int(perr.argmax()))


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path, nets: dict, adam: dict | None = None, meta: dict | None = None):
    """Write named networks (and optional Adam states) to an ``.npz`` file.

    Layout, version 1: ``format_version``; for each net ``<name>/theta``,
    ``<name>/layer_sizes``, ``<name>/output``, ``<name>/output_scale``; for
    each Adam state ``adam/<name>/m``, ``adam/<name>/v``, ``adam/<name>/t``;
    string metadata under ``meta/<key>``.
    """
    arrays = {"format_version": np.array(CHECKPOINT_VERSION)}
    for name, net in nets.items():
        arrays[f"{name}/theta"] = net.theta
        arrays[f"{name}/layer_sizes"] = np.array(net.layer_sizes)
        arrays[f"{name}/output"] = np.array(net.output)
        arrays[f"{name}/output_scale"] = net.output_scale
    for name, st in (adam or {}).items():
        arrays[f"adam/{name}/m"] = st.m
        arrays[f"adam/{name}/v"] = st.v
        arrays[f"adam/{name}/t"] = np.array(st.t)
    for key, val in (meta or {}).items():
        arrays[f"meta/{key}"] = np.array(str(val))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return Path(path)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(nets, adam, meta)``."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        keys = list(z.keys())
        nets, adam, meta = {}, {}, {}
        for key in keys:
            if key.startswith("meta/"):
                meta[key[5:]] = str(z[key])
            elif key.startswith("adam/") and key.endswith("/m"):
                name = key[5:-2]
                adam[name] = AdamState(z[key].copy(), z[f"adam/{name}/v"].copy(), int(z[f"adam/{name}/t"]))
            elif key.endswith("/theta") and not key.startswith("adam/"):
                name = key[:-6]
                net = MlpNet(z[f"{name}/layer_sizes"].tolist(), output=str(z[f"{name}/output"]),
                             output_scale=z[f"{name}/output_scale"])
                net.set_params(z[key])
                nets[name] = net
    return nets, adam, meta
