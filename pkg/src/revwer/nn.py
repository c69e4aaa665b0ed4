"""Minimal neural-network core: dense, 2-D convolution, average pooling,
ReLU, dropout, and LSTM layers with hand-written backward passes, an
adaptive-moment optimizer, finite-difference gradient checking, and
checkpoint serialization. No external ML framework.

All math is float64 numpy; training is single-threaded and fully
deterministic given the seeds.
"""

import base64
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    NonFiniteGradient,
    ShapeMismatch,
    StaleCache,
)


# -- layers ----------------------------------------------------------------

class Layer:
    """Base class: parameters are a list of arrays, updated in place."""

    params = ()

    def param_count(self):
        return sum(p.size for p in self.params)

    def spec(self):
        raise NotImplementedError

    def forward(self, x, train, rng):
        raise NotImplementedError

    def backward(self, grad_out, cache):
        """Returns ``(grad_in, param_grads)``."""
        raise NotImplementedError


class Dense(Layer):
    """Affine layer ``y = x W + b`` for 1-D or batched 2-D inputs."""

    def __init__(self, in_dim, out_dim, rng):
        self.in_dim = in_dim
        self.out_dim = out_dim
        bound = 1.0 / np.sqrt(in_dim)
        self.weight = rng.uniform(-bound, bound, size=(in_dim, out_dim))
        self.bias = np.zeros(out_dim)
        self.params = [self.weight, self.bias]

    def spec(self):
        return {"kind": "dense", "in": self.in_dim, "out": self.out_dim}

    def forward(self, x, train, rng):
        if x.shape[-1] != self.in_dim:
            raise ShapeMismatch(
                f"dense expects last dim {self.in_dim}, got {x.shape}"
            )
        return x @ self.weight + self.bias, x

    def backward(self, grad_out, cache):
        x = cache
        if x.ndim == 1:
            grad_w = np.outer(x, grad_out)
            grad_b = grad_out.copy()
        else:
            grad_w = x.T @ grad_out
            grad_b = grad_out.sum(axis=0)
        return grad_out @ self.weight.T, [grad_w, grad_b]


class Relu(Layer):
    def spec(self):
        return {"kind": "relu"}

    def forward(self, x, train, rng):
        return np.maximum(x, 0.0), x > 0

    def backward(self, grad_out, cache):
        return grad_out * cache, []


class Dropout(Layer):
    """Inverted dropout: active in train mode only."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = rate

    def spec(self):
        return {"kind": "dropout", "rate": self.rate}

    def forward(self, x, train, rng):
        if not train or self.rate == 0.0:
            return x, None
        keep = 1.0 - self.rate
        mask = (rng.random(x.shape) < keep) / keep
        return x * mask, mask

    def backward(self, grad_out, cache):
        if cache is None:
            return grad_out, []
        return grad_out * cache, []


class Conv2d(Layer):
    """3x3-style convolution, zero "same" padding, stride 1, on (C, H, W)."""

    def __init__(self, in_ch, out_ch, kh, kw, rng):
        self.in_ch, self.out_ch, self.kh, self.kw = in_ch, out_ch, kh, kw
        fan_in = in_ch * kh * kw
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = rng.uniform(-bound, bound, size=(out_ch, in_ch, kh, kw))
        self.bias = np.zeros(out_ch)
        self.params = [self.weight, self.bias]

    def spec(self):
        return {"kind": "conv2d", "in_ch": self.in_ch, "out_ch": self.out_ch,
                "kh": self.kh, "kw": self.kw}

    def _im2col(self, x):
        c, h, w = x.shape
        ph, pw = self.kh // 2, self.kw // 2
        padded = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
        cols = np.empty((c * self.kh * self.kw, h * w))
        idx = 0
        for dc in range(c):
            for di in range(self.kh):
                for dj in range(self.kw):
                    cols[idx] = padded[dc, di : di + h, dj : dj + w].ravel()
                    idx += 1
        return cols, padded.shape

    def forward(self, x, train, rng):
        if x.ndim != 3 or x.shape[0] != self.in_ch:
            raise ShapeMismatch(
                f"conv2d expects ({self.in_ch}, H, W), got {x.shape}"
            )
        c, h, w = x.shape
        cols, padded_shape = self._im2col(x)
        w_mat = self.weight.reshape(self.out_ch, -1)
        y = (w_mat @ cols + self.bias[:, None]).reshape(self.out_ch, h, w)
        return y, (cols, x.shape, padded_shape)

    def backward(self, grad_out, cache):
        cols, x_shape, padded_shape = cache
        c, h, w = x_shape
        g_mat = grad_out.reshape(self.out_ch, -1)
        grad_w = (g_mat @ cols.T).reshape(self.weight.shape)
        grad_b = g_mat.sum(axis=1)
        grad_cols = self.weight.reshape(self.out_ch, -1).T @ g_mat
        ph, pw = self.kh // 2, self.kw // 2
        grad_padded = np.zeros(padded_shape)
        idx = 0
        for dc in range(c):
            for di in range(self.kh):
                for dj in range(self.kw):
                    grad_padded[dc, di : di + h, dj : dj + w] += (
                        grad_cols[idx].reshape(h, w)
                    )
                    idx += 1
        grad_x = grad_padded[:, ph : ph + h, pw : pw + w]
        return grad_x, [grad_w, grad_b]


class AvgPool(Layer):
    """3x3 average pooling, stride (2, 2), windows clipped at the edges."""

    def __init__(self, size=3, stride=2):
        self.size = size
        self.stride = stride

    def spec(self):
        return {"kind": "avgpool", "size": self.size, "stride": self.stride}

    def _windows(self, length):
        out_len = (length - 1) // self.stride + 1
        spans = []
        for o in range(out_len):
            lo = o * self.stride  # window anchored at the stride position
            hi = min(length, lo + self.size)
            spans.append((lo, hi))
        return spans

    def forward(self, x, train, rng):
        if x.ndim != 3:
            raise ShapeMismatch(f"avgpool expects (C, H, W), got {x.shape}")
        c, h, w = x.shape
        rows = self._windows(h)
        colspans = self._windows(w)
        y = np.empty((c, len(rows), len(colspans)))
        for i, (rlo, rhi) in enumerate(rows):
            for j, (clo, chi) in enumerate(colspans):
                y[:, i, j] = x[:, rlo:rhi, clo:chi].mean(axis=(1, 2))
        return y, (x.shape, rows, colspans)

    def backward(self, grad_out, cache):
        x_shape, rows, colspans = cache
        grad_x = np.zeros(x_shape)
        for i, (rlo, rhi) in enumerate(rows):
            for j, (clo, chi) in enumerate(colspans):
                count = (rhi - rlo) * (chi - clo)
                grad_x[:, rlo:rhi, clo:chi] += (
                    grad_out[:, i, j][:, None, None] / count
                )
        return grad_x, []


class Flatten(Layer):
    def spec(self):
        return {"kind": "flatten"}

    def forward(self, x, train, rng):
        return x.ravel(), x.shape

    def backward(self, grad_out, cache):
        return grad_out.reshape(cache), []


class Lstm(Layer):
    """Single LSTM layer over a (T, D) sequence; returns the final state.

    Gate order i, f, g, o; forget-gate bias initialized to +1.
    """

    def __init__(self, input_dim, hidden_dim, rng):
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        bound = 1.0 / np.sqrt(max(input_dim, hidden_dim))
        self.w_x = rng.uniform(-bound, bound, size=(input_dim, 4 * hidden_dim))
        self.w_h = rng.uniform(-bound, bound, size=(hidden_dim, 4 * hidden_dim))
        self.bias = np.zeros(4 * hidden_dim)
        self.bias[hidden_dim : 2 * hidden_dim] = 1.0
        self.params = [self.w_x, self.w_h, self.bias]

    def spec(self):
        return {"kind": "lstm", "in": self.input_dim, "hidden": self.hidden_dim}

    def forward(self, x, train, rng):
        if x.ndim != 2 or x.shape[1] != self.input_dim:
            raise ShapeMismatch(
                f"lstm expects (T, {self.input_dim}), got {x.shape}"
            )
        hd = self.hidden_dim
        h = np.zeros(hd)
        c = np.zeros(hd)
        steps = []
        for t in range(x.shape[0]):
            z = x[t] @ self.w_x + h @ self.w_h + self.bias
            i = _sigmoid(z[:hd])
            f = _sigmoid(z[hd : 2 * hd])
            g = np.tanh(z[2 * hd : 3 * hd])
            o = _sigmoid(z[3 * hd :])
            c_new = f * c + i * g
            h_new = o * np.tanh(c_new)
            steps.append((x[t], h, c, i, f, g, o, c_new))
            h, c = h_new, c_new
        return h, (x.shape, steps)

    def backward(self, grad_out, cache):
        x_shape, steps = cache
        hd = self.hidden_dim
        grad_wx = np.zeros_like(self.w_x)
        grad_wh = np.zeros_like(self.w_h)
        grad_b = np.zeros_like(self.bias)
        grad_x = np.zeros(x_shape)
        dh = grad_out.copy()
        dc = np.zeros(hd)
        for t in range(len(steps) - 1, -1, -1):
            x_t, h_prev, c_prev, i, f, g, o, c_new = steps[t]
            tanh_c = np.tanh(c_new)
            do = dh * tanh_c
            dc = dc + dh * o * (1.0 - tanh_c**2)
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate([
                di * i * (1.0 - i),
                df * f * (1.0 - f),
                dg * (1.0 - g**2),
                do * o * (1.0 - o),
            ])
            grad_wx += np.outer(x_t, dz)
            grad_wh += np.outer(h_prev, dz)
            grad_b += dz
            grad_x[t] = dz @ self.w_x.T
            dh = dz @ self.w_h.T
            dc = dc * f
        return grad_x, [grad_wx, grad_wh, grad_b]


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


# -- network container -----------------------------------------------------

class Network:
    """Sequential layer stack with a flat parameter vector view."""

    def __init__(self, layers, seed=0):
        self.layers = list(layers)
        self.rng = np.random.default_rng(seed)
        self._forward_token = 0

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def param_count(self):
        return sum(layer.param_count() for layer in self.layers)

    def has_dropout(self):
        return any(isinstance(l, Dropout) and l.rate > 0 for l in self.layers)

    def get_weights(self):
        if not self.params:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in self.params])

    def set_weights(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.param_count():
            raise ShapeMismatch(
                f"expected {self.param_count()} weights, got {flat.size}"
            )
        offset = 0
        for p in self.params:
            p[...] = flat[offset : offset + p.size].reshape(p.shape)
            offset += p.size

    def forward(self, x, mode="eval"):
        """Run the stack; returns ``(output, cache)`` for backward."""
        if mode not in ("train", "eval"):
            raise ValueError("mode must be 'train' or 'eval'")
        train = mode == "train"
        self._forward_token += 1
        caches = []
        out = np.asarray(x, dtype=np.float64)
        for layer in self.layers:
            out, cache = layer.forward(out, train, self.rng)
            if not np.all(np.isfinite(out)):
                raise FloatingPointError("non-finite activation")
            caches.append(cache)
        return out, (self._forward_token, caches)

    def backward(self, cache, loss_grad):
        """Gradient of the scalar loss w.r.t. the flat weight vector."""
        token, caches = cache
        if token != self._forward_token:
            raise StaleCache("cache is not from the most recent forward pass")
        grads = [None] * len(self.layers)
        grad = np.asarray(loss_grad, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            grad, param_grads = self.layers[i].backward(grad, caches[i])
            grads[i] = param_grads
        flat = [g.ravel() for pg in grads for g in pg]
        return np.concatenate(flat) if flat else np.zeros(0)

    def layer_specs(self):
        return [layer.spec() for layer in self.layers]


def build_layer(spec, rng):
    """Instantiate one layer from its spec dict."""
    kind = spec["kind"]
    if kind == "dense":
        return Dense(spec["in"], spec["out"], rng)
    if kind == "relu":
        return Relu()
    if kind == "dropout":
        return Dropout(spec["rate"])
    if kind == "conv2d":
        return Conv2d(spec["in_ch"], spec["out_ch"], spec["kh"], spec["kw"], rng)
    if kind == "avgpool":
        return AvgPool(spec.get("size", 3), spec.get("stride", 2))
    if kind == "flatten":
        return Flatten()
    if kind == "lstm":
        return Lstm(spec["in"], spec["hidden"], rng)
    raise ValueError(f"unknown layer kind: {kind}")


def build_network(specs, seed=0):
    rng = np.random.default_rng(seed)
    return Network([build_layer(s, rng) for s in specs], seed=seed)


# -- loss and optimizer ----------------------------------------------------

def mse_loss(pred, target):
    """Mean squared error and its gradient w.r.t. the prediction."""
    pred = np.atleast_1d(np.asarray(pred, dtype=np.float64))
    target = np.atleast_1d(np.asarray(target, dtype=np.float64))
    if pred.shape != target.shape:
        raise ShapeMismatch(f"{pred.shape} vs {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size


@dataclass
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class AdamState:
    m: np.ndarray = None
    v: np.ndarray = None
    t: int = 0


def optimizer_step(weights, grads, state, config):
    """One adaptive-moment update; returns the new weight vector."""
    grads = np.asarray(grads, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    if grads.shape != weights.shape:
        raise ShapeMismatch(f"{grads.shape} vs {weights.shape}")
    if not np.all(np.isfinite(grads)):
        raise NonFiniteGradient("gradient contains NaN or infinity")
    if state.m is None:
        state.m = np.zeros_like(weights)
        state.v = np.zeros_like(weights)
    state.t += 1
    state.m = config.beta1 * state.m + (1.0 - config.beta1) * grads
    state.v = config.beta2 * state.v + (1.0 - config.beta2) * grads**2
    m_hat = state.m / (1.0 - config.beta1**state.t)
    v_hat = state.v / (1.0 - config.beta2**state.t)
    return weights - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


# -- verification ----------------------------------------------------------

def grad_check(model, x, target, eps=1e-5, n_samples=50, seed=0):
    """Max relative error of analytic vs central-difference gradients.

    ``model`` needs ``get_weights``/``set_weights`` and a
    ``loss_and_grad(x, target)`` pair; sequential networks get a default
    via :func:`network_loss_and_grad`. Dropout must be inactive.
    """
    if isinstance(model, Network):
        if model.has_dropout():
            raise ValueError("disable dropout before gradient checking")
        loss_and_grad = lambda: network_loss_and_grad(model, x, target)
    else:
        if getattr(model, "has_dropout", lambda: False)():
            raise ValueError("disable dropout before gradient checking")
        loss_and_grad = lambda: model.loss_and_grad(x, target)

    _, analytic = loss_and_grad()
    weights = model.get_weights()
    rng = np.random.default_rng(seed)
    indices = rng.choice(weights.size, size=min(n_samples, weights.size),
                         replace=False)
    max_err = 0.0
    for idx in indices:
        original = weights[idx]
        weights[idx] = original + eps
        model.set_weights(weights)
        loss_plus, _ = loss_and_grad()
        weights[idx] = original - eps
        model.set_weights(weights)
        loss_minus, _ = loss_and_grad()
        weights[idx] = original
        numeric = (loss_plus - loss_minus) / (2.0 * eps)
        denom = max(abs(analytic[idx]), abs(numeric), 1e-8)
        max_err = max(max_err, abs(analytic[idx] - numeric) / denom)
    model.set_weights(weights)
    return max_err


def network_loss_and_grad(network, x, target, mode="train"):
    """MSE loss and flat gradient for a sequential network."""
    out, cache = network.forward(x, mode=mode)
    loss, grad = mse_loss(out, target)
    return loss, network.backward(cache, grad.reshape(np.shape(out)))


# -- checkpoints -----------------------------------------------------------

@dataclass
class NetworkCheckpoint:
    """Architecture descriptor plus flat float32 weights and metadata."""

    arch: dict
    weights: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float32)

    def to_json(self):
        return json.dumps({
            "arch": self.arch,
            "weights_b64": base64.b64encode(
                np.ascontiguousarray(self.weights, dtype="<f4").tobytes()
            ).decode("ascii"),
            "metadata": self.metadata,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        weights = np.frombuffer(
            base64.b64decode(payload["weights_b64"]), dtype="<f4"
        ).astype(np.float32)
        return cls(payload["arch"], weights, payload["metadata"])

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_json(fh.read())


def checkpoint_sequential(network, metadata=None):
    """Checkpoint a sequential network."""
    return NetworkCheckpoint(
        {"type": "sequential", "layers": network.layer_specs()},
        network.get_weights(),
        metadata or {},
    )


def restore_sequential(checkpoint, seed=0):
    """Rebuild a sequential network from its checkpoint."""
    if checkpoint.arch.get("type") != "sequential":
        raise ValueError("not a sequential-network checkpoint")
    network = build_network(checkpoint.arch["layers"], seed=seed)
    network.set_weights(checkpoint.weights.astype(np.float64))
    return network
