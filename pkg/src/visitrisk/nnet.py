"""Minimal feed-forward and recurrent network machinery on numpy.

Everything runs in float64 with hand-written backward passes so analytic
gradients can be checked against central finite differences. Layers expose a
``params`` dict of named arrays; backward passes return gradient dicts keyed
identically, which :class:`Adam` consumes.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import TrainingError


def sigmoid(x):
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def glorot(rng, shape):
    fan_in, fan_out = shape[0], shape[-1]
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def clip_global_norm(grads: dict, max_norm: float) -> dict:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if total <= max_norm or total == 0.0:
        return grads
    factor = max_norm / total
    return {k: g * factor for k, g in grads.items()}


class Adam:
    """Adaptive-moment optimizer over a flat dict of named parameters."""

    def __init__(self, params: dict, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        correction1 = 1.0 - b1 ** self.t
        correction2 = 1.0 - b2 ** self.t
        for key, grad in grads.items():
            param = self.params[key]
            m = self.m[key]
            v = self.v[key]
            m *= b1
            m += (1.0 - b1) * grad
            v *= b2
            v += (1.0 - b2) * grad * grad
            m_hat = m / correction1
            v_hat = v / correction2
            param -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------

def masked_mse(pred, target, mask):
    """Mean squared error over mask-selected cells; returns (loss, dpred)."""
    weight = float(np.sum(mask))
    if weight == 0.0:
        return 0.0, np.zeros_like(pred)
    diff = (pred - target) * mask
    loss = float(np.sum(diff * diff)) / weight
    dpred = 2.0 * diff / weight
    return loss, dpred


def masked_bce_from_logits(logits, labels, mask):
    """Masked binary cross-entropy on logits; returns (loss, dlogits)."""
    weight = float(np.sum(mask))
    if weight == 0.0:
        return 0.0, np.zeros_like(logits)
    absl = np.abs(logits)
    elem = np.maximum(logits, 0.0) - logits * labels + np.log1p(np.exp(-absl))
    loss = float(np.sum(elem * mask)) / weight
    dlogits = (sigmoid(logits) - labels) * mask / weight
    return loss, dlogits


# ---------------------------------------------------------------------------
# Feed-forward stack (autoencoders)
# ---------------------------------------------------------------------------

class MLP:
    """Fully connected stack with tanh hidden units and a linear output."""

    def __init__(self, widths, rng):
        self.widths = list(widths)
        self.params = {}
        for i in range(len(self.widths) - 1):
            self.params[f"W{i}"] = glorot(rng, (self.widths[i], self.widths[i + 1]))
            self.params[f"b{i}"] = np.zeros(self.widths[i + 1])
        self.n_layers = len(self.widths) - 1

    def forward(self, x):
        activations = [x]
        for i in range(self.n_layers):
            z = activations[-1] @ self.params[f"W{i}"] + self.params[f"b{i}"]
            if i < self.n_layers - 1:
                z = np.tanh(z)
            activations.append(z)
        return activations[-1], activations

    def backward(self, activations, dout):
        grads = {}
        delta = dout
        for i in range(self.n_layers - 1, -1, -1):
            a_prev = activations[i]
            grads[f"W{i}"] = a_prev.T @ delta
            grads[f"b{i}"] = delta.sum(axis=0)
            if i > 0:
                delta = delta @ self.params[f"W{i}"].T
                delta = delta * (1.0 - activations[i] ** 2)
        return grads

    def predict(self, x):
        out, _ = self.forward(x)
        return out


# ---------------------------------------------------------------------------
# Recurrent layers with masked state carry
# ---------------------------------------------------------------------------

class GRULayer:
    """Unidirectional GRU; padded steps carry the previous state through."""

    def __init__(self, in_dim, units, rng, prefix="gru"):
        self.in_dim = in_dim
        self.units = units
        self.prefix = prefix
        p = {}
        for gate in ("z", "r", "h"):
            p[f"{prefix}_W{gate}"] = glorot(rng, (in_dim, units))
            p[f"{prefix}_U{gate}"] = glorot(rng, (units, units))
            p[f"{prefix}_b{gate}"] = np.zeros(units)
        self.params = p

    def forward(self, x, mask):
        """x: (B, T, in_dim); mask: (B, T) with 1 for real steps."""
        p, pre = self.params, self.prefix
        B, T, _ = x.shape
        h = np.zeros((B, self.units))
        outputs = np.zeros((B, T, self.units))
        caches = []
        for t in range(T):
            xt = x[:, t, :]
            m = mask[:, t][:, None]
            z = sigmoid(xt @ p[f"{pre}_Wz"] + h @ p[f"{pre}_Uz"] + p[f"{pre}_bz"])
            r = sigmoid(xt @ p[f"{pre}_Wr"] + h @ p[f"{pre}_Ur"] + p[f"{pre}_br"])
            rh = r * h
            c = np.tanh(xt @ p[f"{pre}_Wh"] + rh @ p[f"{pre}_Uh"] + p[f"{pre}_bh"])
            h_new = z * h + (1.0 - z) * c
            h_next = m * h_new + (1.0 - m) * h
            caches.append((xt, h, z, r, rh, c, m))
            h = h_next
            outputs[:, t, :] = h
        return outputs, caches

    def backward(self, caches, dout):
        p, pre = self.params, self.prefix
        B, T, _ = dout.shape
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dx = np.zeros((B, T, self.in_dim))
        dh_next = np.zeros((B, self.units))
        for t in range(T - 1, -1, -1):
            xt, h_prev, z, r, rh, c, m = caches[t]
            dh = dout[:, t, :] + dh_next
            dh_new = dh * m
            dh_prev = dh * (1.0 - m)
            dz = dh_new * (h_prev - c)
            dc = dh_new * (1.0 - z)
            dh_prev += dh_new * z
            da_c = dc * (1.0 - c * c)
            grads[f"{pre}_Wh"] += xt.T @ da_c
            grads[f"{pre}_Uh"] += rh.T @ da_c
            grads[f"{pre}_bh"] += da_c.sum(axis=0)
            dx[:, t, :] += da_c @ p[f"{pre}_Wh"].T
            drh = da_c @ p[f"{pre}_Uh"].T
            dr = drh * h_prev
            dh_prev += drh * r
            da_r = dr * r * (1.0 - r)
            grads[f"{pre}_Wr"] += xt.T @ da_r
            grads[f"{pre}_Ur"] += h_prev.T @ da_r
            grads[f"{pre}_br"] += da_r.sum(axis=0)
            dx[:, t, :] += da_r @ p[f"{pre}_Wr"].T
            dh_prev += da_r @ p[f"{pre}_Ur"].T
            da_z = dz * z * (1.0 - z)
            grads[f"{pre}_Wz"] += xt.T @ da_z
            grads[f"{pre}_Uz"] += h_prev.T @ da_z
            grads[f"{pre}_bz"] += da_z.sum(axis=0)
            dx[:, t, :] += da_z @ p[f"{pre}_Wz"].T
            dh_prev += da_z @ p[f"{pre}_Uz"].T
            dh_next = dh_prev
        return dx, grads


class LSTMLayer:
    """Unidirectional LSTM; padded steps carry state and cell through."""

    def __init__(self, in_dim, units, rng, prefix="lstm"):
        self.in_dim = in_dim
        self.units = units
        self.prefix = prefix
        p = {}
        for gate in ("i", "f", "o", "g"):
            p[f"{prefix}_W{gate}"] = glorot(rng, (in_dim, units))
            p[f"{prefix}_U{gate}"] = glorot(rng, (units, units))
            p[f"{prefix}_b{gate}"] = np.zeros(units)
        # Forget-gate bias starts at 1 to ease gradient flow early in training.
        p[f"{prefix}_bf"] = np.ones(units)
        self.params = p

    def forward(self, x, mask):
        p, pre = self.params, self.prefix
        B, T, _ = x.shape
        h = np.zeros((B, self.units))
        cell = np.zeros((B, self.units))
        outputs = np.zeros((B, T, self.units))
        caches = []
        for t in range(T):
            xt = x[:, t, :]
            m = mask[:, t][:, None]
            i = sigmoid(xt @ p[f"{pre}_Wi"] + h @ p[f"{pre}_Ui"] + p[f"{pre}_bi"])
            f = sigmoid(xt @ p[f"{pre}_Wf"] + h @ p[f"{pre}_Uf"] + p[f"{pre}_bf"])
            o = sigmoid(xt @ p[f"{pre}_Wo"] + h @ p[f"{pre}_Uo"] + p[f"{pre}_bo"])
            g = np.tanh(xt @ p[f"{pre}_Wg"] + h @ p[f"{pre}_Ug"] + p[f"{pre}_bg"])
            c_new = f * cell + i * g
            tanh_c = np.tanh(c_new)
            h_new = o * tanh_c
            h_next = m * h_new + (1.0 - m) * h
            c_next = m * c_new + (1.0 - m) * cell
            caches.append((xt, h, cell, i, f, o, g, c_new, tanh_c, m))
            h, cell = h_next, c_next
            outputs[:, t, :] = h
        return outputs, caches

    def backward(self, caches, dout):
        p, pre = self.params, self.prefix
        B, T, _ = dout.shape
        grads = {k: np.zeros_like(v) for k, v in p.items()}
        dx = np.zeros((B, T, self.in_dim))
        dh_next = np.zeros((B, self.units))
        dc_next = np.zeros((B, self.units))
        for t in range(T - 1, -1, -1):
            xt, h_prev, c_prev, i, f, o, g, c_new, tanh_c, m = caches[t]
            dh = dout[:, t, :] + dh_next
            dh_new = dh * m
            dh_prev = dh * (1.0 - m)
            dc_new = dc_next * m + dh_new * o * (1.0 - tanh_c * tanh_c)
            dc_prev = dc_next * (1.0 - m) + dc_new * f
            do = dh_new * tanh_c
            df = dc_new * c_prev
            di = dc_new * g
            dg = dc_new * i
            for gate, dgate, act in (("i", di, i), ("f", df, f), ("o", do, o)):
                da = dgate * act * (1.0 - act)
                grads[f"{pre}_W{gate}"] += xt.T @ da
                grads[f"{pre}_U{gate}"] += h_prev.T @ da
                grads[f"{pre}_b{gate}"] += da.sum(axis=0)
                dx[:, t, :] += da @ p[f"{pre}_W{gate}"].T
                dh_prev += da @ p[f"{pre}_U{gate}"].T
            da_g = dg * (1.0 - g * g)
            grads[f"{pre}_Wg"] += xt.T @ da_g
            grads[f"{pre}_Ug"] += h_prev.T @ da_g
            grads[f"{pre}_bg"] += da_g.sum(axis=0)
            dx[:, t, :] += da_g @ p[f"{pre}_Wg"].T
            dh_prev += da_g @ p[f"{pre}_Ug"].T
            dh_next = dh_prev
            dc_next = dc_prev
        return dx, grads


class MaskedBatchNorm:
    """Per-unit batch normalization over (batch, time) with a validity mask.

    Training mode normalizes with statistics over valid steps only and
    updates running averages; inference mode applies the frozen running
    statistics, making it a fixed per-unit affine map.
    """

    def __init__(self, units, prefix="bn", momentum=0.99, eps=1e-5):
        self.units = units
        self.prefix = prefix
        self.momentum = momentum
        self.eps = eps
        self.params = {
            f"{prefix}_gamma": np.ones(units),
            f"{prefix}_beta": np.zeros(units),
        }
        self.running_mean = np.zeros(units)
        self.running_var = np.ones(units)

    def forward(self, x, mask, training):
        """x: (B, T, units); mask: (B, T)."""
        gamma = self.params[f"{self.prefix}_gamma"]
        beta = self.params[f"{self.prefix}_beta"]
        m3 = mask[:, :, None]
        if training:
            count = float(np.sum(mask))
            if count == 0.0:
                raise TrainingError("batch norm received an all-padded batch")
            mean = np.sum(x * m3, axis=(0, 1)) / count
            centered = x - mean
            var = np.sum(centered * centered * m3, axis=(0, 1)) / count
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = centered * inv_std
            mom = self.momentum
            self.running_mean = mom * self.running_mean + (1.0 - mom) * mean
            self.running_var = mom * self.running_var + (1.0 - mom) * var
            cache = (xhat, centered, inv_std, m3, count)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean) * inv_std
            cache = (xhat, None, inv_std, m3, None)
        return gamma * xhat + beta, cache

    def backward(self, cache, dout):
        gamma = self.params[f"{self.prefix}_gamma"]
        xhat, centered, inv_std, m3, count = cache
        grads = {
            f"{self.prefix}_gamma": np.sum(dout * xhat * m3, axis=(0, 1)),
            f"{self.prefix}_beta": np.sum(dout * m3, axis=(0, 1)),
        }
        dxhat = dout * gamma * m3
        if count is None:  # inference mode: affine with frozen statistics
            return dxhat * inv_std, grads
        sum_dxhat = np.sum(dxhat, axis=(0, 1))
        sum_dxhat_xhat = np.sum(dxhat * xhat, axis=(0, 1))
        dx = (dxhat - (sum_dxhat + xhat * sum_dxhat_xhat) / count) * inv_std
        return dx * m3, grads


def dropout_mask(rng, shape, rate):
    """Inverted dropout mask; multiply activations by it during training."""
    keep = 1.0 - rate
    return (rng.random(shape) < keep).astype(float) / keep
