"""Minimal 1-D conv net machinery: forward, backward, Adam.

Written out by hand on purpose; the layer math is the product here, not
an import. Everything runs in float64 so the finite-difference check can
hold to 1e-5. Conv layers lower onto matmul (im2col) for speed.

Array conventions: activations (batch, channels, length); conv weights
(c_out, c_in, k); transposed-conv weights (c_in, c_out, k).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import PhysiortError


class ShapeViolation(PhysiortError):
    exit_code = 2


def conv_out_len(n: int, k: int, stride: int, pad: tuple[int, int]) -> int:
    return (n + pad[0] + pad[1] - k) // stride + 1


def same_pad(k: int, stride: int) -> tuple[int, int]:
    """Left/right padding so out = in / stride whenever stride divides in
    (every length in the 512 -> 8 stack does); smaller pad on the left."""
    total = k - stride
    return (total // 2, total - total // 2)


@dataclass
class Conv1d:
    w: np.ndarray
    b: np.ndarray
    stride: int = 1
    pad: tuple[int, int] = (0, 0)

    @property
    def k(self) -> int:
        return self.w.shape[2]

    def forward(self, x: np.ndarray):
        b_, c_in, n = x.shape
        if c_in != self.w.shape[1]:
            raise ShapeViolation(
                f"expected {self.w.shape[1]} input channels, got {c_in}")
        xp = np.pad(x, ((0, 0), (0, 0), self.pad))
        win = sliding_window_view(xp, self.k, axis=2)[:, :, ::self.stride, :]
        n_out = win.shape[2]
        cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(
            b_ * n_out, c_in * self.k)
        w2 = self.w.reshape(self.w.shape[0], -1)
        y = (cols @ w2.T).reshape(b_, n_out, -1).transpose(0, 2, 1) + self.b[None, :, None]
        return y, (x.shape, cols)

    def backward(self, cache, dy: np.ndarray):
        x_shape, cols = cache
        b_, c_in, n = x_shape
        n_out = dy.shape[2]
        dy2 = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(b_ * n_out, -1)
        dw = (dy2.T @ cols).reshape(self.w.shape)
        db = dy.sum(axis=(0, 2))
        dcols = (dy2 @ self.w.reshape(self.w.shape[0], -1)).reshape(
            b_, n_out, c_in, self.k)
        dxp = np.zeros((b_, c_in, n + self.pad[0] + self.pad[1]))
        dwin = dcols.transpose(0, 2, 1, 3)
        for kk in range(self.k):
            dxp[:, :, kk:kk + self.stride * n_out:self.stride] += dwin[:, :, :, kk]
        dx = dxp[:, :, self.pad[0]:self.pad[0] + n]
        return dx, {"w": dw, "b": db}

    def params(self):
        return {"w": self.w, "b": self.b}


@dataclass
class ConvTranspose1d:
    w: np.ndarray
    b: np.ndarray
    stride: int = 2
    pad: int = 1

    @property
    def k(self) -> int:
        return self.w.shape[2]

    def out_len(self, n: int) -> int:
        return (n - 1) * self.stride - 2 * self.pad + self.k

    def forward(self, x: np.ndarray):
        b_, c_in, n = x.shape
        if c_in != self.w.shape[0]:
            raise ShapeViolation(
                f"expected {self.w.shape[0]} input channels, got {c_in}")
        n_out = self.out_len(n)
        y = np.zeros((b_, self.w.shape[1], n_out))
        for kk in range(self.k):
            pos = np.arange(n) * self.stride - self.pad + kk
            ok = (pos >= 0) & (pos < n_out)
            if not ok.any():
                continue
            contrib = np.einsum("bcl,co->bol", x[:, :, ok], self.w[:, :, kk],
                                optimize=True)
            y[:, :, pos[ok]] += contrib
        y += self.b[None, :, None]
        return y, (x,)

    def backward(self, cache, dy: np.ndarray):
        (x,) = cache
        b_, c_in, n = x.shape
        n_out = dy.shape[2]
        dx = np.zeros_like(x)
        dw = np.zeros_like(self.w)
        for kk in range(self.k):
            pos = np.arange(n) * self.stride - self.pad + kk
            ok = (pos >= 0) & (pos < n_out)
            if not ok.any():
                continue
            dy_gather = dy[:, :, pos[ok]]
            dx[:, :, ok] += np.einsum("bol,co->bcl", dy_gather, self.w[:, :, kk],
                                      optimize=True)
            dw[:, :, kk] = np.einsum("bcl,bol->co", x[:, :, ok], dy_gather,
                                     optimize=True)
        db = dy.sum(axis=(0, 2))
        return dx, {"w": dw, "b": db}

    def params(self):
        return {"w": self.w, "b": self.b}


@dataclass
class Relu:
    def forward(self, x: np.ndarray):
        y = np.maximum(x, 0.0)
        return y, (x > 0,)

    def backward(self, cache, dy: np.ndarray):
        (mask,) = cache
        return dy * mask, None

    def params(self):
        return None


def forward_layers(layers, x: np.ndarray):
    caches = []
    for layer in layers:
        x, cache = layer.forward(x)
        caches.append(cache)
    return x, caches


def backward_layers(layers, caches, dy: np.ndarray):
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        dy, g = layers[i].backward(caches[i], dy)
        grads[i] = g
    return dy, grads


def softmax2(logits: np.ndarray) -> np.ndarray:
    """Two-way softmax over the channel axis of (batch, 2, bins)."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean per-bin two-class cross-entropy and its logit gradient.

    logits: (batch, 2, bins); labels: (batch, bins) integers in {0, 1}.
    """
    if logits.shape[0] != labels.shape[0] or logits.shape[2] != labels.shape[1]:
        raise ShapeViolation(
            f"logits {logits.shape} do not match labels {labels.shape}")
    probs = softmax2(logits)
    b_idx = np.arange(labels.shape[0])[:, None]
    l_idx = np.arange(labels.shape[1])[None, :]
    picked = probs[b_idx, labels, l_idx]
    total = labels.size
    loss = float(-np.mean(np.log(np.maximum(picked, 1e-300))))
    dlogits = probs.copy()
    dlogits[b_idx, labels, l_idx] -= 1.0
    dlogits /= total
    return loss, dlogits


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    moments: dict = field(default_factory=dict)


def adam_step(state: AdamState, layers, grads) -> None:
    """One bias-corrected Adam update, applied in place to the layer params."""
    state.step += 1
    t = state.step
    for i, (layer, g) in enumerate(zip(layers, grads)):
        if g is None:
            continue
        params = layer.params()
        for name, grad in g.items():
            key = (i, name)
            if key not in state.moments:
                state.moments[key] = (np.zeros_like(grad), np.zeros_like(grad))
            m, v = state.moments[key]
            m = state.beta1 * m + (1 - state.beta1) * grad
            v = state.beta2 * v + (1 - state.beta2) * grad * grad
            state.moments[key] = (m, v)
            m_hat = m / (1 - state.beta1 ** t)
            v_hat = v / (1 - state.beta2 ** t)
            params[name] -= state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
