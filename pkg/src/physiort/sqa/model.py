"""The signal-quality network: a 1D-CNN encoder-decoder mapping an 8 s
PPG segment (512 samples at 64 Hz) to 16 half-second good/bad bins.

Encoder: six stride-2 conv blocks (kernel 7, same-padding, rectifier),
channels 1-16-32-32-64-64-64, so 512 samples compress to length 8.
Decoder: one transposed conv (kernel 4, stride 2, pad 1, 64-32) with a
rectifier, then a pointwise conv to 2 logits per bin. Class 0 is good,
class 1 is bad.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import (Conv1d, ConvTranspose1d, Relu, ShapeViolation, backward_layers,
                 cross_entropy, forward_layers, same_pad, softmax2)

INPUT_LEN = 512
INPUT_FS = 64.0
N_BINS = 16
BIN_SECONDS = 0.5
SAMPLES_PER_BIN = INPUT_LEN // N_BINS

ENCODER_CHANNELS = (1, 16, 32, 32, 64, 64, 64)
ENCODER_KERNEL = 7
ENCODER_STRIDE = 2
DECODER_MID = 32
DECODER_KERNEL = 4
N_CLASSES = 2

LABEL_GOOD = 0
LABEL_BAD = 1


@dataclass
class SqaModel:
    layers: tuple
    input_len: int
    n_bins: int
    encoder_channels: tuple[int, ...]
    decoder_mid: int
    seed: int

    def parameter_count(self) -> int:
        total = 0
        for layer in self.layers:
            p = layer.params()
            if p:
                total += sum(a.size for a in p.values())
        return total


@dataclass(frozen=True)
class QualityVector:
    prob_bad: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.prob_bad.shape != self.labels.shape:
            raise ShapeViolation("prob_bad and labels must align")


def znorm(segment: np.ndarray) -> np.ndarray:
    """Per-segment z-normalization; constant segments map to zeros."""
    x = np.asarray(segment, dtype=np.float64)
    sd = x.std()
    if sd == 0.0:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


def build_model(seed: int, input_len: int = INPUT_LEN,
                encoder_channels: tuple[int, ...] = ENCODER_CHANNELS,
                decoder_mid: int = DECODER_MID) -> SqaModel:
    """He fan-in init, zero biases, deterministic per seed.

    The reduced-channel form (e.g. (1, 2, 2) on 32 samples) exists so the
    gradient check can afford finite differences over every parameter.
    """
    rng = np.random.default_rng(seed)
    layers = []
    n = input_len
    for c_in, c_out in zip(encoder_channels, encoder_channels[1:]):
        fan_in = c_in * ENCODER_KERNEL
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, ENCODER_KERNEL))
        layers.append(Conv1d(w=w, b=np.zeros(c_out), stride=ENCODER_STRIDE,
                             pad=same_pad(ENCODER_KERNEL, ENCODER_STRIDE)))
        layers.append(Relu())
        n = (n + ENCODER_STRIDE - 1) // ENCODER_STRIDE
    c_last = encoder_channels[-1]
    fan_in = c_last * DECODER_KERNEL
    w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_last, decoder_mid, DECODER_KERNEL))
    layers.append(ConvTranspose1d(w=w, b=np.zeros(decoder_mid), stride=2, pad=1))
    layers.append(Relu())
    n = n * 2
    w = rng.normal(0.0, np.sqrt(2.0 / decoder_mid), (N_CLASSES, decoder_mid, 1))
    layers.append(Conv1d(w=w, b=np.zeros(N_CLASSES), stride=1, pad=(0, 0)))
    return SqaModel(layers=tuple(layers), input_len=input_len, n_bins=n,
                    encoder_channels=tuple(encoder_channels),
                    decoder_mid=decoder_mid, seed=seed)


def init_model(seed: int) -> SqaModel:
    return build_model(seed)


def forward_batch(model: SqaModel, x: np.ndarray):
    """x: (batch, input_len) z-normalized. Returns (logits, caches)."""
    if x.ndim != 2 or x.shape[1] != model.input_len:
        raise ShapeViolation(
            f"expected (batch, {model.input_len}) input, got {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeViolation("input must be finite")
    logits, caches = forward_layers(model.layers, x[:, None, :])
    return logits, caches


def forward(model: SqaModel, segment: np.ndarray):
    """One z-normalized segment in, one QualityVector out (plus the
    activation cache needed to run backward)."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.ndim != 1 or segment.size != model.input_len:
        raise ShapeViolation(
            f"expected {model.input_len} samples, got shape {segment.shape}")
    logits, caches = forward_batch(model, segment[None, :])
    probs = softmax2(logits)[0]
    return QualityVector(prob_bad=probs[LABEL_BAD],
                         labels=np.argmax(probs, axis=0)), (logits, caches)


def loss(logits: np.ndarray, truth: np.ndarray) -> float:
    """Mean per-bin two-class cross-entropy over a batch of logit maps."""
    truth = np.asarray(truth, dtype=np.int64)
    if truth.ndim == 1:
        truth = truth[None, :]
    if logits.ndim == 2:
        logits = logits[None, :, :]
    value, _ = cross_entropy(logits, truth)
    return value


def backward(model: SqaModel, cache, truth: np.ndarray):
    """Gradients of the mean cross-entropy for a forward() / forward_batch()
    cache. Returns (loss, grads) with grads aligned to model.layers."""
    logits, caches = cache
    truth = np.asarray(truth, dtype=np.int64)
    if truth.ndim == 1:
        truth = truth[None, :]
    value, dlogits = cross_entropy(logits, truth)
    _, grads = backward_layers(model.layers, caches, dlogits)
    return value, grads
