"""Training loop for the quality model: batched SGD with Adam, split by
segment group so validation never sees a training wearer."""

from __future__ import annotations

import numpy as np

from ..errors import PhysiortError
from ..synth import LabeledSegment
from .model import SqaModel, backward, build_model, forward_batch, znorm
from .nn import AdamState, adam_step

BATCH_SIZE = 256
LEARNING_RATE = 1e-3
VAL_GROUP_FRACTION = 0.2


class EmptyCorpus(PhysiortError):
    exit_code = 2


def _to_arrays(segments: list[LabeledSegment], input_len: int):
    x = np.zeros((len(segments), input_len))
    y = np.zeros((len(segments), segments[0].quality_bins.size), dtype=np.int64)
    for i, seg in enumerate(segments):
        if seg.samples.data.size != input_len:
            raise EmptyCorpus(
                f"segment {i} has {seg.samples.data.size} samples, need {input_len}")
        x[i] = znorm(seg.samples.data)
        y[i] = seg.quality_bins
    return x, y


def split_by_group(segments: list[LabeledSegment]):
    """Deterministic group-disjoint split; the last fifth of the sorted
    group ids is held out."""
    groups = sorted({seg.group for seg in segments})
    if len(groups) < 2:
        raise EmptyCorpus("need at least two groups for a disjoint split")
    n_val = max(1, round(VAL_GROUP_FRACTION * len(groups)))
    val_groups = set(groups[-n_val:])
    train = [s for s in segments if s.group not in val_groups]
    val = [s for s in segments if s.group in val_groups]
    return train, val


def evaluate(model: SqaModel, x: np.ndarray, y: np.ndarray) -> float:
    """Per-bin label accuracy, batched."""
    correct = 0
    for lo in range(0, x.shape[0], BATCH_SIZE):
        logits, _ = forward_batch(model, x[lo:lo + BATCH_SIZE])
        pred = np.argmax(logits, axis=1)
        correct += int(np.sum(pred == y[lo:lo + BATCH_SIZE]))
    return correct / y.size


def train(corpus: list[LabeledSegment], epochs: int, seed: int = 0):
    """Returns (model, metrics). Deterministic for a fixed seed.

    metrics: per-epoch train_loss and val_bin_accuracy lists plus the
    final held-out accuracy (computed even for epochs=0).
    """
    if not corpus:
        raise EmptyCorpus("no segments to train on")
    train_segs, val_segs = split_by_group(corpus)
    model = build_model(seed=seed)
    x_train, y_train = _to_arrays(train_segs, model.input_len)
    x_val, y_val = _to_arrays(val_segs, model.input_len)

    rng = np.random.default_rng(seed + 1)
    state = AdamState(lr=LEARNING_RATE)
    metrics = {"train_loss": [], "val_bin_accuracy": [],
               "n_train": len(train_segs), "n_val": len(val_segs)}
    for _ in range(epochs):
        order = rng.permutation(x_train.shape[0])
        total_loss = 0.0
        for lo in range(0, order.size, BATCH_SIZE):
            idx = order[lo:lo + BATCH_SIZE]
            logits, caches = forward_batch(model, x_train[idx])
            value, grads = backward(model, (logits, caches), y_train[idx])
            adam_step(state, model.layers, grads)
            total_loss += value * idx.size
        metrics["train_loss"].append(total_loss / order.size)
        metrics["val_bin_accuracy"].append(evaluate(model, x_val, y_val))
    metrics["final_val_bin_accuracy"] = (metrics["val_bin_accuracy"][-1]
                                         if epochs else evaluate(model, x_val, y_val))
    return model, metrics
