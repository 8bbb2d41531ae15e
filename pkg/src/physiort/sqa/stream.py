"""Whole-recording quality annotation: resample to the model rate, infer
consecutive 8 s segments, replicate bin labels back onto the original
samples. The trailing partial segment stays unassessed (-1)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dsp import SampleSeries
from ..store import SQI_BAD, SQI_GOOD, SQI_UNASSESSED
from .model import (INPUT_FS, INPUT_LEN, LABEL_GOOD, SAMPLES_PER_BIN, SqaModel,
                    forward_batch, znorm)


@dataclass(frozen=True)
class StreamQuality:
    sqi: np.ndarray         # per original sample: -1 unassessed, 1 good, 0 bad
    bin_labels: np.ndarray  # per assessed 0.5 s bin: 0 good, 1 bad


def infer_stream(model: SqaModel, series: SampleSeries) -> StreamQuality:
    n = series.data.size
    if n == 0:
        return StreamQuality(sqi=np.zeros(0, dtype=np.int8),
                             bin_labels=np.zeros(0, dtype=np.int8))
    n64 = int(round(n / series.fs * INPUT_FS))
    if series.fs == INPUT_FS:
        resampled = series.data
    else:
        t64 = np.arange(n64) / INPUT_FS
        t = np.arange(n) / series.fs
        resampled = np.interp(t64, t, series.data)
    n_segments = n64 // INPUT_LEN
    if n_segments:
        segs = resampled[:n_segments * INPUT_LEN].reshape(n_segments, INPUT_LEN)
        segs = np.stack([znorm(s) for s in segs])
        logits, _ = forward_batch(model, segs)
        bin_labels = np.argmax(logits, axis=1).reshape(-1).astype(np.int8)
    else:
        bin_labels = np.zeros(0, dtype=np.int8)

    sqi = np.full(n, SQI_UNASSESSED, dtype=np.int8)
    if bin_labels.size:
        pos64 = np.floor(np.arange(n) / series.fs * INPUT_FS).astype(np.int64)
        bins = pos64 // SAMPLES_PER_BIN
        assessed = bins < bin_labels.size
        good = bin_labels[bins[assessed]] == LABEL_GOOD
        sqi[assessed] = np.where(good, SQI_GOOD, SQI_BAD)
    return StreamQuality(sqi=sqi, bin_labels=bin_labels)
