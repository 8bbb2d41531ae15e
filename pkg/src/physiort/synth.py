"""Synthetic PPG/EDA/RSP generation with ground-truth labels.

Stands in for sensor hardware at the desk: known beat times, known
quality labels, controllable artifacts. The PPG beat is two Gaussians
(systolic peak plus a smaller dicrotic bump); quality labels live on a
0.5 s grid so generated segments can train and score the quality model
directly.

Label convention: 0 = good, 1 = bad (matches the classifier's class
indices everywhere downstream).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .dsp import SampleSeries
from .errors import PhysiortError

GOOD = 0
BAD = 1

BIN_SECONDS = 0.5

# Corpus geometry fixed to the quality model's input contract.
CORPUS_FS = 64.0
CORPUS_SEGMENT_S = 8.0
CORPUS_GROUPS = 10

# Beat template: systolic Gaussian plus dicrotic bump.
SYSTOLIC_SIGMA_S = 0.060
DICROTIC_DELAY_S = 0.250
DICROTIC_SIGMA_S = 0.080
DICROTIC_GAIN = 0.30
TEMPLATE_SPAN_S = (-0.24, 0.57)  # 4 sigma both sides

FIRST_BEAT_S = 0.3
MIN_IBI_S = 0.25

# ADC mapping for the simulator: signal units [-4, 4] onto full scale.
ADC_SPAN = (-4.0, 4.0)

MOTION_WANDER_HZ = 0.35


class SpecViolation(PhysiortError):
    exit_code = 2


class OverlapViolation(PhysiortError):
    exit_code = 2


class ArtifactKind(str, Enum):
    SATURATION = "saturation"
    DROPOUT = "dropout"
    MOTION_WANDER = "motion_wander"


@dataclass(frozen=True)
class PpgSpec:
    fs: float
    duration: float
    hr_bpm: float
    ibi_jitter_ms: float = 0.0
    snr_db: float = 40.0
    seed: int = 0

    def __post_init__(self):
        if not 30.0 <= self.hr_bpm <= 220.0:
            raise SpecViolation(f"hr_bpm {self.hr_bpm} outside [30, 220]")
        if self.fs < 16.0:
            raise SpecViolation(f"fs {self.fs} below 16 Hz")
        if self.duration <= 0:
            raise SpecViolation("duration must be positive")
        if self.ibi_jitter_ms < 0:
            raise SpecViolation("ibi_jitter_ms must be non-negative")


@dataclass(frozen=True)
class Burst:
    start: float
    length: float
    kind: ArtifactKind
    amplitude: float = 3.0

    def __post_init__(self):
        if self.start < 0 or self.length <= 0:
            raise SpecViolation("burst must have non-negative start and positive length")

    @property
    def end(self) -> float:
        return self.start + self.length


@dataclass(frozen=True)
class ArtifactSpec:
    bursts: tuple[Burst, ...]

    def __post_init__(self):
        ordered = sorted(self.bursts, key=lambda b: b.start)
        for prev, cur in zip(ordered, ordered[1:]):
            if cur.start < prev.end:
                raise OverlapViolation(
                    f"bursts at {prev.start:g}s and {cur.start:g}s overlap")


@dataclass(frozen=True)
class LabeledSegment:
    """A generated signal with per-bin quality labels and beat ground truth.

    ``group`` tags the simulated wearer; corpus splits hold groups apart
    so validation never sees a training wearer.
    """

    samples: SampleSeries
    quality_bins: np.ndarray
    truth_peaks: np.ndarray
    truth_ibis_ms: np.ndarray
    group: int = 0

    def __post_init__(self):
        n_bins = int(self.samples.data.size / self.samples.fs / BIN_SECONDS + 1e-9)
        if len(self.quality_bins) != n_bins:
            raise SpecViolation(
                f"expected {n_bins} quality bins, got {len(self.quality_bins)}")
        if self.truth_peaks.size and (self.truth_peaks.min() < 0
                                      or self.truth_peaks.max() >= self.samples.data.size):
            raise SpecViolation("truth peak index out of range")


def _beat_template(fs: float) -> tuple[np.ndarray, int]:
    """Sampled beat shape and the offset of its center within it."""
    lo, hi = TEMPLATE_SPAN_S
    i0 = int(np.floor(lo * fs))
    i1 = int(np.ceil(hi * fs))
    dt = np.arange(i0, i1 + 1) / fs
    shape = (np.exp(-dt ** 2 / (2 * SYSTOLIC_SIGMA_S ** 2))
             + DICROTIC_GAIN * np.exp(-(dt - DICROTIC_DELAY_S) ** 2
                                      / (2 * DICROTIC_SIGMA_S ** 2)))
    return shape, -i0


def _render_beats(beat_times: np.ndarray, fs: float, n: int) -> np.ndarray:
    template, center = _beat_template(fs)
    out = np.zeros(n)
    for t in beat_times:
        c = int(round(t * fs))
        lo = c - center
        hi = lo + template.size
        src0 = max(0, -lo)
        src1 = template.size - max(0, hi - n)
        if src0 < src1:
            out[lo + src0:lo + src1] += template[src0:src1]
    return out


def _beat_times(spec: PpgSpec, rng: np.random.Generator) -> np.ndarray:
    mean_ibi = 60.0 / spec.hr_bpm
    times = []
    t = FIRST_BEAT_S
    limit = spec.duration - 0.15  # keep the systolic max inside the signal
    while t < limit:
        times.append(t)
        ibi = mean_ibi + rng.normal(0.0, spec.ibi_jitter_ms / 1000.0)
        t += max(MIN_IBI_S, ibi)
    return np.array(times)


def generate_ppg(spec: PpgSpec) -> LabeledSegment:
    """Deterministic labeled PPG: beats at jittered IBIs plus broadband noise."""
    rng = np.random.default_rng(spec.seed)
    n = int(round(spec.duration * spec.fs))
    beat_times = _beat_times(spec, rng)
    clean = _render_beats(beat_times, spec.fs, n)

    # Peaks of the rendered waveform (overlap can nudge the maximum).
    half = int(round(0.1 * spec.fs))
    peaks = []
    for t in beat_times:
        c = int(round(t * spec.fs))
        lo = max(0, c - half)
        hi = min(n, c + half + 1)
        peaks.append(lo + int(np.argmax(clean[lo:hi])))
    truth_peaks = np.array(peaks, dtype=int)

    rms = float(np.sqrt(np.mean(clean ** 2))) if n else 0.0
    sigma = rms * 10.0 ** (-spec.snr_db / 20.0)
    data = clean + rng.normal(0.0, sigma, n)

    n_bins = int(spec.duration / BIN_SECONDS + 1e-9)
    return LabeledSegment(
        samples=SampleSeries(data=data, fs=spec.fs),
        quality_bins=np.full(n_bins, GOOD, dtype=np.int8),
        truth_peaks=truth_peaks,
        truth_ibis_ms=np.diff(beat_times) * 1000.0,
    )


def inject_artifacts(seg: LabeledSegment, art: ArtifactSpec) -> LabeledSegment:
    """Corrupt the waveform inside bursts and relabel overlapped bins bad."""
    duration = seg.samples.duration_s
    for b in art.bursts:
        if b.end > duration + 1e-9:
            raise SpecViolation(f"burst ending at {b.end:g}s exceeds {duration:g}s signal")
    fs = seg.samples.fs
    data = seg.samples.data.copy()
    bins = seg.quality_bins.copy()
    for b in art.bursts:
        i0 = int(round(b.start * fs))
        i1 = int(round(b.end * fs))
        if b.kind is ArtifactKind.SATURATION:
            data[i0:i1] = b.amplitude
        elif b.kind is ArtifactKind.DROPOUT:
            data[i0:i1] = 0.0
        else:
            t = np.arange(i0, i1) / fs
            data[i0:i1] += b.amplitude * np.sin(2 * np.pi * MOTION_WANDER_HZ * t)
        for k in range(bins.size):
            if b.start < (k + 1) * BIN_SECONDS and b.end > k * BIN_SECONDS:
                bins[k] = BAD
    return dataclasses.replace(
        seg, samples=SampleSeries(data=data, fs=fs, t0=seg.samples.t0),
        quality_bins=bins)


@dataclass(frozen=True)
class EdaSpec:
    fs: float
    duration: float
    tonic_us: float = 4.0
    drift_us_per_min: float = 0.2
    n_phasic: int = 3
    seed: int = 0

    def __post_init__(self):
        if self.fs <= 0 or self.duration <= 0:
            raise SpecViolation("fs and duration must be positive")
        if self.n_phasic < 0:
            raise SpecViolation("n_phasic must be non-negative")


@dataclass(frozen=True)
class RspSpec:
    fs: float
    duration: float
    rate_hz: float = 0.25
    depth: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.fs <= 0 or self.duration <= 0:
            raise SpecViolation("fs and duration must be positive")
        if not 0.03 <= self.rate_hz <= 1.5:
            raise SpecViolation(f"rate_hz {self.rate_hz} outside [0.03, 1.5]")


def generate_eda(spec: EdaSpec) -> SampleSeries:
    """Tonic level with linear drift plus exponential-recovery phasic events."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(int(round(spec.duration * spec.fs))) / spec.fs
    x = spec.tonic_us + spec.drift_us_per_min * t / 60.0
    rise, decay = 0.7, 3.0
    for _ in range(spec.n_phasic):
        onset = rng.uniform(0.0, max(spec.duration - 5.0, 0.0))
        amp = rng.uniform(0.1, 0.5)
        dt = t - onset
        event = np.where(dt > 0, np.exp(-dt / decay) - np.exp(-dt / rise), 0.0)
        peak = event.max()
        if peak > 0:
            x = x + amp * event / peak
    return SampleSeries(data=x, fs=spec.fs)


def generate_rsp(spec: RspSpec) -> SampleSeries:
    """Breathing waveform: sinusoid at the set rate with slow depth modulation."""
    rng = np.random.default_rng(spec.seed)
    t = np.arange(int(round(spec.duration * spec.fs))) / spec.fs
    mod_phase = rng.uniform(0.0, 2 * np.pi)
    depth = spec.depth * (1.0 + 0.15 * np.sin(2 * np.pi * spec.rate_hz / 10.0 * t + mod_phase))
    return SampleSeries(data=depth * np.sin(2 * np.pi * spec.rate_hz * t), fs=spec.fs)


def _random_bursts(rng: np.random.Generator) -> ArtifactSpec:
    """One or two non-overlapping bursts inside an 8 s segment."""
    kinds = list(ArtifactKind)
    bursts = [Burst(start=float(rng.uniform(0.2, 3.2)),
                    length=float(rng.uniform(0.8, 2.4)),
                    kind=kinds[int(rng.integers(len(kinds)))],
                    amplitude=float(rng.uniform(2.0, 3.5)))]
    if rng.random() < 0.5:
        bursts.append(Burst(start=float(rng.uniform(6.0, 7.0)),
                            length=float(rng.uniform(0.6, 1.0)),
                            kind=kinds[int(rng.integers(len(kinds)))],
                            amplitude=float(rng.uniform(2.0, 3.5))))
    return ArtifactSpec(bursts=tuple(bursts))


def corpus(n_segments: int, artifact_fraction: float, seed: int = 0) -> list[LabeledSegment]:
    """Labeled 8 s / 64 Hz training segments.

    Exactly round(n_segments * artifact_fraction) segments carry bursts;
    groups cycle so every group holds both clean and corrupted segments.
    """
    if not 0.0 <= artifact_fraction <= 1.0:
        raise SpecViolation("artifact_fraction must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    n_bad = int(round(n_segments * artifact_fraction))
    corrupted = set(rng.choice(n_segments, size=n_bad, replace=False).tolist()) \
        if n_bad else set()
    segments = []
    for i in range(n_segments):
        spec = PpgSpec(fs=CORPUS_FS, duration=CORPUS_SEGMENT_S,
                       hr_bpm=float(rng.uniform(48.0, 120.0)),
                       ibi_jitter_ms=float(rng.uniform(10.0, 60.0)),
                       snr_db=float(rng.uniform(25.0, 40.0)),
                       seed=int(rng.integers(2 ** 31)))
        seg = generate_ppg(spec)
        if i in corrupted:
            seg = inject_artifacts(seg, _random_bursts(rng))
        segments.append(dataclasses.replace(seg, group=i % CORPUS_GROUPS))
    return segments


def to_adc_counts(data: np.ndarray, adc_bits: int = 12) -> np.ndarray:
    """Map signal units onto the ADC integer range (fixed span, clipped)."""
    lo, hi = ADC_SPAN
    full_scale = (1 << adc_bits) - 1
    counts = np.round((np.asarray(data, dtype=float) - lo) / (hi - lo) * full_scale)
    return np.clip(counts, 0, full_scale).astype(np.int64)


def counts_to_units(counts: np.ndarray, adc_bits: int = 12) -> np.ndarray:
    """Inverse of to_adc_counts (up to quantization)."""
    lo, hi = ADC_SPAN
    full_scale = (1 << adc_bits) - 1
    return np.asarray(counts, dtype=float) / full_scale * (hi - lo) + lo


class StreamingPpg:
    """Unbounded beat-by-beat PPG source for the live simulator.

    produce(n) returns the next n samples; beat placement is identical to
    generate_ppg with the same spec, noise depends on chunking.
    """

    def __init__(self, spec: PpgSpec):
        self._spec = spec
        # Jitter draws must replay generate_ppg's sequence exactly, so they
        # get their own stream; chunk-dependent noise draws get another.
        self._jitter_rng = np.random.default_rng(spec.seed)
        self._noise_rng = np.random.default_rng([spec.seed, 1])
        self._template, self._center = _beat_template(spec.fs)
        self._mean_ibi = 60.0 / spec.hr_bpm
        self._next_beat_s = FIRST_BEAT_S
        self._pos = 0
        self._buf = np.zeros(0)
        ref = generate_ppg(dataclasses.replace(spec, duration=10.0, snr_db=200.0))
        rms = float(np.sqrt(np.mean(ref.samples.data ** 2)))
        self._sigma = rms * 10.0 ** (-spec.snr_db / 20.0)

    def _extend(self, until: int):
        need = until - self._pos
        if need > self._buf.size:
            self._buf = np.concatenate([self._buf, np.zeros(need - self._buf.size)])
        horizon_s = until / self._spec.fs + TEMPLATE_SPAN_S[1]
        while self._next_beat_s < horizon_s:
            c = int(round(self._next_beat_s * self._spec.fs))
            lo = c - self._center - self._pos
            hi = lo + self._template.size
            if hi > self._buf.size:
                self._buf = np.concatenate([self._buf, np.zeros(hi - self._buf.size)])
            src0 = max(0, -lo)
            self._buf[lo + src0:hi] += self._template[src0:]
            ibi = self._mean_ibi + self._jitter_rng.normal(
                0.0, self._spec.ibi_jitter_ms / 1000.0)
            self._next_beat_s += max(MIN_IBI_S, ibi)

    def produce(self, n: int) -> np.ndarray:
        self._extend(self._pos + n)
        out = self._buf[:n] + self._noise_rng.normal(0.0, self._sigma, n)
        self._buf = self._buf[n:]
        self._pos += n
        return out


class StreamingEda:
    """Unbounded tonic-plus-drift skin conductance for the simulator."""

    def __init__(self, spec: EdaSpec):
        self._spec = spec
        self._rng = np.random.default_rng(spec.seed)
        self._pos = 0

    def produce(self, n: int) -> np.ndarray:
        t = (self._pos + np.arange(n)) / self._spec.fs
        self._pos += n
        drift = self._spec.drift_us_per_min * t / 60.0
        sway = 0.05 * np.sin(2 * np.pi * 0.01 * t)
        return (self._spec.tonic_us + drift + sway
                + self._rng.normal(0.0, 0.002, n))


class StreamingRsp:
    """Unbounded breathing sinusoid for the simulator."""

    def __init__(self, spec: RspSpec):
        self._spec = spec
        self._rng = np.random.default_rng(spec.seed)
        self._pos = 0

    def produce(self, n: int) -> np.ndarray:
        t = (self._pos + np.arange(n)) / self._spec.fs
        self._pos += n
        return (self._spec.depth * np.sin(2 * np.pi * self._spec.rate_hz * t)
                + self._rng.normal(0.0, 0.01, n))
