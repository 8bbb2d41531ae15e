"""Signal-processing chain: band-pass filtering, peak detection, IBI
extraction and the windowed metrics (HR, pNN50, pSQI).

The pulse band-pass follows the analysis protocol: 3rd-order Butterworth,
0.7-4.0 Hz, realized as stable second-order sections. Causal filtering is
chunk-invariant (for live streaming); the zero-phase variant runs the same
cascade forward-backward over an odd-symmetric extension (for offline
analysis).

pSQI is the relative-power signal quality index: periodogram power in the
pulse band [1.0, 2.25] Hz over power in [0.0, 8.0] Hz, as a percentage.
The periodogram is a plain rectangular-window DFT of the mean-removed
window; the band edges and the estimator are recorded in
``PSQI_METADATA`` so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import signal as _sig
from scipy import ndimage as _ndi

from .errors import PhysiortError


class NyquistViolation(PhysiortError):
    exit_code = 2


class TooShort(PhysiortError):
    exit_code = 2


class WindowTooLong(PhysiortError):
    exit_code = 2


PULSE_BAND_HZ = (0.7, 4.0)
PULSE_FILTER_ORDER = 3

# pSQI bands per the relative-power SQI definition; computed on raw
# (unfiltered) windows after mean removal, rectangular window periodogram.
PSQI_NUM_BAND_HZ = (1.0, 2.25)
PSQI_DEN_BAND_HZ = (0.0, 8.0)
PSQI_METADATA = {
    "estimator": "rectangular-window periodogram (plain DFT magnitude squared)",
    "input": "raw window, mean removed",
    "numerator_band_hz": list(PSQI_NUM_BAND_HZ),
    "denominator_band_hz": list(PSQI_DEN_BAND_HZ),
}

# Physiological validity range for inter-beat intervals: 220..30 bpm.
IBI_MIN_MS = 273.0
IBI_MAX_MS = 2000.0
HR_RANGE_BPM = (30.0, 220.0)

PEAK_REFRACTORY_S = 0.27
PEAK_THRESHOLD_FRACTION = 0.5
PEAK_PERCENTILE = 75
PEAK_PERCENTILE_WINDOW_S = 3.0
MIN_DETECT_SECONDS = 3.0

HR_MIN_BEATS = 4  # IBIs required before a window reports HR
PNN50_MIN_IBIS = 2
PNN50_THRESHOLD_MS = 50.0


class Metric(str, Enum):
    HR_BPM = "HR_BPM"
    PNN50 = "PNN50"
    PSQI = "PSQI"
    RESP_RATE = "RESP_RATE"
    EDA_LEVEL = "EDA_LEVEL"


@dataclass
class SampleSeries:
    """Uniformly sampled real-valued signal with session-relative start."""

    data: np.ndarray
    fs: float
    t0: float = 0.0

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        if self.data.ndim != 1:
            raise ValueError("data must be one-dimensional")
        if self.data.size and not np.all(np.isfinite(self.data)):
            raise ValueError("data must be finite")

    @property
    def duration_s(self) -> float:
        return self.data.size / self.fs

    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.data.size) / self.fs


@dataclass(frozen=True)
class BiquadSection:
    b0: float
    b1: float
    b2: float
    a1: float
    a2: float


@dataclass(frozen=True)
class BiquadCascade:
    sections: tuple[BiquadSection, ...]
    order: int
    band_hz: tuple[float, float]
    fs: float

    def sos(self) -> np.ndarray:
        return np.array([[s.b0, s.b1, s.b2, 1.0, s.a1, s.a2] for s in self.sections])

    def magnitude(self, freqs_hz) -> np.ndarray:
        """|H(e^{j 2 pi f / fs})| of the realized cascade."""
        w = 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.fs
        _, h = _sig.sosfreqz(self.sos(), worN=w)
        return np.abs(h)


@dataclass(frozen=True)
class IbiSeries:
    """Accepted pulse peaks and their validated inter-beat intervals.

    ``ibis_ms[i]`` is the interval ending at ``peak_times[i+1]``. After a
    gap longer than the physiological maximum, intervals resume from the
    first peak past the gap; that peak itself is omitted from the output
    (its interval was invalid), so the series never contains an
    out-of-range value.
    """

    peak_times: np.ndarray
    ibis_ms: np.ndarray


@dataclass(frozen=True)
class MetricWindow:
    start: float
    length: float
    metric: Metric
    value: float | None
    n_beats: int | None = None


def design_bandpass(fs: float, band_hz: tuple[float, float] = PULSE_BAND_HZ,
                    order: int = PULSE_FILTER_ORDER) -> BiquadCascade:
    """Butterworth band-pass as second-order sections.

    The upper band edge must sit below 80% of Nyquist; nearer the edge the
    bilinear design warps away from the analytic response.
    """
    lo, hi = band_hz
    if hi >= 0.4 * fs:
        raise NyquistViolation(
            f"band edge {hi} Hz too close to Nyquist at fs={fs} (needs fs > {hi / 0.4:g})")
    sos = _sig.butter(order, [lo, hi], btype="bandpass", fs=fs, output="sos")
    sections = []
    for row in sos:
        b0, b1, b2, a0, a1, a2 = row
        sections.append(BiquadSection(b0=b0 / a0, b1=b1 / a0, b2=b2 / a0,
                                      a1=a1 / a0, a2=a2 / a0))
        poles = np.roots([1.0, a1 / a0, a2 / a0])
        if np.any(np.abs(poles) >= 1.0):
            raise AssertionError("unstable section from design")
    return BiquadCascade(sections=tuple(sections), order=order,
                         band_hz=(lo, hi), fs=float(fs))


class CausalFilter:
    """Stateful streaming form of a cascade. Single-owner.

    Chunk-invariant: filtering a stream in any partition yields exactly
    the samples of filtering it whole. State starts at the step steady
    state of the first sample, so a raw stream's ADC offset does not ring
    through the cascade as a giant start-up transient.
    """

    def __init__(self, cascade: BiquadCascade):
        self._sos = cascade.sos()
        self._zi: np.ndarray | None = None

    def process(self, chunk: np.ndarray) -> np.ndarray:
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.size == 0:
            return chunk
        if self._zi is None:
            self._zi = _sig.sosfilt_zi(self._sos) * chunk[0]
        out, self._zi = _sig.sosfilt(self._sos, chunk, zi=self._zi)
        return out

    def reset(self):
        self._zi = None


def filter_causal(cascade: BiquadCascade, x: SampleSeries) -> SampleSeries:
    """One-shot causal filtering (settled at the first sample's level)."""
    return SampleSeries(data=CausalFilter(cascade).process(x.data), fs=x.fs, t0=x.t0)


def filter_zero_phase(cascade: BiquadCascade, x: SampleSeries) -> SampleSeries:
    """Forward-backward filtering; no phase shift, output length = input."""
    n = x.data.size
    if n == 0:
        return SampleSeries(data=x.data.copy(), fs=x.fs, t0=x.t0)
    # Odd-symmetric extension long enough for the slow low-edge transient.
    pad = int(min(n - 1, round(3.0 * x.fs / cascade.band_hz[0])))
    if pad > 0:
        head = 2 * x.data[0] - x.data[pad:0:-1]
        tail = 2 * x.data[-1] - x.data[-2:-pad - 2:-1]
        ext = np.concatenate([head, x.data, tail])
    else:
        ext = x.data
    sos = cascade.sos()
    y = _sig.sosfilt(sos, ext)
    y = _sig.sosfilt(sos, y[::-1])[::-1]
    if pad > 0:
        y = y[pad:pad + n]
    return SampleSeries(data=y, fs=x.fs, t0=x.t0)


def _rolling_percentile(mag: np.ndarray, fs: float) -> np.ndarray:
    # Trailing window: a live stream has no future, and during the causal
    # filter's warm-up a centered window would hold ramping beats to the
    # amplitude of the steady ones that follow.
    size = int(round(PEAK_PERCENTILE_WINDOW_S * fs))
    size = max(3, size | 1)
    return _ndi.percentile_filter(mag, PEAK_PERCENTILE, size=size,
                                  mode="nearest", origin=size // 2)


def _envelope(data: np.ndarray, fs: float) -> np.ndarray:
    """Amplitude envelope via the analytic signal, edges reflected so the
    transform's end discontinuities do not distort the first/last beats."""
    pad = min(int(round(2.0 * fs)), data.size - 1)
    if pad <= 0:
        return np.abs(_sig.hilbert(data))
    ext = np.concatenate([data[pad:0:-1], data, data[-2:-pad - 2:-1]])
    return np.abs(_sig.hilbert(ext))[pad:pad + data.size]


def detect_peaks(x: SampleSeries) -> IbiSeries:
    """Pulse peaks of a band-passed signal.

    Local maxima above an adaptive threshold (half the rolling 75th
    percentile of the amplitude envelope over 3 s), refractory 0.27 s
    (larger peak wins); intervals outside [273, 2000] ms are discarded
    with their right peak. Peak times are refined to sub-sample precision
    so IBI statistics are not quantized to the sample grid.
    """
    n = x.data.size
    if n / x.fs < MIN_DETECT_SECONDS:
        raise TooShort(f"need at least {MIN_DETECT_SECONDS} s of data")
    data = x.data
    # |x| underestimates beat amplitude between pulses at low heart rates,
    # letting the dicrotic ripple over the threshold; the analytic envelope
    # tracks the per-beat amplitude instead.
    threshold = PEAK_THRESHOLD_FRACTION * _rolling_percentile(_envelope(data, x.fs), x.fs)

    interior = np.arange(1, n - 1)
    is_max = (data[interior] > data[interior - 1]) & (data[interior] >= data[interior + 1])
    cand = interior[is_max & (data[interior] > threshold[interior])]

    # Refractory: greedy by amplitude so the dominant peak of a beat wins.
    refractory = int(round(PEAK_REFRACTORY_S * x.fs))
    accepted: list[int] = []
    taken = np.zeros(n, dtype=bool)
    for idx in cand[np.argsort(data[cand])[::-1]]:
        lo = max(0, idx - refractory)
        if not taken[lo:idx + refractory + 1].any():
            accepted.append(int(idx))
            taken[idx] = True
    accepted.sort()

    peak_times: list[float] = []
    ibis_ms: list[float] = []
    anchor: float | None = None
    for idx in accepted:
        # Parabolic refinement around the sample maximum: without it every
        # IBI is a multiple of 1/fs and pNN50's 50 ms threshold lands
        # between grid points (3 samples = 46.9 ms, 4 = 62.5 ms at 64 Hz).
        y0, y1, y2 = data[idx - 1], data[idx], data[idx + 1]
        denom = y0 - 2.0 * y1 + y2
        delta = 0.5 * (y0 - y2) / denom if denom < 0 else 0.0
        t = x.t0 + (idx + float(np.clip(delta, -0.5, 0.5))) / x.fs
        if anchor is None:
            peak_times.append(t)
            anchor = t
            continue
        ibi = (t - anchor) * 1000.0
        if ibi < IBI_MIN_MS:
            continue  # spurious double detection: drop this peak
        if ibi > IBI_MAX_MS:
            anchor = t  # gap: interval and its right peak are discarded
            continue
        peak_times.append(t)
        ibis_ms.append(ibi)
        anchor = t
    return IbiSeries(peak_times=np.array(peak_times), ibis_ms=np.array(ibis_ms))


def ibis_in_window(ib: IbiSeries, start_s: float, end_s: float) -> np.ndarray:
    """IBIs whose ending peak falls in [start_s, end_s)."""
    if ib.ibis_ms.size == 0:
        return ib.ibis_ms
    end_times = ib.peak_times[1:]
    mask = (end_times >= start_s) & (end_times < end_s)
    return ib.ibis_ms[mask]


def hr_from_window(ibis_ms: np.ndarray, start: float, length: float) -> MetricWindow:
    """Mean heart rate over a window; absent below the beat minimum."""
    ibis_ms = np.asarray(ibis_ms, dtype=float)
    if ibis_ms.size < HR_MIN_BEATS:
        return MetricWindow(start=start, length=length, metric=Metric.HR_BPM,
                            value=None, n_beats=int(ibis_ms.size))
    hr = 60000.0 / float(np.mean(ibis_ms))
    return MetricWindow(start=start, length=length, metric=Metric.HR_BPM,
                        value=hr, n_beats=int(ibis_ms.size))


def pnn50(ibis_ms: np.ndarray, start: float, length: float) -> MetricWindow:
    """Percentage of successive IBI pairs differing by more than 50 ms."""
    ibis_ms = np.asarray(ibis_ms, dtype=float)
    if ibis_ms.size < PNN50_MIN_IBIS:
        return MetricWindow(start=start, length=length, metric=Metric.PNN50,
                            value=None, n_beats=int(ibis_ms.size))
    diffs = np.abs(np.diff(ibis_ms))
    value = 100.0 * float(np.count_nonzero(diffs > PNN50_THRESHOLD_MS)) / diffs.size
    return MetricWindow(start=start, length=length, metric=Metric.PNN50,
                        value=value, n_beats=int(ibis_ms.size))


def psqi(window: SampleSeries) -> MetricWindow:
    """Relative-power SQI of one raw window, in percent."""
    # A constant window carries no spectral information; report absent
    # (mean removal alone can leave rounding residue in the denominator).
    if window.data.size == 0 or np.ptp(window.data) == 0.0:
        return MetricWindow(start=window.t0, length=window.duration_s,
                            metric=Metric.PSQI, value=None)
    x = window.data - np.mean(window.data)
    n = x.size
    spectrum = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(n, d=1.0 / window.fs)
    num_mask = (freqs >= PSQI_NUM_BAND_HZ[0]) & (freqs <= PSQI_NUM_BAND_HZ[1])
    den_mask = (freqs >= PSQI_DEN_BAND_HZ[0]) & (freqs <= PSQI_DEN_BAND_HZ[1])
    denominator = float(np.sum(spectrum[den_mask]))
    if denominator == 0.0:
        return MetricWindow(start=window.t0, length=window.duration_s,
                            metric=Metric.PSQI, value=None)
    value = 100.0 * float(np.sum(spectrum[num_mask])) / denominator
    return MetricWindow(start=window.t0, length=window.duration_s,
                        metric=Metric.PSQI, value=value)


def windows(n_samples: int, fs: float, win_s: float, step_s: float) -> list[tuple[int, int]]:
    """Maximal list of full [start, end) sample ranges; partial tail dropped."""
    win = int(round(win_s * fs))
    step = int(round(step_s * fs))
    if win > n_samples:
        raise WindowTooLong(f"window {win_s} s exceeds signal length {n_samples / fs:g} s")
    if step < 1:
        raise ValueError("step must cover at least one sample")
    return [(s, s + win) for s in range(0, n_samples - win + 1, step)]


def resp_rate_from_window(window: SampleSeries) -> MetricWindow:
    """Breaths per minute by zero-crossing counting of the detrended window."""
    x = window.data - np.mean(window.data)
    crossings = np.count_nonzero(np.diff(np.signbit(x)))
    value = (crossings / 2.0) / window.duration_s * 60.0
    return MetricWindow(start=window.t0, length=window.duration_s,
                        metric=Metric.RESP_RATE, value=float(value))


def eda_level_from_window(window: SampleSeries) -> MetricWindow:
    """Mean skin-conductance level over the window."""
    return MetricWindow(start=window.t0, length=window.duration_s,
                        metric=Metric.EDA_LEVEL, value=float(np.mean(window.data)))
