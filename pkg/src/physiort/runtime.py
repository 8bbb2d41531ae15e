"""Live session engine: transport source -> frame decoder -> {writer,
rings, metric engine, quality annotator, UI listeners}.

The writer path is lossless and synchronous with decoding; UI listeners
sit behind bounded drop-oldest queues so a slow console can never stall
acquisition. Quality labels arrive once per completed 8 s segment, so
rows are held in a small pending buffer and appended to the CSV as soon
as their segment's labels exist (or with sqi -1 at shutdown for the
unassessed tail). Live metrics run on a 130 s ring, enough for the
120 s PRV window.
"""

from __future__ import annotations

import hashlib
import math
import threading
import time
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import dsp, store, synth, wire
from .config import (AcqConfig, BiofeedbackMetric, BiofeedbackSpec, ChannelKind,
                     ExperimentConfig, Transport, dump_acq_config,
                     dump_experiment_config)
from .errors import PhysiortError
from .sqa.model import (INPUT_FS, INPUT_LEN, LABEL_GOOD, SAMPLES_PER_BIN,
                        SqaModel, forward, znorm)
from .sync import Phase

RING_SECONDS = 130.0
UI_RATE_HZ = 30.0
LISTENER_QUEUE_LIMIT = 4096

HR_WINDOW_S = 30.0
HR_STEP_S = 10.0
PRV_WINDOW_S = 120.0
PRV_STEP_S = 10.0


class TransportError(PhysiortError):
    exit_code = 3


class BadCommand(PhysiortError):
    exit_code = 2


def biofeedback_norm(value: float, spec: BiofeedbackSpec) -> float:
    """Position of value inside the configured range, clamped to [0, 1]."""
    norm = (value - spec.range_lo) / (spec.range_hi - spec.range_lo)
    return float(min(1.0, max(0.0, norm)))


class RingBuffer:
    """Fixed-capacity trailing window of a sample stream (circular cursor)."""

    def __init__(self, capacity: int):
        self._data = np.zeros(capacity)
        self._cap = capacity
        self.count = 0  # total samples ever appended

    def append(self, chunk: np.ndarray):
        chunk = np.asarray(chunk, dtype=np.float64)
        m = chunk.size
        if m >= self._cap:
            # keep the tail aligned with the cursor or last() comes back rotated
            self.count += m
            start = (self.count - self._cap) % self._cap
            tail = chunk[-self._cap:]
            k = self._cap - start
            self._data[start:] = tail[:k]
            self._data[:start] = tail[k:]
            return
        pos = self.count % self._cap
        end = pos + m
        if end <= self._cap:
            self._data[pos:end] = chunk
        else:
            split = self._cap - pos
            self._data[pos:] = chunk[:split]
            self._data[:end - self._cap] = chunk[split:]
        self.count += m

    def last(self, n: int) -> np.ndarray:
        n = min(n, self.count, self._cap)
        if n == 0:
            return np.zeros(0)
        start = (self.count - n) % self._cap
        end = start + n
        if end <= self._cap:
            return self._data[start:end].copy()
        return np.concatenate([self._data[start:], self._data[:end - self._cap]])


class SimulatorSource:
    """Synthesizes wire-grammar bytes for the configured channels.

    Paced mode sleeps to stay at real time; unpaced returns chunks as
    fast as the caller asks (offline tests, replay-to-file).
    """

    def __init__(self, exp: ExperimentConfig, acq: AcqConfig, *,
                 hr_bpm: float = 72.0, ibi_jitter_ms: float = 30.0,
                 snr_db: float = 20.0, seed: int = 0, paced: bool = True):
        fs = acq.sampling_rate
        self.fs = fs
        self.adc_bits = acq.adc_bits
        self.paced = paced
        self._chunk = max(1, int(round(fs / 20.0)))
        self._width = max(ch.adc_index for ch in exp.channels) + 1
        self._producers: dict[int, object] = {}
        for i, ch in enumerate(exp.channels):
            if ch.kind is ChannelKind.PPG:
                gen = synth.StreamingPpg(synth.PpgSpec(
                    fs=fs, duration=10.0, hr_bpm=hr_bpm,
                    ibi_jitter_ms=ibi_jitter_ms, snr_db=snr_db, seed=seed + i))
            elif ch.kind is ChannelKind.EDA:
                gen = synth.StreamingEda(synth.EdaSpec(
                    fs=fs, duration=10.0, tonic_us=1.5, seed=seed + i))
            else:
                gen = synth.StreamingRsp(synth.RspSpec(
                    fs=fs, duration=10.0, seed=seed + i))
            self._producers[ch.adc_index] = gen
        self._emitted = 0
        self._t0 = time.monotonic()

    def read(self) -> bytes:
        n = self._chunk
        if self.paced:
            due = self._t0 + (self._emitted + n) / self.fs
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        cols = []
        for idx in range(self._width):
            gen = self._producers.get(idx)
            if gen is None:
                cols.append(np.zeros(n, dtype=np.int64))
            else:
                cols.append(synth.to_adc_counts(gen.produce(n), self.adc_bits))
        self._emitted += n
        lines = []
        for row in zip(*cols):
            lines.append(wire.encode_frame(
                wire.SampleFrame(values=tuple(int(v) for v in row)), self.adc_bits))
        return b"".join(lines)

    def close(self):
        pass


class ReplaySource:
    """Re-emits a recorded session over the wire grammar."""

    def __init__(self, path: str, adc_bits: int = 12, paced: bool = False,
                 chunk_frames: int = 32):
        self._rec = store.read_recording(path)
        self.fs = self._rec.header.fs
        self.adc_bits = adc_bits
        self.paced = paced
        self._chunk = chunk_frames
        self._pos = 0
        self._t0 = time.monotonic()

    def read(self) -> bytes:
        if self._pos >= self._rec.n_samples:
            return b""
        end = min(self._pos + self._chunk, self._rec.n_samples)
        if self.paced:
            due = self._t0 + end / self.fs
            delay = due - time.monotonic()
            if delay > 0:
                time.sleep(delay)
        out = []
        top = wire.adc_max(self.adc_bits)
        for row in self._rec.values[self._pos:end]:
            vals = tuple(int(min(max(v, 0), top)) for v in row)
            out.append(wire.encode_frame(wire.SampleFrame(values=vals), self.adc_bits))
        self._pos = end
        return b"".join(out)

    def close(self):
        pass


class SerialSource:
    """Bytes from a serial device (optional pyserial dependency)."""

    def __init__(self, port: str, baudrate: int, fs: float):
        try:
            import serial
        except ImportError as exc:
            raise TransportError(
                "serial transport needs the pyserial extra installed") from exc
        try:
            self._ser = serial.Serial(port, baudrate=baudrate, timeout=0.05)
        except Exception as exc:
            raise TransportError(f"cannot open serial port {port}: {exc}") from exc
        self.fs = fs

    def read(self) -> bytes:
        waiting = self._ser.in_waiting
        return self._ser.read(waiting if waiting else 1)

    def close(self):
        self._ser.close()


def build_source(exp: ExperimentConfig, acq: AcqConfig, *, paced: bool = True,
                 serial_port: str | None = None, replay_path: str | None = None,
                 **sim_kwargs):
    if acq.transport is Transport.SIMULATOR:
        return SimulatorSource(exp, acq, paced=paced, **sim_kwargs)
    if acq.transport is Transport.REPLAY:
        if not replay_path:
            raise TransportError("replay transport needs a session file path")
        return ReplaySource(replay_path, adc_bits=acq.adc_bits, paced=paced)
    if not serial_port:
        raise TransportError("serial transport needs a device path")
    return SerialSource(serial_port, acq.baudrate, acq.sampling_rate)


@dataclass
class _MetricEngine:
    metric: dsp.Metric
    window_s: float
    step_s: float
    next_due: int  # in samples


class SessionRuntime:
    """One node's acquisition pipeline. Single recording at a time.

    Listeners receive event dicts (status, samples, sqi, metric,
    biofeedback) from the pump thread through bounded queues; drain with
    poll_events(). Control methods are thread-safe.
    """

    def __init__(self, exp: ExperimentConfig, acq: AcqConfig, participant_id: str,
                 data_dir: str | None = None, sqa_model: SqaModel | None = None,
                 source_factory=None):
        self.exp = exp
        self.acq = acq
        self.participant_id = store.sanitize_id(participant_id)
        self.data_dir = data_dir if data_dir is not None else exp.data_dir
        self.model = sqa_model
        self._source_factory = source_factory or (
            lambda: build_source(exp, acq, paced=True))
        self.fs = acq.sampling_rate
        self.phase = Phase.IDLE
        self.condition: str | None = None
        self.session_id: str | None = None
        self.path: str | None = None
        self.receipt_ns: int | None = None
        self._digest = hashlib.sha256(
            (dump_experiment_config(exp) + dump_acq_config(acq)).encode()).hexdigest()[:12]
        self._listeners: list[deque] = []
        self._lock = threading.RLock()
        self._thread: threading.Thread | None = None
        self._stop_requested = threading.Event()
        self._finalized = True
        self._mark_code = 0
        self._decoder = None
        self._n_frames = 0
        ppg = [ch for ch in exp.channels if ch.kind is ChannelKind.PPG]
        self._sqa_channel = ppg[0].name if ppg else None
        self._plot_decim = max(1, math.ceil(self.fs / UI_RATE_HZ))

    # -- listeners ---------------------------------------------------------

    def add_listener(self) -> deque:
        q: deque = deque(maxlen=LISTENER_QUEUE_LIMIT)  # drop-oldest by design
        with self._lock:
            self._listeners.append(q)
        return q

    def remove_listener(self, q: deque):
        with self._lock:
            if q in self._listeners:
                self._listeners.remove(q)

    def _emit(self, event: dict):
        with self._lock:
            listeners = list(self._listeners)
        for q in listeners:
            q.append(event)

    def status_event(self) -> dict:
        return {"type": "status", "phase": self.phase.value,
                "condition": self.condition, "session_id": self.session_id,
                "participant_id": self.participant_id,
                "elapsed_s": (self._n_frames / self.fs if self.phase is Phase.RECORDING
                              else 0.0),
                "frames_ok": getattr(self._decoder, "frames_ok", 0),
                "frames_dropped": getattr(self._decoder, "frames_dropped", 0)}

    # -- session control ---------------------------------------------------

    def arm(self, condition: str, duration_s: float | None,
            session_id: str | None = None):
        with self._lock:
            if self.phase not in (Phase.IDLE, Phase.STOPPED):
                raise BadCommand(f"cannot arm while {self.phase.value}")
            self.condition = condition
            self.session_id = session_id or (
                f"{self.participant_id}-{condition}-{time.strftime('%Y%m%dT%H%M%S')}")
            self.path = store.session_layout(self.data_dir, self.participant_id,
                                             condition)
            header = store.RecordingHeader(
                session_id=self.session_id, participant_id=self.participant_id,
                condition=condition, fs=self.fs,
                channels=self.exp.channel_names(),
                started_utc=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                started_mono_ns=time.monotonic_ns(), config_digest=self._digest)
            self._writer = store.open_writer(self.path, header)
            self._finalized = False
            self._decoder = wire.FrameDecoder(
                expected_channels=max(ch.adc_index for ch in self.exp.channels) + 1,
                adc_bits=self.acq.adc_bits)
            self._source = self._source_factory()
            cap = int(RING_SECONDS * self.fs)
            self._raw_rings = {ch.name: RingBuffer(cap) for ch in self.exp.channels}
            self._filt_ring = RingBuffer(cap)
            self._causal = (dsp.CausalFilter(dsp.design_bandpass(self.fs))
                            if self._sqa_channel else None)
            self._n_frames = 0
            self._target = int(round(duration_s * self.fs)) if duration_s else None
            self._pending: deque = deque()  # rows awaiting a quality label
            self._sqa_raw: list[float] = []
            self._bin_labels: list[int] = []
            self._next_segment = 0
            self._mark_code = 0
            self._engines: list[_MetricEngine] = []
            if self._sqa_channel:
                self._engines.append(_MetricEngine(dsp.Metric.HR_BPM, HR_WINDOW_S,
                                                   HR_STEP_S,
                                                   int(HR_WINDOW_S * self.fs)))
                self._engines.append(_MetricEngine(dsp.Metric.PSQI, HR_WINDOW_S,
                                                   HR_STEP_S,
                                                   int(HR_WINDOW_S * self.fs)))
                self._engines.append(_MetricEngine(dsp.Metric.PNN50, PRV_WINDOW_S,
                                                   PRV_STEP_S,
                                                   int(PRV_WINDOW_S * self.fs)))
            for kind, metric in ((ChannelKind.RSP, dsp.Metric.RESP_RATE),
                                 (ChannelKind.EDA, dsp.Metric.EDA_LEVEL)):
                if any(ch.kind is kind for ch in self.exp.channels):
                    self._engines.append(_MetricEngine(metric, HR_WINDOW_S, HR_STEP_S,
                                                       int(HR_WINDOW_S * self.fs)))
            bf = self.exp.biofeedback
            self._bf_engine = None
            if bf is not None:
                metric = {BiofeedbackMetric.HR: dsp.Metric.HR_BPM,
                          BiofeedbackMetric.PNN50: dsp.Metric.PNN50,
                          BiofeedbackMetric.RESP_RATE: dsp.Metric.RESP_RATE,
                          BiofeedbackMetric.EDA_LEVEL: dsp.Metric.EDA_LEVEL}[bf.metric]
                self._bf_engine = _MetricEngine(metric, bf.window_seconds,
                                                bf.step_seconds,
                                                int(bf.window_seconds * self.fs))
            self._stop_requested.clear()
            self.phase = Phase.ARMED
        self._emit(self.status_event())

    def start(self, threaded: bool = True):
        with self._lock:
            if self.phase is not Phase.ARMED:
                raise BadCommand(f"cannot start while {self.phase.value}")
            self.phase = Phase.RECORDING
            self.receipt_ns = time.monotonic_ns()
        self._emit(self.status_event())
        if threaded:
            self._thread = threading.Thread(target=self._pump_loop, daemon=True)
            self._thread.start()

    def request_stop(self):
        self._stop_requested.set()

    def wait(self, timeout: float | None = None) -> bool:
        if self._thread is None:
            return True
        self._thread.join(timeout)
        return not self._thread.is_alive()

    def stop(self, timeout: float = 10.0) -> str | None:
        """Request stop, wait for the pump, finalize. Returns the path."""
        self.request_stop()
        if self._thread is not None:
            self._thread.join(timeout)
            self._thread = None
        self._finish()
        return self.path

    def mark_on(self, code: int) -> int:
        if code <= 0:
            raise BadCommand("mark code must be a positive integer")
        with self._lock:
            if self.phase is not Phase.RECORDING:
                raise BadCommand("marks only apply while recording")
            self._mark_code = int(code)
            return self._n_frames

    def mark_off(self) -> int:
        with self._lock:
            self._mark_code = 0
            return self._n_frames

    # -- data path ---------------------------------------------------------

    def _pump_loop(self):
        try:
            while not self._stop_requested.is_set():
                data = self._source.read()
                if data == b"" and isinstance(self._source, ReplaySource):
                    break
                self.ingest(data)
        except Exception as exc:  # surface transport failures to listeners
            self._emit({"type": "error", "message": str(exc)})
        finally:
            self._finish()

    def ingest(self, data: bytes):
        """Feed raw transport bytes; safe to call directly in unpaced tests."""
        for frame in self._decoder.feed(data):
            if self._stop_requested.is_set():
                break
            self._process_frame(frame)

    def _process_frame(self, frame: wire.SampleFrame):
        idx = self._n_frames
        values = [frame.values[ch.adc_index] for ch in self.exp.channels]
        with self._lock:
            code = self._mark_code
        self._pending.append((values, code))
        self._n_frames += 1

        filtered_val = None
        for ch, v in zip(self.exp.channels, values):
            self._raw_rings[ch.name].append(np.array([v], dtype=float))
            if ch.name == self._sqa_channel:
                filtered_val = self._causal.process(np.array([v], dtype=float))[0]
                self._filt_ring.append(np.array([filtered_val]))
                self._sqa_raw.append(float(v))

        if idx % self._plot_decim == 0:
            t = idx / self.fs
            for name in self.exp.plot_channels:
                value = (filtered_val
                         if name == self._sqa_channel and filtered_val is not None
                         else float(dict(zip(self.exp.channel_names(), values))[name]))
                self._emit({"type": "samples", "channel": name, "t": t,
                            "value": float(value)})

        self._assess_segments()
        self._flush_ready()
        self._run_metrics()

        if self._target is not None and self._n_frames >= self._target:
            self._stop_requested.set()

    # quality: infer each completed non-overlapping 8 s segment at 64 Hz
    def _assess_segments(self):
        if self.model is None or self._sqa_channel is None:
            return
        n_raw = len(self._sqa_raw)
        n64 = int(n_raw / self.fs * INPUT_FS)
        while (self._next_segment + 1) * INPUT_LEN <= n64:
            s = self._next_segment
            t_lo = s * INPUT_LEN / INPUT_FS
            t_hi = (s + 1) * INPUT_LEN / INPUT_FS
            if self.fs == INPUT_FS:
                seg = np.array(self._sqa_raw[s * INPUT_LEN:(s + 1) * INPUT_LEN])
            else:
                i_lo = max(0, int(t_lo * self.fs) - 2)
                i_hi = min(n_raw, int(np.ceil(t_hi * self.fs)) + 2)
                t_raw = np.arange(i_lo, i_hi) / self.fs
                grid = (s * INPUT_LEN + np.arange(INPUT_LEN)) / INPUT_FS
                seg = np.interp(grid, t_raw, np.array(self._sqa_raw[i_lo:i_hi]))
            qv, _ = forward(self.model, znorm(seg))
            labels = qv.labels.astype(int).tolist()
            self._bin_labels.extend(labels)
            self._next_segment += 1
            self._emit({"type": "sqi", "segment_index": s, "start_s": t_lo,
                        "bins": labels})

    def _row_bin(self, idx: int) -> int:
        return int(idx / self.fs * INPUT_FS) // SAMPLES_PER_BIN

    def _flush_ready(self, final: bool = False):
        assess = self.model is not None and self._sqa_channel is not None
        while self._pending:
            idx = self._writer.next_sample_idx
            if assess and not final:
                if self._row_bin(idx) >= len(self._bin_labels):
                    break
            values, code = self._pending.popleft()
            if assess and self._row_bin(idx) < len(self._bin_labels):
                label = self._bin_labels[self._row_bin(idx)]
                sqi = store.SQI_GOOD if label == LABEL_GOOD else store.SQI_BAD
            else:
                sqi = store.SQI_UNASSESSED
            self._writer.append(values, sqi=sqi, event_code=code)

    def _compute_metric(self, metric: dsp.Metric, window_s: float,
                        start_t: float, t: float):
        """Windowed metric over the trailing ring data; (value, n_beats)."""
        win = int(window_s * self.fs)
        if metric in (dsp.Metric.HR_BPM, dsp.Metric.PNN50):
            series = dsp.SampleSeries(data=self._filt_ring.last(win),
                                      fs=self.fs, t0=start_t)
            try:
                ib = dsp.detect_peaks(series)
            except dsp.TooShort:
                return None, None
            ibis = dsp.ibis_in_window(ib, start_t, t)
            mw = (dsp.hr_from_window(ibis, start_t, window_s)
                  if metric is dsp.Metric.HR_BPM
                  else dsp.pnn50(ibis, start_t, window_s))
            return mw.value, mw.n_beats
        if metric is dsp.Metric.PSQI:
            ring = self._raw_rings[self._sqa_channel]
            mw = dsp.psqi(dsp.SampleSeries(data=ring.last(win), fs=self.fs,
                                           t0=start_t))
            return mw.value, None
        kind = (ChannelKind.RSP if metric is dsp.Metric.RESP_RATE
                else ChannelKind.EDA)
        name = next(ch.name for ch in self.exp.channels if ch.kind is kind)
        series = dsp.SampleSeries(data=self._raw_rings[name].last(win),
                                  fs=self.fs, t0=start_t)
        mw = (dsp.resp_rate_from_window(series)
              if metric is dsp.Metric.RESP_RATE
              else dsp.eda_level_from_window(series))
        return mw.value, None

    def _run_metrics(self):
        n = self._n_frames
        t = n / self.fs
        for eng in self._engines:
            if n < eng.next_due:
                continue
            eng.next_due += int(eng.step_s * self.fs)
            start_t = t - eng.window_s
            value, n_beats = self._compute_metric(eng.metric, eng.window_s,
                                                  start_t, t)
            self._emit({"type": "metric", "metric": eng.metric.value,
                        "window_start_s": start_t, "window_s": eng.window_s,
                        "value": value, "n_beats": n_beats})
        # biofeedback runs on its own window/step schedule
        bf, eng = self.exp.biofeedback, self._bf_engine
        if eng is not None and n >= eng.next_due:
            eng.next_due += int(eng.step_s * self.fs)
            start_t = t - eng.window_s
            value, _ = self._compute_metric(eng.metric, eng.window_s, start_t, t)
            self._emit({"type": "biofeedback", "metric": eng.metric.value,
                        "value": value,
                        "norm": None if value is None else biofeedback_norm(value, bf),
                        "t": t})

    def _finish(self):
        with self._lock:
            if self._finalized:
                return
            self._finalized = True
        self._flush_ready(final=True)
        self._writer.finalize()
        self._source.close()
        with self._lock:
            self.phase = Phase.IDLE
        self._emit(self.status_event())

    def run_condition(self, condition: str, duration_s: float | None,
                      session_id: str | None = None) -> str:
        """Arm, record (blocking), finalize. Returns the session path."""
        self.arm(condition, duration_s, session_id=session_id)
        self.start(threaded=True)
        self._thread.join()
        self._thread = None
        self._finish()
        return self.path
