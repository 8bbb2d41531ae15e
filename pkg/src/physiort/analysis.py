"""Batch post-processing: recorded sessions to windowed metric tables,
redundant-channel selection by signal quality, and agreement statistics.

Metrics are computed on raw ADC counts: HR, pNN50, pSQI and respiration
rate are offset- and scale-invariant, so no calibration is needed; EDA
level is reported in counts (agreement statistics compare like units).
Channel kinds resolve from the analysis config, falling back to the
channel-name prefix (ppg_*, eda_*, rsp_*).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .config import ChannelKind, RangeViolation, SchemaViolation, _parse_json
from .dsp import Metric, SampleSeries
from .errors import PhysiortError
from .store import CorruptFile, read_recording

DEFAULT_HEALTHY_RANGES = {
    "HR_BPM": (30.0, 220.0),
    "PNN50": (0.0, 100.0),
}

DEFAULT_METRICS = {
    ChannelKind.PPG: ("HR_BPM", "PNN50"),
    ChannelKind.EDA: ("EDA_LEVEL",),
    ChannelKind.RSP: ("RESP_RATE",),
}

PSQI_THRESHOLD_DEFAULT = 40.0


class NoSessions(PhysiortError):
    exit_code = 4


class KindMismatch(PhysiortError):
    exit_code = 2


class LengthMismatch(PhysiortError):
    exit_code = 2


class DegenerateVariance(PhysiortError):
    exit_code = 2


@dataclass(frozen=True)
class AnalysisConfig:
    fs: float = 64.0
    hr_window_s: float = 30.0
    hr_step_s: float = 10.0
    prv_window_s: float = 120.0
    prv_step_s: float = 10.0
    psqi_threshold_pct: float = PSQI_THRESHOLD_DEFAULT
    metrics: dict = field(default_factory=lambda: dict(DEFAULT_METRICS))
    healthy_ranges: dict = field(default_factory=lambda: dict(DEFAULT_HEALTHY_RANGES))
    channel_kinds: dict = field(default_factory=dict)
    participant_groups: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.hr_step_s > self.hr_window_s or self.prv_step_s > self.prv_window_s:
            raise RangeViolation("step", "step must not exceed its window")
        if not 0.0 <= self.psqi_threshold_pct <= 100.0:
            raise RangeViolation("psqi_threshold_pct", "threshold must lie in [0, 100]")
        for w in (self.hr_window_s, self.hr_step_s, self.prv_window_s, self.prv_step_s):
            if w <= 0:
                raise RangeViolation("window", "windows and steps must be positive")

    def kind_of(self, channel: str) -> ChannelKind:
        if channel in self.channel_kinds:
            return ChannelKind(self.channel_kinds[channel])
        prefix = channel.split("_")[0].upper()
        try:
            return ChannelKind(prefix)
        except ValueError:
            raise KindMismatch(
                f"cannot infer kind of channel {channel!r}; set channel_kinds") from None


def load_analysis_config(document: str) -> AnalysisConfig:
    doc = _parse_json(document)
    known = {"fs", "hr_window_s", "hr_step_s", "prv_window_s", "prv_step_s",
             "psqi_threshold_pct", "metrics", "healthy_ranges", "channel_kinds",
             "participant_groups"}
    unknown = set(doc) - known
    if unknown:
        raise SchemaViolation(sorted(unknown)[0], "unknown analysis config field")
    kwargs = {}
    for key in known:
        if key not in doc:
            continue
        value = doc[key]
        if key == "metrics":
            value = {ChannelKind(k): tuple(v) for k, v in value.items()}
        elif key == "healthy_ranges":
            value = {k: (float(v[0]), float(v[1])) for k, v in value.items()}
        kwargs[key] = value
    return AnalysisConfig(**kwargs)


@dataclass(frozen=True)
class MetricRow:
    participant_id: str
    condition: str
    group: str
    window_start_s: float
    channel: str
    metric: str
    value: float | None
    quality_pct: float | None
    excluded: bool


@dataclass
class MetricsTable:
    rows: list[MetricRow]

    COLUMNS = ("participant_id", "condition", "group", "window_start_s",
               "channel", "metric", "value", "quality_pct", "excluded")

    def to_csv(self) -> str:
        out = [",".join(self.COLUMNS)]
        for r in self.rows:
            out.append(",".join([
                r.participant_id, r.condition, r.group,
                f"{r.window_start_s:g}", r.channel, r.metric,
                "" if r.value is None else f"{r.value:.6f}",
                "" if r.quality_pct is None else f"{r.quality_pct:.4f}",
                "true" if r.excluded else "false"]))
        return "\n".join(out) + "\n"


def _session_files(data_dir: str) -> list[tuple[str, str]]:
    found = []
    if os.path.isdir(data_dir):
        for participant in sorted(os.listdir(data_dir)):
            pdir = os.path.join(data_dir, participant)
            if not os.path.isdir(pdir):
                continue
            for name in sorted(os.listdir(pdir)):
                if name.endswith(".csv"):
                    found.append((participant, os.path.join(pdir, name)))
    return found


def _window_rows(cfg: AnalysisConfig, rec, channel: str, kind: ChannelKind):
    fs = rec.header.fs
    raw = SampleSeries(data=rec.channel(channel), fs=fs)
    n = raw.data.size
    metric_names = cfg.metrics.get(kind, DEFAULT_METRICS.get(kind, ()))
    rows = []
    group = cfg.participant_groups.get(rec.header.participant_id, "")

    ib = None
    filtered = None
    if kind is ChannelKind.PPG and n / fs >= dsp.MIN_DETECT_SECONDS:
        cascade = dsp.design_bandpass(fs)
        filtered = dsp.filter_zero_phase(cascade, raw)
        ib = dsp.detect_peaks(filtered)

    def quality(start: int, end: int) -> float | None:
        if kind is not ChannelKind.PPG:
            return None
        mw = dsp.psqi(SampleSeries(data=raw.data[start:end], fs=fs, t0=start / fs))
        return mw.value

    def emit(metric: str, win_s: float, step_s: float):
        try:
            spans = dsp.windows(n, fs, win_s, step_s)
        except dsp.WindowTooLong:
            return
        for start, end in spans:
            t0, t1 = start / fs, end / fs
            if metric == "HR_BPM":
                mw = dsp.hr_from_window(dsp.ibis_in_window(ib, t0, t1), t0, win_s)
            elif metric == "PNN50":
                mw = dsp.pnn50(dsp.ibis_in_window(ib, t0, t1), t0, win_s)
            elif metric == "PSQI":
                mw = dsp.psqi(SampleSeries(data=raw.data[start:end], fs=fs, t0=t0))
            elif metric == "RESP_RATE":
                mw = dsp.resp_rate_from_window(
                    SampleSeries(data=raw.data[start:end], fs=fs, t0=t0))
            elif metric == "EDA_LEVEL":
                mw = dsp.eda_level_from_window(
                    SampleSeries(data=raw.data[start:end], fs=fs, t0=t0))
            else:
                continue
            q = quality(start, end)
            lo, hi = cfg.healthy_ranges.get(metric, (-np.inf, np.inf))
            below_quality = q is not None and q < cfg.psqi_threshold_pct
            unhealthy = mw.value is None or not lo <= mw.value <= hi
            rows.append(MetricRow(
                participant_id=rec.header.participant_id,
                condition=rec.header.condition, group=group,
                window_start_s=t0, channel=channel, metric=metric,
                value=mw.value, quality_pct=q,
                excluded=below_quality or unhealthy))

    for metric in metric_names:
        if metric in ("HR_BPM", "PNN50") and ib is None:
            continue
        if metric == "PNN50":
            emit(metric, cfg.prv_window_s, cfg.prv_step_s)
        elif metric in ("HR_BPM", "PSQI", "RESP_RATE", "EDA_LEVEL"):
            emit(metric, cfg.hr_window_s, cfg.hr_step_s)
    return rows


def batch_process(cfg: AnalysisConfig, data_dir: str):
    """Process every session under data_dir into one long-format table.

    Returns (MetricsTable, manifest). Corrupt files are recorded in the
    manifest and skipped; an empty directory is an error.
    """
    files = _session_files(data_dir)
    if not files:
        raise NoSessions(f"no session files under {data_dir!r}")
    rows: list[MetricRow] = []
    errors = []
    processed = []
    for participant, path in files:
        try:
            rec = read_recording(path)
        except CorruptFile as exc:
            errors.append({"file": path, "error": str(exc)})
            continue
        processed.append(path)
        for channel in rec.header.channels:
            kind = cfg.kind_of(channel)
            rows.extend(_window_rows(cfg, rec, channel, kind))
    rows.sort(key=lambda r: (r.participant_id, r.condition, r.window_start_s,
                             r.channel, r.metric))
    table = MetricsTable(rows=rows)
    manifest = {
        "config": {
            "fs": cfg.fs, "hr_window_s": cfg.hr_window_s, "hr_step_s": cfg.hr_step_s,
            "prv_window_s": cfg.prv_window_s, "prv_step_s": cfg.prv_step_s,
            "psqi_threshold_pct": cfg.psqi_threshold_pct,
        },
        "files": processed,
        "errors": errors,
        "n_rows": len(rows),
        "n_excluded": sum(r.excluded for r in rows),
    }
    return table, manifest


def select_best_channel(channels: list[tuple[str, ChannelKind, list]],
                        threshold_pct: float = PSQI_THRESHOLD_DEFAULT) -> list[str | None]:
    """Per window, the channel with the highest pSQI; ties go to the first
    declared; None where every channel falls below the threshold."""
    if len(channels) < 2:
        raise KindMismatch("channel selection needs at least two channels")
    kinds = {kind for _, kind, _ in channels}
    if len(kinds) != 1:
        raise KindMismatch(f"channels must share one kind, got {sorted(k.value for k in kinds)}")
    lengths = {len(q) for _, _, q in channels}
    if len(lengths) != 1:
        raise LengthMismatch("per-channel quality lists must align")
    n = lengths.pop()
    choice: list[str | None] = []
    for i in range(n):
        best_name = None
        best_q = -np.inf
        for name, _, qualities in channels:
            q = qualities[i]
            if q is not None and q > best_q:
                best_name, best_q = name, q
        choice.append(best_name if best_q >= threshold_pct else None)
    return choice


def paired_exclusion(ref_quality, a, b, threshold_pct: float = PSQI_THRESHOLD_DEFAULT):
    """Drop every aligned pair whose reference-window quality is below the
    threshold. Returns (a_kept, b_kept) as arrays."""
    ref_quality = np.asarray(ref_quality, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if not (ref_quality.size == a.size == b.size):
        raise LengthMismatch(
            f"lengths differ: {ref_quality.size}, {a.size}, {b.size}")
    keep = ref_quality >= threshold_pct
    return a[keep], b[keep]


@dataclass(frozen=True)
class BlandAltman:
    mean_diff: float
    loa_low: float | None
    loa_high: float | None


@dataclass(frozen=True)
class AgreementStats:
    rmse: float
    mae: float
    sd_error: float | None
    pearson_r: float | None
    bland_altman: BlandAltman
    n: int


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    """Standard product-moment correlation; degenerate variance raises."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    da = a - a.mean()
    db = b - b.mean()
    denom = np.sqrt(np.sum(da * da) * np.sum(db * db))
    if denom == 0.0:
        raise DegenerateVariance("correlation undefined for constant input")
    return float(np.sum(da * db) / denom)


def agreement(a, b) -> AgreementStats:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        raise LengthMismatch("agreement needs at least one pair")
    diff = a - b
    rmse = float(np.sqrt(np.mean(diff ** 2)))
    mae = float(np.mean(np.abs(diff)))
    mean_diff = float(np.mean(diff))
    if a.size >= 2:
        sd = float(np.std(diff, ddof=1))
        loa_low = mean_diff - 1.96 * sd
        loa_high = mean_diff + 1.96 * sd
    else:
        sd = None
        loa_low = loa_high = None
    try:
        r = pearson(a, b)
    except DegenerateVariance:
        r = None
    return AgreementStats(rmse=rmse, mae=mae, sd_error=sd, pearson_r=r,
                          bland_altman=BlandAltman(mean_diff=mean_diff,
                                                   loa_low=loa_low,
                                                   loa_high=loa_high),
                          n=int(a.size))


def bland_altman_points(a, b) -> np.ndarray:
    """Column-stacked (mean, diff) points for external plotting."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size != b.size:
        raise LengthMismatch(f"lengths differ: {a.size} vs {b.size}")
    return np.column_stack([(a + b) / 2.0, a - b])


def write_table(table: MetricsTable, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(table.to_csv())


def write_manifest(manifest: dict, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
