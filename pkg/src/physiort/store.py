"""Session persistence: append-only CSV with raw samples, replicated
quality bins, and event codes, plus the strict reader used by analysis.

Layout, bit-exact:

    # key=value metadata lines
    sample_idx,elapsed_s,ch_<name>...,sqi,event_code
    0,0.000000,512,498,1,0
    ...

sqi is -1 unassessed, 1 good, 0 bad. elapsed_s carries 6 decimals, ADC
values are plain integers, so files diff identically across platforms.
A row only counts once its newline is on disk; any prefix of a session
file therefore parses to a valid shorter session.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import PhysiortError

META_KEYS = ("session_id", "participant_id", "condition", "fs", "channels",
             "started_utc", "started_mono_ns", "config_digest")

_ID_RE = re.compile(r"^[A-Za-z0-9_-]+$")

SQI_UNASSESSED = -1
SQI_BAD = 0
SQI_GOOD = 1


class IoFailure(PhysiortError):
    exit_code = 4


class OutOfOrderSample(PhysiortError):
    exit_code = 4


class InvalidId(PhysiortError):
    exit_code = 2


class CorruptFile(PhysiortError):
    """Parse failure; carries the offending line and the readable prefix."""

    exit_code = 4

    def __init__(self, message: str, line_no: int, partial: "Recording | None" = None):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
        self.partial = partial


@dataclass(frozen=True)
class RecordingHeader:
    session_id: str
    participant_id: str
    condition: str
    fs: float
    channels: tuple[str, ...]
    started_utc: str
    started_mono_ns: int
    config_digest: str

    def __post_init__(self):
        if not self.channels:
            raise InvalidId("recording needs at least one channel")
        for name in self.channels:
            if not _ID_RE.match(name):
                raise InvalidId(f"channel name {name!r} not a safe identifier")
        if self.fs <= 0:
            raise InvalidId("fs must be positive")


@dataclass(frozen=True)
class EventMark:
    code: int
    start_sample: int
    end_sample: int

    def __post_init__(self):
        if self.code <= 0:
            raise ValueError("event code must be positive (0 = no event)")
        if self.start_sample > self.end_sample:
            raise ValueError("mark must not end before it starts")


@dataclass
class Recording:
    header: RecordingHeader
    values: np.ndarray        # (n_samples, n_channels) integer ADC counts
    sqi: np.ndarray           # (n_samples,) in {-1, 0, 1}
    event_code: np.ndarray    # (n_samples,) 0 = none
    marks: list[EventMark] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return self.values.shape[0]

    def elapsed_s(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.header.fs

    def channel(self, name: str) -> np.ndarray:
        return self.values[:, self.header.channels.index(name)].astype(np.float64)


def marks_from_codes(event_code: np.ndarray) -> list[EventMark]:
    """Runs of a constant nonzero code become one mark (inclusive ends)."""
    marks = []
    start = None
    code = 0
    for i, c in enumerate(event_code):
        c = int(c)
        if c != code:
            if code != 0:
                marks.append(EventMark(code=code, start_sample=start, end_sample=i - 1))
            start = i if c != 0 else None
            code = c
    if code != 0:
        marks.append(EventMark(code=code, start_sample=start,
                               end_sample=len(event_code) - 1))
    return marks


class Writer:
    """Append-only session writer. Single-owner; flushes once per data-second."""

    def __init__(self, path: str, header: RecordingHeader):
        self._header = header
        self._next_idx = 0
        self._flush_every = max(1, int(round(header.fs)))
        try:
            self._fh = open(path, "x", encoding="ascii", newline="\n")
        except OSError as exc:
            raise IoFailure(f"cannot create {path}: {exc}") from exc
        meta = {
            "session_id": header.session_id,
            "participant_id": header.participant_id,
            "condition": header.condition,
            "fs": f"{header.fs:g}",
            "channels": ",".join(header.channels),
            "started_utc": header.started_utc,
            "started_mono_ns": str(header.started_mono_ns),
            "config_digest": header.config_digest,
        }
        for key in META_KEYS:
            self._fh.write(f"# {key}={meta[key]}\n")
        cols = ["sample_idx", "elapsed_s"]
        cols += [f"ch_{name}" for name in header.channels]
        cols += ["sqi", "event_code"]
        self._fh.write(",".join(cols) + "\n")
        self._fh.flush()

    @property
    def next_sample_idx(self) -> int:
        return self._next_idx

    def append(self, values, sqi: int = SQI_UNASSESSED, event_code: int = 0,
               sample_idx: int | None = None):
        if self._fh is None:
            raise IoFailure("writer already finalized")
        if sample_idx is not None and sample_idx != self._next_idx:
            raise OutOfOrderSample(
                f"expected sample {self._next_idx}, got {sample_idx}")
        if len(values) != len(self._header.channels):
            raise IoFailure(
                f"expected {len(self._header.channels)} channel values, got {len(values)}")
        if sqi not in (SQI_UNASSESSED, SQI_BAD, SQI_GOOD):
            raise IoFailure(f"sqi must be -1, 0 or 1, got {sqi}")
        if event_code < 0:
            raise IoFailure("event_code must be non-negative")
        idx = self._next_idx
        elapsed = idx / self._header.fs
        row = [str(idx), f"{elapsed:.6f}"]
        row += [str(int(v)) for v in values]
        row += [str(int(sqi)), str(int(event_code))]
        self._fh.write(",".join(row) + "\n")
        self._next_idx += 1
        if self._next_idx % self._flush_every == 0:
            self._fh.flush()

    def finalize(self) -> None:
        if self._fh is not None:
            self._fh.flush()
            os.fsync(self._fh.fileno())
            self._fh.close()
            self._fh = None


def open_writer(path: str, header: RecordingHeader) -> Writer:
    return Writer(path, header)


def _parse_meta(lines: list[tuple[int, str]]) -> dict[str, str]:
    meta = {}
    for line_no, line in lines:
        body = line[1:].strip()
        if "=" not in body:
            raise CorruptFile("metadata line without '='", line_no)
        key, value = body.split("=", 1)
        meta[key.strip()] = value
    return meta


def read_recording(path: str) -> Recording:
    """Strict inverse of the writer. Truncated or malformed content raises
    CorruptFile whose .partial holds everything before the bad line."""
    try:
        with open(path, "r", encoding="ascii", newline="") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc

    meta_lines: list[tuple[int, str]] = []
    header_cols: list[str] | None = None
    rows: list[list[str]] = []
    bad: tuple[int, str] | None = None

    pos = 0
    line_no = 0
    n_cols = 0
    while pos < len(raw) and bad is None:
        nl = raw.find("\n", pos)
        if nl < 0:
            bad = (line_no + 1, "unterminated final line")
            break
        line_no += 1
        line = raw[pos:nl].rstrip("\r")
        pos = nl + 1
        if header_cols is None:
            if line.startswith("#"):
                meta_lines.append((line_no, line))
            elif line.startswith("sample_idx,"):
                header_cols = line.split(",")
                if (len(header_cols) < 4 or header_cols[1] != "elapsed_s"
                        or header_cols[-2:] != ["sqi", "event_code"]
                        or any(not c.startswith("ch_") for c in header_cols[2:-2])):
                    raise CorruptFile("unrecognized column set", line_no)
                n_cols = len(header_cols)
            else:
                raise CorruptFile("expected metadata or header row", line_no)
            continue
        parts = line.split(",")
        if len(parts) != n_cols:
            bad = (line_no, f"expected {n_cols} fields, got {len(parts)}")
            break
        rows.append(parts)

    if header_cols is None:
        raise CorruptFile("no header row", line_no + 1)

    meta = _parse_meta(meta_lines)
    missing = [k for k in META_KEYS if k not in meta]
    if missing:
        raise CorruptFile(f"missing metadata key(s): {', '.join(missing)}", 1)
    channels = tuple(meta["channels"].split(",")) if meta["channels"] else ()
    try:
        header = RecordingHeader(
            session_id=meta["session_id"], participant_id=meta["participant_id"],
            condition=meta["condition"], fs=float(meta["fs"]), channels=channels,
            started_utc=meta["started_utc"],
            started_mono_ns=int(meta["started_mono_ns"]),
            config_digest=meta["config_digest"])
    except (InvalidId, ValueError) as exc:
        raise CorruptFile(f"bad metadata: {exc}", 1) from exc
    if tuple(c[3:] for c in header_cols[2:-2]) != channels:
        raise CorruptFile("header row channels disagree with metadata", len(meta_lines) + 1)

    n = len(rows)
    values = np.zeros((n, len(channels)), dtype=np.int64)
    sqi = np.zeros(n, dtype=np.int8)
    codes = np.zeros(n, dtype=np.int64)
    first_row_line = len(meta_lines) + 2
    for i, parts in enumerate(rows):
        ln = first_row_line + i
        try:
            idx = int(parts[0])
            vals = [int(p) for p in parts[2:-2]]
            s = int(parts[-2])
            code = int(parts[-1])
            float(parts[1])
        except ValueError as exc:
            bad = (ln, f"non-numeric field: {exc}")
            n = i
            break
        if idx != i:
            bad = (ln, f"sample_idx {idx} out of order (expected {i})")
            n = i
            break
        if s not in (-1, 0, 1) or code < 0:
            bad = (ln, "sqi or event_code out of range")
            n = i
            break
        values[i] = vals
        sqi[i] = s
        codes[i] = code

    rec = Recording(header=header, values=values[:n], sqi=sqi[:n],
                    event_code=codes[:n], marks=marks_from_codes(codes[:n]))
    if bad is not None:
        raise CorruptFile(bad[1], bad[0], partial=rec)
    return rec


def sanitize_id(value: str) -> str:
    if not _ID_RE.match(value):
        raise InvalidId(
            f"{value!r} is not a valid identifier (alphanumeric, dash, underscore)")
    return value


def session_layout(data_dir: str, participant_id: str, condition: str) -> str:
    """<data_dir>/<participant>/<condition>.csv, suffixed _2, _3... if taken."""
    participant_id = sanitize_id(participant_id)
    condition = sanitize_id(condition)
    directory = os.path.join(data_dir, participant_id)
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f"{condition}.csv")
    k = 2
    while os.path.exists(path):
        path = os.path.join(directory, f"{condition}_{k}.csv")
        k += 1
    return path
