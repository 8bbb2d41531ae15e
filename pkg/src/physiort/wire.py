"""Sample-stream grammar shared with the microcontroller.

One frame per line: comma-separated decimal ADC counts, newline
terminated ("512,1023\\n"). The decoder is incremental and tolerant:
garbage, partial reads and overlong lines never raise -- bad lines are
counted and decoding resynchronizes at the next newline. A trailing
'\\r' (serial-terminal artifact) is stripped before parsing.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import PhysiortError

# Hard bound on pending bytes: a sane line is far shorter, and dropping
# overlong lines wholesale keeps memory bounded under fuzzing.
MAX_LINE_BYTES_PER_CHANNEL = 64


class ValueOutOfRange(PhysiortError):
    exit_code = 3


@dataclass(frozen=True)
class SampleFrame:
    """One multi-channel ADC reading, values in [0, 2^adc_bits - 1]."""

    values: tuple[int, ...]


def adc_max(adc_bits: int) -> int:
    return (1 << adc_bits) - 1


def encode_frame(frame: SampleFrame, adc_bits: int = 12) -> bytes:
    """Render a frame as one wire line (host-side mirror of the firmware)."""
    top = adc_max(adc_bits)
    for v in frame.values:
        if not isinstance(v, int) or isinstance(v, bool) or not 0 <= v <= top:
            raise ValueOutOfRange(f"value {v!r} outside [0, {top}]")
    return (",".join(str(v) for v in frame.values) + "\n").encode("ascii")


class FrameDecoder:
    """Incremental line decoder with bounded buffering and resync.

    Not safe for concurrent mutation; the frames it returns are
    immutable and freely shareable.
    """

    def __init__(self, expected_channels: int, adc_bits: int = 12):
        if expected_channels < 1:
            raise ValueError("expected_channels must be positive")
        if adc_bits not in (10, 12):
            raise ValueError("adc_bits must be 10 or 12")
        self.expected_channels = expected_channels
        self.adc_bits = adc_bits
        self._max = adc_max(adc_bits)
        self._max_line = MAX_LINE_BYTES_PER_CHANNEL * expected_channels
        self._buffer = b""
        self._overflowed = False  # discarding until the next newline
        self.frames_ok = 0
        self.frames_dropped = 0

    def feed(self, data: bytes) -> list[SampleFrame]:
        """Decode all complete frames available after appending ``data``."""
        frames: list[SampleFrame] = []
        pending = self._buffer + bytes(data)
        self._buffer = b""
        while True:
            nl = pending.find(b"\n")
            if nl < 0:
                break
            line, pending = pending[:nl], pending[nl + 1:]
            if self._overflowed:
                # Tail of a line already condemned for length.
                self._overflowed = False
                self.frames_dropped += 1
                continue
            frame = self._parse_line(line)
            if frame is None:
                self.frames_dropped += 1
            else:
                self.frames_ok += 1
                frames.append(frame)
        if self._overflowed:
            pass  # still discarding; drop the partial bytes
        elif len(pending) > self._max_line:
            # The line under construction can never be valid; stop buffering
            # it now so memory stays bounded. The drop is counted when its
            # terminating newline eventually arrives.
            self._overflowed = True
        else:
            self._buffer = pending
        return frames

    def _parse_line(self, line: bytes) -> SampleFrame | None:
        if len(line) > self._max_line:
            return None
        if line.endswith(b"\r"):
            line = line[:-1]
        parts = line.split(b",")
        if len(parts) != self.expected_channels:
            return None
        values = []
        for part in parts:
            if not part or not part.isdigit():
                return None
            v = int(part)
            if v > self._max:
                return None
            values.append(v)
        return SampleFrame(values=tuple(values))
