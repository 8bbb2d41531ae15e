"""Experiment and acquisition configuration documents.

Two JSON files drive a session: ``experiment.json`` (study protocol:
conditions, channels, plotting, biofeedback) and ``acquisition.json``
(transport parameters and the multi-node role). Both are validated
strictly on load -- unknown fields are rejected so typos in study setup
fail loudly instead of being silently ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

from .errors import PhysiortError


class ConfigError(PhysiortError):
    exit_code = 2


class MalformedDocument(ConfigError):
    """Input is not well-formed JSON."""


class SchemaViolation(ConfigError):
    """A field is missing, has the wrong type, or is unknown."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class InvariantViolation(ConfigError):
    """Fields are individually valid but break a cross-field rule."""


class RangeViolation(ConfigError):
    """A value lies outside its permitted range."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


class ChannelKind(str, Enum):
    PPG = "PPG"
    EDA = "EDA"
    RSP = "RSP"


class BiofeedbackMetric(str, Enum):
    HR = "HR"
    PNN50 = "pNN50"
    RESP_RATE = "RESP_RATE"
    EDA_LEVEL = "EDA_LEVEL"


class Transport(str, Enum):
    SERIAL = "serial"
    SIMULATOR = "simulator"
    REPLAY = "replay"


class Role(str, Enum):
    STANDALONE = "standalone"
    SERVER = "server"
    CLIENT = "client"


MAX_PLOT_CHANNELS = 4
SAMPLING_RATE_RANGE = (10, 10000)
BAUDRATE_RANGE = (9600, 2000000)
ADC_BITS_CHOICES = (10, 12)
VREF_CHOICES = (3.3, 5.0)


@dataclass(frozen=True)
class ChannelSpec:
    name: str
    kind: ChannelKind
    site: str
    adc_index: int


@dataclass(frozen=True)
class Condition:
    name: str
    max_time_seconds: float


@dataclass(frozen=True)
class BiofeedbackSpec:
    metric: BiofeedbackMetric
    window_seconds: float
    step_seconds: float
    range_lo: float
    range_hi: float


@dataclass(frozen=True)
class ExperimentConfig:
    study_name: str
    conditions: tuple[Condition, ...]
    timed_acquisition: bool
    channels: tuple[ChannelSpec, ...]
    plot_channels: tuple[str, ...]
    data_dir: str
    biofeedback: BiofeedbackSpec | None = None

    def channel_names(self) -> tuple[str, ...]:
        return tuple(ch.name for ch in self.channels)


@dataclass(frozen=True)
class AcqConfig:
    sampling_rate: float
    baudrate: int
    adc_bits: int
    vref: float
    transport: Transport
    role: Role
    server_address: str | None = None
    listen_port: int | None = None


@dataclass(frozen=True)
class ScheduleEntry:
    name: str
    duration_s: float | None  # None = unbounded (manual stop)


def _require(doc: dict, key: str, typ, where: str):
    if key not in doc:
        raise SchemaViolation(f"{where}{key}", "required field missing")
    val = doc[key]
    # bool is an int subclass; keep the two apart.
    if typ in (int, float) and isinstance(val, bool):
        raise SchemaViolation(f"{where}{key}", "expected a number, got a boolean")
    if typ is float and isinstance(val, int):
        return float(val)
    if not isinstance(val, typ):
        raise SchemaViolation(f"{where}{key}", f"expected {typ.__name__}, got {type(val).__name__}")
    return val


def _reject_unknown(doc: dict, allowed: set[str], where: str):
    for key in doc:
        if key not in allowed:
            raise SchemaViolation(f"{where}{key}", "unknown field")


def _parse_json(document: str) -> dict:
    try:
        doc = json.loads(document)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedDocument(str(exc)) from exc
    if not isinstance(doc, dict):
        raise MalformedDocument("top-level value must be a JSON object")
    return doc


def _parse_channel(raw, idx: int) -> ChannelSpec:
    where = f"channels[{idx}]."
    if not isinstance(raw, dict):
        raise SchemaViolation(f"channels[{idx}]", "expected an object")
    _reject_unknown(raw, {"name", "kind", "site", "adc_index"}, where)
    name = _require(raw, "name", str, where)
    kind_raw = _require(raw, "kind", str, where)
    try:
        kind = ChannelKind(kind_raw)
    except ValueError:
        raise SchemaViolation(f"{where}kind", f"must be one of {[k.value for k in ChannelKind]}")
    site = _require(raw, "site", str, where)
    adc_index = _require(raw, "adc_index", int, where)
    if adc_index < 0:
        raise SchemaViolation(f"{where}adc_index", "must be non-negative")
    return ChannelSpec(name=name, kind=kind, site=site, adc_index=adc_index)


def _parse_biofeedback(raw) -> BiofeedbackSpec:
    where = "biofeedback."
    if not isinstance(raw, dict):
        raise SchemaViolation("biofeedback", "expected an object")
    _reject_unknown(raw, {"metric", "window_seconds", "step_seconds", "range_lo", "range_hi"}, where)
    metric_raw = _require(raw, "metric", str, where)
    try:
        metric = BiofeedbackMetric(metric_raw)
    except ValueError:
        raise SchemaViolation(f"{where}metric", f"must be one of {[m.value for m in BiofeedbackMetric]}")
    window = _require(raw, "window_seconds", float, where)
    step = _require(raw, "step_seconds", float, where)
    lo = _require(raw, "range_lo", float, where)
    hi = _require(raw, "range_hi", float, where)
    if window <= 0:
        raise SchemaViolation(f"{where}window_seconds", "must be positive")
    if step <= 0:
        raise SchemaViolation(f"{where}step_seconds", "must be positive")
    if step > window:
        raise InvariantViolation("biofeedback step_seconds must not exceed window_seconds")
    if not lo < hi:
        raise InvariantViolation("biofeedback range_lo must be below range_hi")
    return BiofeedbackSpec(metric=metric, window_seconds=window, step_seconds=step,
                           range_lo=lo, range_hi=hi)


def load_experiment_config(document: str) -> ExperimentConfig:
    """Parse and validate an experiment configuration document."""
    doc = _parse_json(document)
    allowed = {"study_name", "conditions", "timed_acquisition", "channels",
               "plot_channels", "data_dir", "biofeedback"}
    _reject_unknown(doc, allowed, "")

    study_name = _require(doc, "study_name", str, "")
    timed = _require(doc, "timed_acquisition", bool, "")
    data_dir = _require(doc, "data_dir", str, "")

    raw_conditions = _require(doc, "conditions", list, "")
    if not raw_conditions:
        raise SchemaViolation("conditions", "must list at least one condition")
    conditions = []
    for i, raw in enumerate(raw_conditions):
        where = f"conditions[{i}]."
        if not isinstance(raw, dict):
            raise SchemaViolation(f"conditions[{i}]", "expected an object")
        _reject_unknown(raw, {"name", "max_time_seconds"}, where)
        name = _require(raw, "name", str, where)
        max_time = _require(raw, "max_time_seconds", float, where)
        conditions.append(Condition(name=name, max_time_seconds=max_time))

    raw_channels = _require(doc, "channels", list, "")
    if not raw_channels:
        raise SchemaViolation("channels", "must list at least one channel")
    channels = tuple(_parse_channel(raw, i) for i, raw in enumerate(raw_channels))

    raw_plot = _require(doc, "plot_channels", list, "")
    for i, name in enumerate(raw_plot):
        if not isinstance(name, str):
            raise SchemaViolation(f"plot_channels[{i}]", "expected a channel name string")
    plot_channels = tuple(raw_plot)

    biofeedback = _parse_biofeedback(doc["biofeedback"]) if doc.get("biofeedback") is not None else None

    cfg = ExperimentConfig(study_name=study_name, conditions=tuple(conditions),
                           timed_acquisition=timed, channels=channels,
                           plot_channels=plot_channels, data_dir=data_dir,
                           biofeedback=biofeedback)
    _check_experiment_invariants(cfg)
    return cfg


def _check_experiment_invariants(cfg: ExperimentConfig):
    if len(cfg.plot_channels) > MAX_PLOT_CHANNELS:
        raise InvariantViolation(
            f"at most {MAX_PLOT_CHANNELS} channels may be plotted, got {len(cfg.plot_channels)}")
    declared = set(cfg.channel_names())
    for name in cfg.plot_channels:
        if name not in declared:
            raise InvariantViolation(f"plot channel {name!r} is not a declared channel")
    names = [c.name for c in cfg.conditions]
    if len(set(names)) != len(names):
        raise InvariantViolation("condition names must be unique")
    if cfg.timed_acquisition:
        for cond in cfg.conditions:
            if cond.max_time_seconds <= 0:
                raise InvariantViolation(
                    f"condition {cond.name!r}: max_time_seconds must be positive "
                    "when timed_acquisition is enabled")
    indices = [ch.adc_index for ch in cfg.channels]
    if len(set(indices)) != len(indices):
        raise InvariantViolation("adc_index must be unique per channel")
    chan_names = [ch.name for ch in cfg.channels]
    if len(set(chan_names)) != len(chan_names):
        raise InvariantViolation("channel names must be unique")


def load_acq_config(document: str) -> AcqConfig:
    """Parse and validate an acquisition configuration document."""
    doc = _parse_json(document)
    allowed = {"sampling_rate", "baudrate", "adc_bits", "vref", "transport",
               "role", "server_address", "listen_port"}
    _reject_unknown(doc, allowed, "")

    fs = _require(doc, "sampling_rate", float, "")
    if not SAMPLING_RATE_RANGE[0] <= fs <= SAMPLING_RATE_RANGE[1]:
        raise RangeViolation("sampling_rate", f"must be within {SAMPLING_RATE_RANGE}")
    baud = _require(doc, "baudrate", int, "")
    if not BAUDRATE_RANGE[0] <= baud <= BAUDRATE_RANGE[1]:
        raise RangeViolation("baudrate", f"must be within {BAUDRATE_RANGE}")
    adc_bits = _require(doc, "adc_bits", int, "")
    if adc_bits not in ADC_BITS_CHOICES:
        raise RangeViolation("adc_bits", f"must be one of {ADC_BITS_CHOICES}")
    vref = _require(doc, "vref", float, "")
    if vref not in VREF_CHOICES:
        raise RangeViolation("vref", f"must be one of {VREF_CHOICES}")

    transport_raw = _require(doc, "transport", str, "")
    try:
        transport = Transport(transport_raw)
    except ValueError:
        raise RangeViolation("transport", f"must be one of {[t.value for t in Transport]}")
    role_raw = _require(doc, "role", str, "")
    try:
        role = Role(role_raw)
    except ValueError:
        raise RangeViolation("role", f"must be one of {[r.value for r in Role]}")

    server_address = doc.get("server_address")
    if server_address is not None and not isinstance(server_address, str):
        raise SchemaViolation("server_address", "expected host:port string")
    listen_port = doc.get("listen_port")
    if listen_port is not None:
        if isinstance(listen_port, bool) or not isinstance(listen_port, int):
            raise SchemaViolation("listen_port", "expected an integer port")
        if not 1 <= listen_port <= 65535:
            raise RangeViolation("listen_port", "must be within [1, 65535]")

    if role is Role.CLIENT and not server_address:
        raise RangeViolation("server_address", "required when role is client")
    if role is Role.SERVER and listen_port is None:
        raise RangeViolation("listen_port", "required when role is server")

    return AcqConfig(sampling_rate=fs, baudrate=baud, adc_bits=adc_bits, vref=vref,
                     transport=transport, role=role, server_address=server_address,
                     listen_port=listen_port)


def condition_schedule(cfg: ExperimentConfig) -> list[ScheduleEntry]:
    """Conditions in declared order; durations unbounded when untimed."""
    return [
        ScheduleEntry(name=c.name,
                      duration_s=c.max_time_seconds if cfg.timed_acquisition else None)
        for c in cfg.conditions
    ]


def dump_experiment_config(cfg: ExperimentConfig) -> str:
    """Serialize back to the on-disk document form (load round-trips)."""
    doc: dict = {
        "study_name": cfg.study_name,
        "conditions": [{"name": c.name, "max_time_seconds": c.max_time_seconds}
                       for c in cfg.conditions],
        "timed_acquisition": cfg.timed_acquisition,
        "channels": [{"name": ch.name, "kind": ch.kind.value, "site": ch.site,
                      "adc_index": ch.adc_index} for ch in cfg.channels],
        "plot_channels": list(cfg.plot_channels),
        "data_dir": cfg.data_dir,
    }
    if cfg.biofeedback is not None:
        bf = cfg.biofeedback
        doc["biofeedback"] = {"metric": bf.metric.value, "window_seconds": bf.window_seconds,
                              "step_seconds": bf.step_seconds, "range_lo": bf.range_lo,
                              "range_hi": bf.range_hi}
    return json.dumps(doc, indent=2)


def dump_acq_config(cfg: AcqConfig) -> str:
    doc: dict = {
        "sampling_rate": cfg.sampling_rate,
        "baudrate": cfg.baudrate,
        "adc_bits": cfg.adc_bits,
        "vref": cfg.vref,
        "transport": cfg.transport.value,
        "role": cfg.role.value,
    }
    if cfg.server_address is not None:
        doc["server_address"] = cfg.server_address
    if cfg.listen_port is not None:
        doc["listen_port"] = cfg.listen_port
    return json.dumps(doc, indent=2)
