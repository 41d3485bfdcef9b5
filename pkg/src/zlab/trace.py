"""Sensor and terminal traces: data types, file formats, decimation.

Sensor trace file::

    #rate_hz=200.0
    0 0.1 9.8 0.2 0.01 0.0 -0.02
    5 ...

one ``t_ms ax ay az gx gy gz`` record per line.  Event log file::

    #session_id=user03
    1200 KEY L
    1450 SCROLL -

one ``t_ms kind key_side`` record per line.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class TraceError(ValueError):
    """Base class for trace parsing and validation failures."""


class MalformedLine(TraceError):
    def __init__(self, line_no: int, detail: str = ""):
        self.line_no = line_no
        super().__init__(f"malformed line {line_no}" + (f": {detail}" if detail else ""))


class NonMonotonicTimestamp(TraceError):
    def __init__(self, line_no: int):
        self.line_no = line_no
        super().__init__(f"timestamp not increasing at line {line_no}")


class EmptyTrace(TraceError):
    def __init__(self):
        super().__init__("trace contains no samples")


def round_ms(value: float) -> int:
    """Round a (possibly fractional) millisecond value half-up to an integer."""
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class SensorSample:
    t: int
    accel: tuple[float, float, float]
    gyro: tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class SensorTrace:
    """Column-oriented bracelet trace.

    ``t`` is int64 milliseconds, ``accel`` and ``gyro`` are ``(N, 3)`` float
    arrays.  Arrays are made read-only on construction.
    """

    t: np.ndarray
    accel: np.ndarray
    gyro: np.ndarray
    nominal_rate_hz: float

    def __post_init__(self):
        t = np.ascontiguousarray(self.t, dtype=np.int64)
        accel = np.ascontiguousarray(self.accel, dtype=np.float64).reshape(-1, 3)
        gyro = np.ascontiguousarray(self.gyro, dtype=np.float64).reshape(-1, 3)
        for arr in (t, accel, gyro):
            arr.setflags(write=False)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "accel", accel)
        object.__setattr__(self, "gyro", gyro)
        if not (len(t) == len(accel) == len(gyro)):
            raise TraceError("column lengths differ")
        if not (self.nominal_rate_hz > 0 and math.isfinite(self.nominal_rate_hz)):
            raise TraceError(f"bad nominal rate {self.nominal_rate_hz!r}")

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SensorTrace):
            return NotImplemented
        return (
            self.nominal_rate_hz == other.nominal_rate_hz
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.accel, other.accel)
            and np.array_equal(self.gyro, other.gyro)
        )

    def sample(self, i: int) -> SensorSample:
        return SensorSample(int(self.t[i]), tuple(self.accel[i]), tuple(self.gyro[i]))

    @classmethod
    def from_samples(cls, samples: Sequence[SensorSample], nominal_rate_hz: float) -> "SensorTrace":
        t = np.array([s.t for s in samples], dtype=np.int64)
        accel = np.array([s.accel for s in samples], dtype=np.float64).reshape(-1, 3)
        gyro = np.array([s.gyro for s in samples], dtype=np.float64).reshape(-1, 3)
        return cls(t, accel, gyro, nominal_rate_hz)

    def validate(self) -> None:
        """Check the trace invariants, raising :class:`TraceError`."""
        if len(self.t) == 0:
            raise EmptyTrace()
        if self.t[0] < 0:
            raise TraceError("negative timestamp")
        bad = np.nonzero(np.diff(self.t) <= 0)[0]
        if len(bad):
            raise NonMonotonicTimestamp(int(bad[0]) + 2)
        if not (np.isfinite(self.accel).all() and np.isfinite(self.gyro).all()):
            raise TraceError("non-finite sensor value")
        if len(self.t) >= 3:
            gap = float(np.median(np.diff(self.t)))
            expected = 1000.0 / self.nominal_rate_hz
            if abs(gap - expected) > 0.2 * expected:
                raise TraceError(
                    f"median gap {gap} ms inconsistent with nominal rate {self.nominal_rate_hz} Hz"
                )

    def shifted(self, offset_ms: int) -> "SensorTrace":
        return SensorTrace(self.t + offset_ms, self.accel, self.gyro, self.nominal_rate_hz)


def infer_rate(t: np.ndarray) -> float:
    if len(t) < 2:
        raise TraceError("cannot infer rate from fewer than two samples")
    return 1000.0 / float(np.median(np.diff(t)))


def _format_float(x: float) -> str:
    return repr(float(x))


def serialize_sensor_trace(trace: SensorTrace) -> str:
    lines = [f"#rate_hz={_format_float(trace.nominal_rate_hz)}"]
    acc = trace.accel.tolist()
    gyr = trace.gyro.tolist()
    for t, a, g in zip(trace.t.tolist(), acc, gyr):
        lines.append(" ".join([str(t), *map(repr, a), *map(repr, g)]))
    return "\n".join(lines) + "\n"


def loads_sensor_trace(text: str) -> SensorTrace:
    rate = None
    ts: list[int] = []
    vals: list[list[float]] = []
    prev = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#rate_hz=") and not ts:
                try:
                    rate = float(line[len("#rate_hz="):])
                except ValueError:
                    raise MalformedLine(line_no, "bad rate header") from None
                continue
            raise MalformedLine(line_no, "unexpected header")
        parts = line.split(" ")
        if len(parts) != 7:
            raise MalformedLine(line_no, f"expected 7 fields, got {len(parts)}")
        try:
            t = round_ms(float(parts[0]))
            row = [float(p) for p in parts[1:]]
        except ValueError:
            raise MalformedLine(line_no, "not a number") from None
        if not all(math.isfinite(v) for v in row) or t < 0:
            raise MalformedLine(line_no, "value out of range")
        if prev is not None and t <= prev:
            raise NonMonotonicTimestamp(line_no)
        prev = t
        ts.append(t)
        vals.append(row)
    if not ts:
        raise EmptyTrace()
    t_arr = np.array(ts, dtype=np.int64)
    v = np.array(vals, dtype=np.float64)
    if rate is None:
        rate = infer_rate(t_arr) if len(t_arr) >= 2 else 1.0
    trace = SensorTrace(t_arr, v[:, :3], v[:, 3:], rate)
    trace.validate()
    return trace


def parse_sensor_trace(path) -> SensorTrace:
    return loads_sensor_trace(Path(path).read_text())


def write_sensor_trace(trace: SensorTrace, path) -> None:
    atomic_write_text(path, serialize_sensor_trace(trace))


def downsample(trace: SensorTrace, keep_every: int) -> SensorTrace:
    """Keep samples 0, k, 2k, ... (plain decimation, no anti-alias filter)."""
    if keep_every < 1:
        raise ValueError("keep_every must be >= 1")
    if keep_every == 1:
        return trace
    sl = slice(None, None, keep_every)
    return SensorTrace(
        trace.t[sl], trace.accel[sl], trace.gyro[sl], trace.nominal_rate_hz / keep_every
    )


@dataclass(frozen=True)
class SamplingSpec:
    s_min: int = 3
    d_min: float = 25.0  # ms

    def __post_init__(self):
        if self.s_min < 1 or not self.d_min > 0:
            raise ValueError("s_min must be >= 1 and d_min > 0")


def min_required_rate(spec: SamplingSpec) -> float:
    """Lowest sampling rate (Hz) that puts ``s_min`` samples into a ``d_min`` event."""
    return spec.s_min / (spec.d_min / 1000.0)


# ---- terminal events ----

class EventKind(enum.Enum):
    KEY_DOWN = "KEY"
    SCROLL = "SCROLL"
    MOUSE_MOVE = "MOVE"
    MOUSE_CLICK = "CLICK"

    @property
    def is_keyboard(self) -> bool:
        return self is EventKind.KEY_DOWN


class KeySide(enum.Enum):
    LEFT = "L"
    MIDDLE = "M"
    RIGHT = "R"
    NA = "-"


@dataclass(frozen=True)
class TerminalEvent:
    t: int
    kind: EventKind
    key_side: KeySide = KeySide.NA

    def __post_init__(self):
        if (self.kind is EventKind.KEY_DOWN) == (self.key_side is KeySide.NA):
            raise TraceError(f"key_side {self.key_side.value} invalid for {self.kind.value}")


@dataclass(frozen=True)
class EventLog:
    events: tuple[TerminalEvent, ...]
    session_id: str

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        if not self.session_id or any(c.isspace() for c in self.session_id):
            raise TraceError("session_id must be a non-empty token")
        for i in range(1, len(self.events)):
            if self.events[i].t < self.events[i - 1].t:
                raise NonMonotonicTimestamp(i + 1)

    def __len__(self) -> int:
        return len(self.events)

    def shifted(self, offset_ms: int) -> "EventLog":
        return EventLog(
            tuple(TerminalEvent(e.t + offset_ms, e.kind, e.key_side) for e in self.events),
            self.session_id,
        )

    @classmethod
    def from_unsorted(cls, events: Iterable[TerminalEvent], session_id: str) -> "EventLog":
        return cls(tuple(sorted(events, key=lambda e: e.t)), session_id)


_EVENT_KINDS = {k.value: k for k in EventKind}
_KEY_SIDES = {s.value: s for s in KeySide}


def serialize_event_log(log: EventLog) -> str:
    lines = [f"#session_id={log.session_id}"]
    lines.extend(f"{e.t} {e.kind.value} {e.key_side.value}" for e in log.events)
    return "\n".join(lines) + "\n"


def loads_event_log(text: str, default_session_id: str = "session") -> EventLog:
    session_id = None
    events: list[TerminalEvent] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            if line.startswith("#session_id=") and not events:
                session_id = line[len("#session_id="):]
                continue
            raise MalformedLine(line_no, "unexpected header")
        parts = line.split(" ")
        if len(parts) != 3 or parts[1] not in _EVENT_KINDS or parts[2] not in _KEY_SIDES:
            raise MalformedLine(line_no)
        try:
            t = round_ms(float(parts[0]))
        except ValueError:
            raise MalformedLine(line_no, "bad timestamp") from None
        if t < 0:
            raise MalformedLine(line_no, "negative timestamp")
        if events and t < events[-1].t:
            raise NonMonotonicTimestamp(line_no)
        try:
            events.append(TerminalEvent(t, _EVENT_KINDS[parts[1]], _KEY_SIDES[parts[2]]))
        except TraceError as exc:
            raise MalformedLine(line_no, str(exc)) from None
    return EventLog(tuple(events), session_id or default_session_id)


def parse_event_log(path) -> EventLog:
    path = Path(path)
    return loads_event_log(path.read_text(), default_session_id=path.stem)


def write_event_log(log: EventLog, path) -> None:
    atomic_write_text(path, serialize_event_log(log))


def atomic_write_text(path, text: str) -> None:
    """Write via a sibling temp file and rename, so readers never see a partial file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
