"""Turn terminal input events into the actual interaction sequence."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .trace import EventKind, EventLog, KeySide, MalformedLine, TerminalEvent, atomic_write_text


class InteractionKind(enum.IntEnum):
    # Integer values fix the class order used for tie-breaking everywhere.
    TYPING = 0
    SCROLLING = 1
    MKKM = 2
    IDLE = 3
    UPRIGHT = 4

    @property
    def token(self) -> str:
        return self.name

    @classmethod
    def from_token(cls, token: str) -> "InteractionKind":
        return cls[token]


BASE_KINDS = (InteractionKind.TYPING, InteractionKind.SCROLLING, InteractionKind.MKKM)
ALL_KINDS = tuple(InteractionKind)


class Hand(enum.Enum):
    LEFT = "L"
    RIGHT = "R"


@dataclass(frozen=True)
class Interaction:
    kind: InteractionKind
    start: int
    end: int
    offside: bool = False

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"interaction must have start < end, got [{self.start}, {self.end}]")

    @property
    def duration(self) -> int:
        return self.end - self.start

    def shifted(self, offset: int) -> "Interaction":
        return Interaction(self.kind, self.start + offset, self.end + offset, self.offside)


@dataclass(frozen=True)
class ExtractorConfig:
    min_duration_ms: int = 25
    max_duration_ms: int = 1000
    idle_threshold_ms: int = 1000
    mkkm_max_ms: int = 5000
    min_scroll_events: int = 5
    bracelet_hand: Hand = Hand.RIGHT

    def __post_init__(self):
        if not 0 < self.min_duration_ms <= self.max_duration_ms:
            raise ValueError("need 0 < min_duration_ms <= max_duration_ms")
        if self.mkkm_max_ms < self.max_duration_ms:
            raise ValueError("mkkm_max_ms must be >= max_duration_ms")
        if self.min_scroll_events < 1:
            raise ValueError("min_scroll_events must be >= 1")


def _device_segments(events: Sequence[TerminalEvent]) -> list[list[TerminalEvent]]:
    segs: list[list[TerminalEvent]] = []
    for e in events:
        if segs and segs[-1][0].kind.is_keyboard == e.kind.is_keyboard:
            segs[-1].append(e)
        else:
            segs.append([e])
    return segs


def _runs(times: Sequence[int], gap: int) -> list[list[int]]:
    runs: list[list[int]] = []
    for t in times:
        if runs and t - runs[-1][-1] < gap:
            runs[-1].append(t)
        else:
            runs.append([t])
    return runs


def _split_run(times: list[int], cap: int) -> list[list[int]]:
    # Greedy left-to-right: each piece starts at the first uncovered event.
    pieces = []
    i = 0
    while i < len(times):
        j = i
        while j + 1 < len(times) and times[j + 1] - times[i] <= cap:
            j += 1
        pieces.append(times[i:j + 1])
        i = j + 1
    return pieces


def extract_interactions(log: EventLog, cfg: ExtractorConfig = ExtractorConfig()) -> list[Interaction]:
    """Build the actual interaction sequence of a terminal event log.

    Typing and scrolling come from runs of same-kind events whose gaps stay
    under the idle threshold, capped at ``max_duration_ms`` per interaction.
    An MKKM covers the gap between the last event on one input device and the
    first on the other.  Mouse moves and clicks only mark mouse activity.
    """
    segs = _device_segments(log.events)
    out: list[Interaction] = []
    hand_side = KeySide.RIGHT if cfg.bracelet_hand is Hand.RIGHT else KeySide.LEFT
    prev = None
    for seg in segs:
        keyboard = seg[0].kind.is_keyboard
        offside = False
        if prev is not None:
            gap = seg[0].t - prev[-1].t
            emit = 0 < gap <= cfg.mkkm_max_ms
            if keyboard and seg[0].key_side not in (hand_side, KeySide.MIDDLE):
                # Mouse -> keyboard with the non-bracelet hand: no hand travel observed.
                if emit:
                    offside = True
                emit = False
            if emit:
                out.append(Interaction(InteractionKind.MKKM, prev[-1].t, seg[0].t))
        if keyboard:
            kind = InteractionKind.TYPING
            times = [e.t for e in seg]
            min_events = 1
        else:
            kind = InteractionKind.SCROLLING
            times = [e.t for e in seg if e.kind is EventKind.SCROLL]
            min_events = cfg.min_scroll_events
        for run in _runs(times, cfg.idle_threshold_ms):
            for piece in _split_run(run, cfg.max_duration_ms):
                if len(piece) < min_events or piece[-1] - piece[0] < cfg.min_duration_ms:
                    continue
                out.append(Interaction(kind, piece[0], piece[-1], offside))
        prev = seg
    out.sort(key=lambda it: (it.start, it.end))
    return out


def kinds(seq: Iterable[Interaction]) -> list[InteractionKind]:
    return [it.kind for it in seq]


# ---- interaction sequence file ----

def serialize_interactions(seq: Iterable[Interaction]) -> str:
    lines = []
    for it in seq:
        line = f"{it.start} {it.end} {it.kind.token}"
        if it.offside:
            line += " offside"
        lines.append(line)
    return "".join(line + "\n" for line in lines)


def loads_interactions(text: str) -> list[Interaction]:
    out = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] != "offside"):
            raise MalformedLine(line_no)
        try:
            out.append(
                Interaction(
                    InteractionKind.from_token(parts[2]),
                    int(parts[0]),
                    int(parts[1]),
                    len(parts) == 4,
                )
            )
        except (KeyError, ValueError) as exc:
            raise MalformedLine(line_no, str(exc)) from None
    return out


def parse_interactions(path) -> list[Interaction]:
    return loads_interactions(Path(path).read_text())


def write_interactions(seq: Iterable[Interaction], path) -> None:
    atomic_write_text(path, serialize_interactions(seq))
