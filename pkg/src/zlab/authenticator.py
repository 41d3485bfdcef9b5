"""Windowed comparison of actual vs. predicted interaction sequences.

Plus the hardening add-ons: proximity-escalated thresholds, the offside
typing blacklist, and alert injection for continuous (idle-time)
classification.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

from .interactions import Interaction, InteractionKind


class AuthError(ValueError):
    pass


class LengthMismatch(AuthError):
    pass


class EmptySequence(AuthError):
    pass


class Outcome(enum.Enum):
    PASS = "PASS"
    FAIL = "FAIL"


_EPS = 1e-9


@dataclass(frozen=True)
class AuthParams:
    w: int = 20
    m: float = 0.6
    g: int = 1
    f: float = 0.0
    strict_threshold: bool = False

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("w must be >= 1")
        if not 0 < self.m <= 1:
            raise ValueError("m must be in (0, 1]")
        if self.g < 1:
            raise ValueError("g must be >= 1")
        if not 0 <= self.f < 1:
            raise ValueError("f must be in [0, 1)")

    @property
    def stride(self) -> int:
        # half-up, so w=5, f=0.5 strides 3 rather than banker's-rounding to 2
        return max(1, int(math.floor(self.w * (1 - self.f) + 0.5)))


def passes(matches: int, w: int, m: float, strict: bool = False) -> bool:
    need = m * w
    if strict:
        return matches > need + _EPS
    return matches >= need - _EPS


def compare_window(
    actual: Sequence[InteractionKind],
    predicted: Sequence[InteractionKind],
    m: float,
    strict: bool = False,
) -> Outcome:
    if len(actual) != len(predicted):
        raise LengthMismatch(f"{len(actual)} actual vs {len(predicted)} predicted labels")
    if not actual:
        raise EmptySequence()
    matches = sum(a == p for a, p in zip(actual, predicted))
    return Outcome.PASS if passes(matches, len(actual), m, strict) else Outcome.FAIL


def first_deauth(outcomes: Sequence[Outcome], g: int) -> Optional[int]:
    """1-based index of the window completing the first run of ``g`` FAILs."""
    run = 0
    for i, o in enumerate(outcomes, start=1):
        run = run + 1 if o is Outcome.FAIL else 0
        if run >= g:
            return i
    return None


def window_starts(n: int, w: int, stride: int) -> range:
    if n < w:
        return range(0)
    return range(0, n - w + 1, stride)


@dataclass
class SessionVerdict:
    window_outcomes: list[Outcome]
    deauth_window: Optional[int]
    deauth_time_ms: Optional[int]
    windows_elapsed: int
    match_fractions: list[float] = field(default_factory=list)
    window_end_ms: list[int] = field(default_factory=list)
    thresholds: list[float] = field(default_factory=list)

    @property
    def deauthenticated(self) -> bool:
        return self.deauth_window is not None

    def same_decisions(self, other: "SessionVerdict") -> bool:
        return (
            self.window_outcomes == other.window_outcomes
            and self.deauth_window == other.deauth_window
            and self.deauth_time_ms == other.deauth_time_ms
            and self.windows_elapsed == other.windows_elapsed
        )


def run_session(
    actual: Sequence[Interaction],
    predicted: Sequence[InteractionKind],
    params: AuthParams = AuthParams(),
    *,
    alerts: Sequence[int] = (),
    threshold_at: Callable[[int], float] | None = None,
    stop_at_deauth: bool = True,
) -> SessionVerdict:
    """Slide a ``w``-interaction window over the session.

    ``alerts`` are times (ms) at which some other check demands a failure; an
    alert fails the first window whose last interaction ends at or after it.
    ``threshold_at`` maps a window's end time to its matching threshold
    (defaults to ``params.m``).
    """
    n = len(actual)
    if n != len(predicted):
        raise LengthMismatch(f"{n} actual vs {len(predicted)} predicted labels")
    if n == 0:
        raise EmptySequence()
    eq = [a.kind == p for a, p in zip(actual, predicted)]
    # prefix sums make each window O(1)
    pref = [0]
    for e in eq:
        pref.append(pref[-1] + e)
    alert_times = sorted(alerts)
    w = params.w
    outcomes: list[Outcome] = []
    fracs: list[float] = []
    ends: list[int] = []
    ths: list[float] = []
    prev_end = None
    run = 0
    deauth = None
    for s in window_starts(n, w, params.stride):
        matches = pref[s + w] - pref[s]
        end_ms = actual[s + w - 1].end
        m = threshold_at(end_ms) if threshold_at is not None else params.m
        ok = passes(matches, w, m, params.strict_threshold)
        if ok and alert_times:
            lo = bisect.bisect_right(alert_times, prev_end) if prev_end is not None else 0
            hi = bisect.bisect_right(alert_times, end_ms)
            if hi > lo:
                ok = False
        prev_end = end_ms if prev_end is None else max(prev_end, end_ms)
        outcomes.append(Outcome.PASS if ok else Outcome.FAIL)
        fracs.append(matches / w)
        ends.append(end_ms)
        ths.append(m)
        run = 0 if ok else run + 1
        if deauth is None and run >= params.g:
            deauth = len(outcomes)
            if stop_at_deauth:
                break
    return SessionVerdict(
        outcomes,
        deauth,
        ends[deauth - 1] if deauth is not None else None,
        len(outcomes),
        fracs,
        ends,
        ths,
    )


# ---- proximity ----

class ProximityLevel(enum.Enum):
    IMMEDIATE = "immediate"
    NEAR = "near"
    FAR = "far"


def proximity_level(rssi_db: float, reference_db: float) -> ProximityLevel:
    delta = rssi_db - reference_db
    if delta >= -5:
        return ProximityLevel.IMMEDIATE
    if delta >= -15:
        return ProximityLevel.NEAR
    return ProximityLevel.FAR


_ESCALATION = {ProximityLevel.IMMEDIATE: 0.0, ProximityLevel.NEAR: 0.10, ProximityLevel.FAR: 0.20}


def escalate_threshold(base_m: float, level: ProximityLevel) -> float:
    if not 0 < base_m <= 1:
        raise ValueError("base_m must be in (0, 1]")
    return min(1.0, round(base_m + _ESCALATION[level], 12))


def proximity_schedule(
    rssi: Sequence[tuple[int, float]], reference_db: float, base_m: float
) -> Callable[[int], float]:
    """Threshold lookup driven by the latest RSSI reading at or before a time.

    Before the first reading the base threshold applies.
    """
    readings = sorted(rssi)
    times = [t for t, _ in readings]

    def threshold_at(t_ms: int) -> float:
        i = bisect.bisect_right(times, t_ms) - 1
        if i < 0:
            return base_m
        return escalate_threshold(base_m, proximity_level(readings[i][1], reference_db))

    return threshold_at


# ---- offside typing blacklist ----

class BlacklistDecision(enum.Enum):
    PASS = "PASS"
    TRIGGER_DEAUTH = "TRIGGER_DEAUTH"


def offside_runs(actual: Sequence[Interaction]) -> list[tuple[int, int]]:
    """(first index, length) of each run of consecutive offside typing."""
    runs = []
    start = None
    for i, it in enumerate(actual):
        hit = it.kind is InteractionKind.TYPING and it.offside
        if hit and start is None:
            start = i
        elif not hit and start is not None:
            runs.append((start, i - start))
            start = None
    if start is not None:
        runs.append((start, len(actual) - start))
    return runs


def blacklist_offside_typing(actual: Sequence[Interaction], run_threshold: int = 5) -> BlacklistDecision:
    if run_threshold < 1:
        raise ValueError("run_threshold must be >= 1")
    if any(length >= run_threshold for _, length in offside_runs(actual)):
        return BlacklistDecision.TRIGGER_DEAUTH
    return BlacklistDecision.PASS


def blacklist_alerts(actual: Sequence[Interaction], run_threshold: int = 5) -> list[int]:
    """Alert times: end of the interaction completing each over-long offside run."""
    return [
        actual[start + run_threshold - 1].end
        for start, length in offside_runs(actual)
        if length >= run_threshold
    ]
