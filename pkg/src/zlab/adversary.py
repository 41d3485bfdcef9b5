"""Synthetic victim sessions and mimicry attackers.

A session is generated as a schedule of motions (typing bursts, device
transitions, scrolls, idle pauses, optional walking epochs).  Terminal events
and the bracelet trace are both rendered from that schedule, so the two
streams agree by construction.  Attackers then rewrite the victim's terminal
events; the victim's bracelet trace is never touched.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .interactions import ExtractorConfig, Interaction, InteractionKind, extract_interactions
from .trace import (
    EventKind,
    EventLog,
    KeySide,
    SensorTrace,
    TerminalEvent,
    atomic_write_text,
    parse_event_log,
    parse_sensor_trace,
    write_event_log,
    write_sensor_trace,
)
from .interactions import parse_interactions, write_interactions

GRAVITY = 9.80665


class SameUser(ValueError):
    pass


# ---- profiles ----

@dataclass(frozen=True)
class Signature:
    """Motion signature of one activity class: amplitude, noise sigma, period."""

    amplitude: float
    noise: float
    period_ms: float


DEFAULT_SIGNATURES = {
    # per-keystroke impulse amplitude; white noise; impulse ring period
    "typing": Signature(1.1, 0.22, 45.0),
    # finger/wheel oscillation
    "scrolling": Signature(0.16, 0.05, 130.0),
    # one smooth swell over the device transition
    "mkkm": Signature(3.2, 0.08, 0.0),
    # hand resting on a device or the desk
    "idle": Signature(0.0, 0.012, 0.0),
    # walking/standing: step bounce plus heel strikes
    "upright": Signature(1.2, 0.22, 560.0),
}


@dataclass(frozen=True)
class UserProfile:
    user_id: str
    interaction_rate_per_s: float = 1.5
    typing_duration_mean_ms: float = 900.0
    mkkm_duration_range_ms: tuple[float, float] = (1000.0, 1500.0)
    keystroke_interval_ms: float = 125.0
    scroll_probability: float = 0.95
    pause_probability: float = 0.02
    signatures: dict = field(default_factory=lambda: dict(DEFAULT_SIGNATURES))
    jitter_seed: int = 0

    def __post_init__(self):
        if not self.interaction_rate_per_s > 0:
            raise ValueError("interaction rate must be positive")
        lo, hi = self.mkkm_duration_range_ms
        if not 0 < lo <= hi <= 5000:
            raise ValueError("MKKM duration range must lie within (0, 5000] ms")
        if not 25 <= self.typing_duration_mean_ms <= 5000:
            raise ValueError("typing duration mean out of range")


def make_users(n: int, seed: int) -> list[UserProfile]:
    ss = np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss.spawn(1)[0])
    users = []
    for i in range(n):
        users.append(
            UserProfile(
                user_id=f"user{i:02d}",
                keystroke_interval_ms=float(rng.uniform(95, 155)),
                jitter_seed=int(rng.integers(0, 2**31 - 1)),
            )
        )
    return users


class Strategy(enum.Enum):
    NAIVE_ALL = "NaiveAll"
    OPP_KEYBOARD = "OppKeyboard"
    OPP_ALL = "OppAll"
    AUDIO_KEYBOARD = "AudioKeyboard"


@dataclass(frozen=True)
class AttackerProfile:
    strategy: Strategy
    latency_median_ms: float = 300.0
    latency_sigma_log: float = 0.5
    mimic_fraction: float = 0.6
    miss_probability: float = 0.05
    early_stop_probability: float = 0.2
    duration_jitter: float = 0.2
    audio_latency_factor: float = 1.5
    detection_probability: float = 0.8
    mkkm_window_ms: float = 450.0
    keystroke_interval_ms: float = 180.0

    def __post_init__(self):
        if self.latency_median_ms < 0 or self.latency_sigma_log < 0:
            raise ValueError("latency parameters must be non-negative")
        for name in ("mimic_fraction", "miss_probability", "early_stop_probability", "detection_probability"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValueError(f"{name} must be in [0, 1]")
        if not 0 <= self.duration_jitter < 1:
            raise ValueError("duration_jitter must be in [0, 1)")

    @classmethod
    def perfect(cls, strategy: Strategy = Strategy.NAIVE_ALL) -> "AttackerProfile":
        """Zero latency, nothing missed, nothing perturbed."""
        return cls(
            strategy,
            latency_median_ms=0.0,
            latency_sigma_log=0.0,
            mimic_fraction=1.0,
            miss_probability=0.0,
            early_stop_probability=0.0,
            duration_jitter=0.0,
            audio_latency_factor=1.0,
            detection_probability=1.0,
        )


def dumps_attacker_profile(p: AttackerProfile) -> str:
    d = asdict(p)
    d["strategy"] = p.strategy.value
    return "".join(f"{k} = {v}\n" for k, v in d.items())


def loads_attacker_profile(text: str) -> AttackerProfile:
    kw: dict = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {line_no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        kw[key] = value
    if "strategy" not in kw:
        raise ValueError("attacker profile needs a strategy")
    out: dict = {"strategy": Strategy(kw.pop("strategy"))}
    fields_ = AttackerProfile.__dataclass_fields__
    for key, value in kw.items():
        if key not in fields_:
            raise ValueError(f"unknown attacker profile key {key!r}")
        out[key] = float(value)
    return AttackerProfile(**out)


# ---- sessions ----

@dataclass(frozen=True, eq=False)
class SessionBundle:
    sensor: SensorTrace
    events: EventLog
    truth: tuple[Interaction, ...]
    user_id: str

    def actual(self, cfg: ExtractorConfig = ExtractorConfig()) -> list[Interaction]:
        return extract_interactions(self.events, cfg)


@dataclass
class _Motion:
    kind: str  # typing | scrolling | mkkm | mouse | idle | upright
    start: int
    end: int
    marks: list = field(default_factory=list)  # (time, KeySide) per keystroke


class _Schedule:
    def __init__(self):
        self.events: list[TerminalEvent] = []
        self.motions: list[_Motion] = []


_SIDE_GAIN = {KeySide.LEFT: 0.2, KeySide.MIDDLE: 0.6, KeySide.RIGHT: 1.0, KeySide.NA: 1.0}


def _key_side(rng) -> KeySide:
    u = rng.random()
    return KeySide.LEFT if u < 0.4 else (KeySide.MIDDLE if u < 0.6 else KeySide.RIGHT)


def _typing_burst(rng, t0: int, length: float, interval: float) -> list[int]:
    times = [t0]
    t = float(t0)
    while True:
        t += max(30.0, interval * math.exp(rng.normal(0.0, 0.3)))
        if t - t0 > length:
            break
        times.append(int(round(t)))
    return times


def _draw_mkkm(rng, profile: UserProfile) -> int:
    lo, hi = profile.mkkm_duration_range_ms
    # transitions cluster at the quick end of the range
    return int(round(rng.triangular(lo, lo, hi)))


def _plan(profile: UserProfile, duration_ms: int, rng, upright_epochs: int) -> _Schedule:
    sch = _Schedule()
    ev = sch.events
    mo = sch.motions
    epochs = sorted(rng.uniform(0.1, 0.9, size=upright_epochs) * duration_ms) if upright_epochs else []
    t = 300 + int(rng.integers(0, 400))
    keyboard_next = True
    # field-by-field form filling: type, reach for the mouse, scroll/click, come back
    while t < duration_ms - 3000:
        if epochs and t >= epochs[0]:
            epochs.pop(0)
            gap0 = int(rng.uniform(1200, 2000))
            walk = int(rng.uniform(9000, 16000))
            mo.append(_Motion("idle", t, t + gap0))
            mo.append(_Motion("upright", t + gap0, t + gap0 + walk))
            t += gap0 + walk
            mo.append(_Motion("idle", t, t + 1500))
            t += 1500
            continue
        if keyboard_next:
            n_runs = 1 + (rng.random() < 0.03)
            for r in range(n_runs):
                if rng.random() < 0.07:
                    # a long stretch of typing, split into several interactions
                    length = rng.uniform(1500.0, 2600.0)
                else:
                    length = min(990.0, profile.typing_duration_mean_ms * 0.95 * math.exp(rng.normal(0.0, 0.25)))
                keys = _typing_burst(rng, t, length, profile.keystroke_interval_ms)
                sides = [_key_side(rng) for _ in keys]
                for k, side in zip(keys, sides):
                    ev.append(TerminalEvent(k, EventKind.KEY_DOWN, side))
                mo.append(_Motion("typing", keys[0], keys[-1] + 40, list(zip(keys, sides))))
                t = keys[-1]
                if r + 1 < n_runs or rng.random() < profile.pause_probability:
                    pause = int(rng.uniform(1100, 2500))
                    mo.append(_Motion("idle", t + 40, t + pause))
                    t += pause
                    if r + 1 == n_runs:
                        # tap one more key after a pause (e.g. Tab/Enter)
                        ev.append(TerminalEvent(t, EventKind.KEY_DOWN, KeySide.RIGHT))
        else:
            if rng.random() < profile.scroll_probability:
                n_ev = int(rng.integers(5, 10))
                step = rng.uniform(15, 35)
                times = [int(round(t + i * step)) for i in range(n_ev)]
                for s in times:
                    ev.append(TerminalEvent(s, EventKind.SCROLL))
                mo.append(_Motion("scrolling", times[0], times[-1] + 30))
                t = times[-1]
            else:
                ev.append(TerminalEvent(t, EventKind.MOUSE_MOVE))
            # aim and click
            aim = int(rng.uniform(40, 140))
            ev.append(TerminalEvent(t + aim // 2, EventKind.MOUSE_MOVE))
            ev.append(TerminalEvent(t + aim, EventKind.MOUSE_CLICK))
            mo.append(_Motion("mouse", t, t + aim))
            t += aim
            if rng.random() < profile.pause_probability:
                pause = int(rng.uniform(1100, 2500))
                mo.append(_Motion("idle", t, t + pause))
                t += pause
                ev.append(TerminalEvent(t, EventKind.MOUSE_MOVE))
        gap = _draw_mkkm(rng, profile)
        mo.append(_Motion("mkkm", t, t + gap))
        t += gap
        keyboard_next = not keyboard_next
    ev.sort(key=lambda e: e.t)
    return sch


def _render_sensor(sch: _Schedule, profile: UserProfile, duration_ms: int, rate_hz: float, rng) -> SensorTrace:
    step = 1000.0 / rate_hz
    t = np.round(np.arange(0.0, duration_ms, step)).astype(np.int64)
    n = len(t)
    jr = np.random.default_rng(profile.jitter_seed)
    amp = {k: float(jr.uniform(0.8, 1.25)) for k in profile.signatures}
    sig = profile.signatures
    # wrist orientation: gravity direction in the sensor frame
    gdir = jr.normal(size=3)
    gdir /= np.linalg.norm(gdir)
    gdir = 0.6 * gdir + 0.4 * np.array([0.0, 0.0, 1.0])
    gdir /= np.linalg.norm(gdir)
    accel = np.tile(gdir * GRAVITY, (n, 1))
    gyro = np.zeros((n, 3))
    idle = sig["idle"]
    accel += rng.normal(0.0, idle.noise, (n, 3))
    gyro += rng.normal(0.0, idle.noise * 0.5, (n, 3))

    def span(a, b):
        lo = int(np.searchsorted(t, a, side="left"))
        hi = int(np.searchsorted(t, b, side="right"))
        return lo, hi

    def unit():
        v = rng.normal(size=3)
        return v / np.linalg.norm(v)

    for m in sch.motions:
        lo, hi = span(m.start, m.end)
        if hi <= lo:
            continue
        k = hi - lo
        tt = (t[lo:hi] - m.start).astype(np.float64)
        if m.kind == "typing":
            s = sig["typing"]
            a = amp["typing"]
            accel[lo:hi] += rng.normal(0.0, s.noise * a, (k, 3))
            gyro[lo:hi] += rng.normal(0.0, s.noise * a * 0.6, (k, 3))
            for key_t, side in m.marks:
                klo, khi = span(key_t, key_t + 3 * s.period_ms)
                if khi <= klo:
                    continue
                kt = (t[klo:khi] - key_t).astype(np.float64)
                ring = np.exp(-kt / s.period_ms) * np.cos(2 * np.pi * kt / s.period_ms)
                # the bracelet sits on the right wrist; left-hand keys barely reach it
                strike = s.amplitude * a * rng.uniform(0.7, 1.3) * _SIDE_GAIN[side]
                accel[klo:khi] += np.outer(ring * strike, unit())
                gyro[klo:khi] += np.outer(ring * strike * 0.5, unit())
        elif m.kind in ("scrolling", "mouse"):
            s = sig["scrolling"]
            a = amp["scrolling"]
            period = s.period_ms * (1.0 if m.kind == "scrolling" else 2.5)
            phase = rng.uniform(0, 2 * np.pi)
            osc = np.sin(2 * np.pi * tt / period + phase)
            accel[lo:hi] += np.outer(osc * s.amplitude * a, unit()) + rng.normal(0.0, s.noise * a, (k, 3))
            gyro[lo:hi] += np.outer(osc * s.amplitude * a * 1.6, unit()) + rng.normal(0.0, s.noise * a, (k, 3))
        elif m.kind == "mkkm":
            s = sig["mkkm"]
            a = amp["mkkm"] * rng.uniform(0.8, 1.2)
            dur = float(m.end - m.start)
            # the hand lingers briefly, travels with a minimum-jerk profile, then settles
            lead = min(rng.uniform(30, 150), dur / 4)
            tail = min(rng.uniform(50, 150), dur / 4)
            u = np.clip((tt - lead) / max(1.0, dur - lead - tail), 0.0, 1.0)
            push = (60 * u - 180 * u ** 2 + 120 * u ** 3) / 5.7735
            turn = np.sin(np.pi * u) ** 2
            moving = (u > 0) & (u < 1)
            # lifting the hand off a device is mostly vertical
            lift = 0.8 * gdir + 0.2 * unit()
            lift /= np.linalg.norm(lift)
            accel[lo:hi] += np.outer(push * s.amplitude * a, lift) + rng.normal(0.0, s.noise, (k, 3)) * moving[:, None]
            gyro[lo:hi] += np.outer(turn * s.amplitude * a * 0.6, unit()) + rng.normal(0.0, s.noise, (k, 3)) * moving[:, None]
        elif m.kind == "upright":
            s = sig["upright"]
            a = amp["upright"]
            phase = rng.uniform(0, 2 * np.pi)
            bounce = np.sin(2 * np.pi * tt / s.period_ms + phase)
            accel[lo:hi] += np.outer(bounce * s.amplitude * a, gdir) + rng.normal(0.0, s.noise * a, (k, 3))
            gyro[lo:hi] += np.outer(bounce * s.amplitude * a * 0.5, unit()) + rng.normal(0.0, s.noise * a, (k, 3))
            heel = (np.mod(tt + phase * s.period_ms / (2 * np.pi), s.period_ms / 2) < 25).astype(float)
            accel[lo:hi] += np.outer(heel * s.amplitude * a * 1.5, gdir)
    return SensorTrace(t, np.round(accel, 6), np.round(gyro, 6), rate_hz)


_TRUTH_KIND = {
    "typing": InteractionKind.TYPING,
    "scrolling": InteractionKind.SCROLLING,
    "mkkm": InteractionKind.MKKM,
    "idle": InteractionKind.IDLE,
    "upright": InteractionKind.UPRIGHT,
}


def generate_session(
    profile: UserProfile,
    duration_ms: int,
    seed: int,
    *,
    rate_hz: float = 200.0,
    upright_epochs: int = 0,
) -> SessionBundle:
    """Deterministic synthetic session for ``profile``."""
    ss = np.random.SeedSequence([seed, profile.jitter_seed])
    plan_rng, sensor_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    sch = _plan(profile, duration_ms, plan_rng, upright_epochs)
    sensor = _render_sensor(sch, profile, duration_ms, rate_hz, sensor_rng)
    truth = tuple(
        Interaction(_TRUTH_KIND[m.kind], m.start, m.end)
        for m in sch.motions
        if m.kind in _TRUTH_KIND and m.end > m.start
    )
    return SessionBundle(sensor, EventLog(tuple(sch.events), profile.user_id), truth, profile.user_id)


# ---- attacks ----

def _latency(rng, attacker: AttackerProfile, factor: float = 1.0) -> float:
    med = attacker.latency_median_ms * factor
    if med <= 0:
        return 0.0
    return float(med * math.exp(rng.normal(0.0, attacker.latency_sigma_log)))


def _bursts(events, idle_ms: int) -> list[list[TerminalEvent]]:
    out: list[list[TerminalEvent]] = []
    for e in events:
        if out and out[-1][-1].kind.is_keyboard == e.kind.is_keyboard and e.t - out[-1][-1].t < idle_ms:
            out[-1].append(e)
        else:
            out.append([e])
    return out


def _naive_all(victim: SessionBundle, attacker: AttackerProfile, rng, cfg: ExtractorConfig):
    out = []
    prev_end = None
    for burst in _bursts(victim.events.events, cfg.idle_threshold_ms):
        lat = _latency(rng, attacker)
        miss = rng.random() < attacker.miss_probability
        scale = 1.0 + rng.uniform(-attacker.duration_jitter, attacker.duration_jitter) if attacker.duration_jitter else 1.0
        if miss:
            continue
        b0 = burst[0].t
        start = b0 + int(round(lat))
        if prev_end is not None and start <= prev_end:
            # one pair of hands: a burst cannot begin before the previous one ended
            start = prev_end + 1
        for e in burst:
            out.append(TerminalEvent(start + int(round((e.t - b0) * scale)), e.kind, e.key_side))
        prev_end = out[-1].t
    return out


def _key_events(rng, start: int, end: int, interval: float) -> list[TerminalEvent]:
    times = [start]
    t = float(start)
    while True:
        t += max(40.0, interval * math.exp(rng.normal(0.0, 0.3)))
        if t >= end:
            break
        times.append(int(round(t)))
    if times[-1] != end:
        times.append(end)
    return [TerminalEvent(x, EventKind.KEY_DOWN, _key_side(rng)) for x in times]


def _opp_keyboard(victim, attacker, rng, cfg, audio: bool):
    typing = [it for it in victim.actual(cfg) if it.kind is InteractionKind.TYPING]
    k = int(round(attacker.mimic_fraction * len(typing)))
    # longest first; earlier start wins ties
    chosen = sorted(sorted(typing, key=lambda it: (-it.duration, it.start))[:k], key=lambda it: it.start)
    factor = attacker.audio_latency_factor if audio else 1.0
    out = []
    last = None
    for it in chosen:
        lat = _latency(rng, attacker, factor)
        heard = rng.random() < attacker.detection_probability if audio else True
        stop_early = rng.random() < attacker.early_stop_probability
        frac = rng.uniform(0.4, 0.9)
        if not heard:
            continue
        start = it.start + int(round(lat))
        if last is not None and start <= last:
            start = last + 1
        end = it.end
        if stop_early:
            end = start + int((end - start) * frac)
        if end - start < cfg.min_duration_ms:
            continue
        keys = _key_events(rng, start, end, attacker.keystroke_interval_ms)
        out.extend(keys)
        last = keys[-1].t
    return out


def _opp_all(victim, attacker, rng, cfg):
    actual = victim.actual(cfg)
    vev = victim.events.events
    vt = [e.t for e in vev]
    out: list[TerminalEvent] = []
    synced = True
    next_mkkm = [None] * len(actual)
    nxt = None
    for i in range(len(actual) - 1, -1, -1):
        next_mkkm[i] = nxt
        if actual[i].kind is InteractionKind.MKKM:
            nxt = actual[i].start

    def last_t():
        return out[-1].t if out else None

    for i, it in enumerate(actual):
        if it.kind is InteractionKind.MKKM:
            lat = _latency(rng, attacker)
            if lat > attacker.mkkm_window_ms:
                synced = False
                continue
            j = int(np.searchsorted(vt, it.start, side="right")) - 1
            from_keyboard = vev[j].kind.is_keyboard if j >= 0 else True
            lt = last_t()
            on_old = out and out[-1].kind.is_keyboard == from_keyboard
            if not on_old or lt < it.start - cfg.idle_threshold_ms:
                touch = max(it.start, (lt or 0) + 1)
                out.append(
                    TerminalEvent(touch, EventKind.KEY_DOWN, KeySide.RIGHT)
                    if from_keyboard
                    else TerminalEvent(touch, EventKind.MOUSE_MOVE)
                )
            arrive = max(it.end + int(round(lat)), out[-1].t + 1)
            out.append(
                TerminalEvent(arrive, EventKind.MOUSE_MOVE)
                if from_keyboard
                else TerminalEvent(arrive, EventKind.KEY_DOWN, KeySide.RIGHT)
            )
            synced = True
            continue
        if not synced:
            continue
        lat = _latency(rng, attacker)
        lt = last_t()
        start = it.start + int(round(lat))
        if lt is not None and start <= lt:
            start = lt + 1
        if it.kind is InteractionKind.TYPING:
            if it.end - start >= cfg.min_duration_ms:
                keys = _key_events(rng, start, it.end, attacker.keystroke_interval_ms)
                out.extend(keys)
        elif it.kind is InteractionKind.SCROLLING:
            limit = next_mkkm[i] if next_mkkm[i] is not None else it.end + 1000
            src = [e.t for e in vev if e.kind is EventKind.SCROLL and it.start <= e.t <= it.end]
            times = [start + (s - src[0]) for s in src]
            times = [x for x in times if x < limit]
            if len(times) >= cfg.min_scroll_events:
                out.extend(TerminalEvent(x, EventKind.SCROLL) for x in times)
    return out


def apply_attack(
    victim: SessionBundle,
    attacker: AttackerProfile,
    seed: int,
    cfg: ExtractorConfig = ExtractorConfig(),
) -> EventLog:
    """Attacker's terminal events while mimicking ``victim`` at another terminal."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A7A]))
    s = attacker.strategy
    if s is Strategy.NAIVE_ALL:
        ev = _naive_all(victim, attacker, rng, cfg)
    elif s is Strategy.OPP_KEYBOARD:
        ev = _opp_keyboard(victim, attacker, rng, cfg, audio=False)
    elif s is Strategy.AUDIO_KEYBOARD:
        ev = _opp_keyboard(victim, attacker, rng, cfg, audio=True)
    else:
        ev = _opp_all(victim, attacker, rng, cfg)
    return EventLog.from_unsorted(ev, f"{victim.user_id}-attacker")


def mismatch_pair(a: SessionBundle, b: SessionBundle) -> SessionBundle:
    """Terminal events of ``a`` against the bracelet of ``b``, both starting at 0."""
    if a.user_id == b.user_id:
        raise SameUser(f"cannot mismatch {a.user_id} with itself")
    t0 = int(b.sensor.t[0])
    shift = -t0
    return SessionBundle(
        b.sensor.shifted(shift),
        a.events,
        tuple(it.shifted(shift) for it in b.truth),
        f"{a.user_id}~{b.user_id}",
    )


def desync(bundle: SessionBundle, shift_ms: int) -> SessionBundle:
    """Delay every terminal event by ``shift_ms``; the bracelet trace is unchanged."""
    if shift_ms < 0:
        raise ValueError("shift_ms must be >= 0")
    if shift_ms == 0:
        return bundle
    return replace(bundle, events=bundle.events.shifted(shift_ms))


def separable_rows(
    n_rows: int,
    seed: int,
    separation: float = 3.0,
    n_users: int = 1,
    n_features: int = 24,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gaussian feature rows for the three base classes.

    Class means sit ``separation`` standard deviations apart along every
    feature.  Returns ``(X, y, users)`` with labels cycling over the classes.
    """
    rng = np.random.default_rng(seed)
    base = (InteractionKind.TYPING, InteractionKind.SCROLLING, InteractionKind.MKKM)
    y = np.array([int(base[i % 3]) for i in range(n_rows)], dtype=np.int64)
    centres = np.array([i * separation for i in range(3)])
    X = rng.normal(size=(n_rows, n_features)) + centres[np.arange(n_rows) % 3][:, None]
    users = np.array([f"u{i % n_users:02d}" for i in range(n_rows)])
    return X, y, users


# ---- bundle directories ----

def save_bundle(bundle: SessionBundle, directory) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_sensor_trace(bundle.sensor, d / "sensor.txt")
    write_event_log(bundle.events, d / "events.txt")
    write_interactions(bundle.truth, d / "truth.txt")
    atomic_write_text(d / "user.txt", bundle.user_id + "\n")


def load_bundle(directory) -> SessionBundle:
    d = Path(directory)
    user = (d / "user.txt").read_text().strip() if (d / "user.txt").exists() else d.name
    truth = tuple(parse_interactions(d / "truth.txt")) if (d / "truth.txt").exists() else ()
    return SessionBundle(parse_sensor_trace(d / "sensor.txt"), parse_event_log(d / "events.txt"), truth, user)
