"""End-to-end comparison of one session: events -> actual sequence,
bracelet -> predicted sequence, both ready for the authenticator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .authenticator import AuthParams, SessionVerdict, run_session
from .classifier import ForestModel, TrainingSet, VoteTreeModel
from .features import feature_matrix, segment
from .interactions import BASE_KINDS, ExtractorConfig, Interaction, InteractionKind, extract_interactions
from .trace import EventLog, SamplingSpec, SensorTrace


@dataclass(frozen=True)
class PipelineConfig:
    extractor: ExtractorConfig = ExtractorConfig()
    sampling: SamplingSpec = SamplingSpec()
    five_class: bool = False
    continuous_mode: bool = False
    idle_segment_ms: int = 1000
    # keep idle tiles clear of the motion that starts/ends terminal activity
    idle_margin_ms: int = 250


@dataclass
class Comparison:
    actual: list[Interaction]
    predicted: list[InteractionKind]
    sparse: np.ndarray
    alerts: list[int] = field(default_factory=list)

    def verdict(self, params: AuthParams = AuthParams(), **kw) -> SessionVerdict:
        return run_session(self.actual, self.predicted, params, alerts=self.alerts, **kw)


def tiles(start: int, end: int, length: int) -> list[tuple[int, int]]:
    out = []
    t = start
    while t + length <= end:
        out.append((t, t + length))
        t += length
    return out


def idle_tiles(actual: Sequence[Interaction], log: EventLog, cfg: PipelineConfig) -> list[Interaction]:
    """Fixed-length segments covering terminal-idle time.

    Idle time is any stretch between consecutive terminal events, at least the
    idle threshold long, not covered by an actual interaction.
    """
    covered = sorted((it.start, it.end) for it in actual)
    times = [e.t for e in log.events]
    out = []
    ci = 0
    for a, b in zip(times, times[1:]):
        if b - a < cfg.extractor.idle_threshold_ms:
            continue
        while ci < len(covered) and covered[ci][1] <= a:
            ci += 1
        if ci < len(covered) and covered[ci][0] < b and covered[ci][1] > a:
            continue  # the gap is an MKKM (or otherwise covered)
        lo, hi = a + cfg.idle_margin_ms, b - cfg.idle_margin_ms
        for s, e in tiles(lo, hi, cfg.idle_segment_ms):
            out.append(Interaction(InteractionKind.IDLE, s, e))
    return out


def _predict(forest, vote_tree, sensor, seq, cfg, five: bool):
    segs = segment(sensor, seq, cfg.sampling)
    X, sparse = feature_matrix(segs)
    if not len(seq):
        return [], sparse
    if five:
        if vote_tree is None:
            raise ValueError("five-class prediction needs a vote tree")
        y = vote_tree.predict_many(forest.votes(X))
    else:
        y = forest.predict(X)
    return [InteractionKind(int(k)) for k in y], sparse


def compare(
    events: EventLog,
    sensor: SensorTrace,
    forest: ForestModel,
    vote_tree: VoteTreeModel | None = None,
    cfg: PipelineConfig = PipelineConfig(),
) -> Comparison:
    actual = extract_interactions(events, cfg.extractor)
    predicted, sparse = _predict(forest, vote_tree, sensor, actual, cfg, cfg.five_class)
    alerts: list[int] = []
    if cfg.continuous_mode:
        idle = idle_tiles(actual, events, cfg)
        kinds, _ = _predict(forest, vote_tree, sensor, idle, cfg, True)
        alerts = [it.end for it, k in zip(idle, kinds) if k in BASE_KINDS]
    return Comparison(actual, predicted, sparse, alerts)


def training_rows(
    events: EventLog,
    sensor: SensorTrace,
    user: str,
    cfg: PipelineConfig = PipelineConfig(),
    extended: Sequence[Interaction] = (),
) -> TrainingSet:
    """Labelled feature rows from a legitimate session.

    Labels are the actual sequence's kinds.  ``extended`` supplies Idle and
    Upright intervals, which are cut into fixed-length tiles.
    """
    seq = list(extract_interactions(events, cfg.extractor))
    for it in extended:
        if it.kind in (InteractionKind.IDLE, InteractionKind.UPRIGHT):
            seq.extend(Interaction(it.kind, s, e) for s, e in tiles(it.start, it.end, cfg.idle_segment_ms))
    X, sparse = feature_matrix(segment(sensor, seq, cfg.sampling))
    y = np.array([int(it.kind) for it in seq], dtype=np.int64)
    return TrainingSet(X, y, np.full(len(seq), user), sparse)
