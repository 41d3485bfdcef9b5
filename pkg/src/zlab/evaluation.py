"""Window-level error rates, survival curves, confusion matrices, ROC points
and the paired signed-rank test."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .authenticator import AuthParams, LengthMismatch, Outcome, SessionVerdict
from .interactions import BASE_KINDS, InteractionKind
from .trace import atomic_write_text

W_GRID = tuple(range(5, 31))
M_GRID = (0.5, 0.6, 0.7)


class EmptyInput(ValueError):
    pass


class TooFewPairs(ValueError):
    pass


class Polarity(enum.Enum):
    LEGIT = "legit"  # failures are false negatives
    WRONG = "wrong"  # failures are true negatives
    ATTACKER = "attacker"  # passes are false positives


@dataclass
class MetricReport:
    polarity: Polarity
    fail_fraction: Fraction | None  # None when no session had a full window
    pass_fraction: Fraction | None
    n_sessions: int
    n_windows: int
    grid: dict[tuple[int, float], float] = field(default_factory=dict)

    @property
    def rate(self) -> float:
        """FNR, TNR or FPR depending on polarity; NaN without any window."""
        if self.fail_fraction is None:
            return float("nan")
        if self.polarity is Polarity.ATTACKER:
            return float(self.pass_fraction)
        return float(self.fail_fraction)

    @property
    def name(self) -> str:
        return {Polarity.LEGIT: "FNR", Polarity.WRONG: "TNR", Polarity.ATTACKER: "FPR"}[self.polarity]

    def grid_mean(self) -> float:
        return float(np.mean(list(self.grid.values()))) if self.grid else float("nan")


def _fractions(verdicts: Iterable[SessionVerdict]) -> tuple[Fraction | None, Fraction | None, int, int]:
    fails: list[Fraction] = []
    n_windows = 0
    for v in verdicts:
        n = len(v.window_outcomes)
        if n == 0:
            continue
        n_windows += n
        fails.append(Fraction(sum(o is Outcome.FAIL for o in v.window_outcomes), n))
    if not fails:
        return None, None, 0, 0
    fail = sum(fails, Fraction(0)) / len(fails)
    return fail, 1 - fail, len(fails), n_windows


def verdict_rates(verdicts: Sequence[SessionVerdict], polarity: Polarity) -> MetricReport:
    """Rates from already computed verdicts, averaged per session."""
    if not verdicts:
        raise EmptyInput("no verdicts")
    fail, ok, n_s, n_w = _fractions(verdicts)
    return MetricReport(polarity, fail, ok, n_s, n_w)


def window_rates(
    comparisons: Sequence,
    polarity: Polarity,
    params: AuthParams = AuthParams(),
    ws: Sequence[int] = W_GRID,
    ms: Sequence[float] = M_GRID,
) -> MetricReport:
    """Rates at ``params`` plus a grid over (w, m); every window is scored."""
    if not comparisons:
        raise EmptyInput("no sessions")
    head = verdict_rates([c.verdict(params, stop_at_deauth=False) for c in comparisons], polarity)
    for w in ws:
        for m in ms:
            p = AuthParams(w, m, params.g, params.f, params.strict_threshold)
            vs = [c.verdict(p, stop_at_deauth=False) for c in comparisons]
            r = verdict_rates(vs, polarity)
            if r.n_windows:
                head.grid[(w, m)] = r.rate
    return head


def survival_curve(
    verdicts: Sequence[SessionVerdict],
    axis: str = "windows",
    xs: Sequence[float] | None = None,
) -> list[tuple[float, float]]:
    """Fraction of sessions still logged in after x windows (or minutes)."""
    if not verdicts:
        raise EmptyInput("no verdicts")
    if axis not in ("windows", "minutes"):
        raise ValueError("axis must be 'windows' or 'minutes'")
    if axis == "windows":
        if xs is None:
            top = max(max(v.windows_elapsed, v.deauth_window or 0) for v in verdicts)
            xs = range(0, top + 1)
        key = [v.deauth_window for v in verdicts]
        scale = 1.0
    else:
        if xs is None:
            ends = [max(v.window_end_ms) if v.window_end_ms else 0 for v in verdicts]
            xs = [i / 2 for i in range(0, int(math.ceil(max(ends) / 30000.0)) + 1)]
        key = [v.deauth_time_ms for v in verdicts]
        scale = 60000.0
    n = len(verdicts)
    out = []
    for x in xs:
        alive = sum(1 for k in key if k is None or k > x * scale)
        out.append((x, alive / n))
    return out


def censor_value(*suites: Sequence[SessionVerdict]) -> int:
    """Survival credited to sessions that were never deauthenticated.

    One past the longest run of windows in any of the given suites, so a
    session that outlasted the whole experiment ranks above every deauth.
    """
    return 1 + max((v.windows_elapsed for vs in suites for v in vs), default=0)


def survived_windows(v: SessionVerdict, censor: int) -> int:
    return v.deauth_window if v.deauth_window is not None else censor


def mean_survival(verdicts: Sequence[SessionVerdict], censor: int | None = None) -> float:
    """Mean windows survived, never-deauthenticated sessions counted at ``censor``."""
    if not verdicts:
        raise EmptyInput("no verdicts")
    c = censor_value(verdicts) if censor is None else censor
    return float(np.mean([survived_windows(v, c) for v in verdicts]))


@dataclass(frozen=True)
class StatsResult:
    z: float
    p: float
    r: float
    n: int
    w_plus: float


def wilcoxon_signed_rank(xs: Sequence[float], ys: Sequence[float]) -> StatsResult:
    """Paired signed-rank test on ``xs - ys``.

    Zero differences are dropped, tied magnitudes share their average rank, and
    z uses the normal approximation with a 0.5 continuity correction and the
    tie-adjusted variance.  Negative z means ``xs`` tends to be smaller.
    """
    if len(xs) != len(ys):
        raise LengthMismatch(f"{len(xs)} vs {len(ys)} samples")
    d = np.asarray(xs, dtype=np.float64) - np.asarray(ys, dtype=np.float64)
    d = d[d != 0]
    n = len(d)
    if n < 5:
        raise TooFewPairs(f"{n} non-zero differences; need at least 5")
    ranks = rankdata(np.abs(d), method="average")
    w_plus = float(ranks[d > 0].sum())
    mu = n * (n + 1) / 4.0
    sigma = math.sqrt(float((ranks ** 2).sum()) / 4.0)
    diff = w_plus - mu
    z = 0.0 if diff == 0 else (diff - math.copysign(0.5, diff)) / sigma
    p = min(1.0, math.erfc(abs(z) / math.sqrt(2.0)))
    return StatsResult(z, p, z / math.sqrt(n), n, w_plus)


@dataclass
class ConfusionReport:
    kinds: tuple[InteractionKind, ...]
    counts: np.ndarray  # counts[i, j]: truth i predicted j
    precision: dict[InteractionKind, float]
    recall: dict[InteractionKind, float]

    @property
    def accuracy(self) -> float:
        tot = self.counts.sum()
        return float(np.trace(self.counts) / tot) if tot else 0.0


def confusion_matrix(
    truth: Sequence[InteractionKind],
    predicted: Sequence[InteractionKind],
    kinds: Sequence[InteractionKind] = BASE_KINDS,
) -> ConfusionReport:
    if len(truth) != len(predicted):
        raise LengthMismatch(f"{len(truth)} truth vs {len(predicted)} predicted labels")
    kinds = tuple(kinds)
    idx = {k: i for i, k in enumerate(kinds)}
    counts = np.zeros((len(kinds), len(kinds)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        counts[idx[InteractionKind(t)], idx[InteractionKind(p)]] += 1
    col = counts.sum(axis=0)
    row = counts.sum(axis=1)
    precision = {k: float(counts[i, i] / col[i]) if col[i] else 0.0 for i, k in enumerate(kinds)}
    recall = {k: float(counts[i, i] / row[i]) if row[i] else 0.0 for i, k in enumerate(kinds)}
    return ConfusionReport(kinds, counts, precision, recall)


def roc_points(
    legit: Sequence,
    attacker: Sequence,
    w: int = 20,
    ms: Sequence[float] = tuple(round(0.05 * i, 2) for i in range(1, 21)),
) -> list[tuple[float, float, float]]:
    """(m, TPR, FPR) per threshold: window pass rates of legitimate and attacker sessions."""
    out = []
    for m in ms:
        p = AuthParams(w, m)
        tpr = verdict_rates([c.verdict(p, stop_at_deauth=False) for c in legit], Polarity.LEGIT).pass_fraction
        fpr = verdict_rates([c.verdict(p, stop_at_deauth=False) for c in attacker], Polarity.ATTACKER).pass_fraction
        if tpr is None or fpr is None:
            continue
        out.append((m, float(tpr), float(fpr)))
    return out


# ---- report output ----

def format_table(headers: Sequence[str], rows: Sequence[Sequence]) -> str:
    def cell(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(wd) for h, wd in zip(headers, widths)).rstrip()]
    for r in body:
        lines.append("  ".join(c.rjust(wd) for c, wd in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def grid_table(report: MetricReport) -> str:
    ms = sorted({m for _, m in report.grid})
    ws = sorted({w for w, _ in report.grid})
    rows = [[w, *[report.grid.get((w, m), float("nan")) for m in ms]] for w in ws]
    return format_table(["w", *[f"{report.name}@m={m}" for m in ms]], rows)


def dumps_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)


def write_jsonl(path, records: Iterable[dict]) -> None:
    atomic_write_text(path, dumps_jsonl(records))


def write_series(path, points: Iterable[Sequence[float]], header: str = "") -> None:
    """Whitespace-separated columns, one point per line, for external plotting."""
    lines = [f"# {header}"] if header else []
    lines += [" ".join(repr(float(v)) for v in p) for p in points]
    atomic_write_text(Path(path), "\n".join(lines) + "\n")
