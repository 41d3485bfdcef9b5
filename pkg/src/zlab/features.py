"""Segmenter and feature extractor.

Each interaction cuts the bracelet trace at its own ``[start, end]``
(inclusive); samples outside every interaction are never read.  A segment is
summarised by twelve statistics of the accelerometer magnitude and the same
twelve of the gyroscope magnitude.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .interactions import Interaction, InteractionKind
from .trace import MalformedLine, SamplingSpec, SensorTrace, atomic_write_text

STATS = (
    "mean",
    "median",
    "variance",
    "std_dev",
    "mad",
    "iqr",
    "power",
    "energy",
    "peak_to_peak",
    "autocorrelation",
    "kurtosis",
    "skewness",
)
FEATURE_NAMES = tuple(f"{sensor}_{stat}" for sensor in ("accel", "gyro") for stat in STATS)
N_FEATURES = len(FEATURE_NAMES)

# Recorded in model files so a trained forest is tied to these exact definitions.
FEATURE_DEFINITIONS = (
    "magnitude=euclidean norm, no gravity removal; variance uses N-1 (0 if N<2); "
    "mad=median(|x-median|); iqr=Q3-Q1 linear interpolation; power=sum(x^2)/N; "
    "energy=sum(x^2); autocorrelation=lag-1 normalized (0 if N<2 or flat); "
    "kurtosis=bias-corrected sample excess kurtosis G2 (0 if N<4 or flat); "
    "skewness=bias-corrected sample skewness G1 (0 if N<3 or flat)"
)


@dataclass(frozen=True, eq=False)
class Segment:
    interaction: Interaction
    accel_mag: np.ndarray
    gyro_mag: np.ndarray
    sparse: bool


@dataclass(frozen=True, eq=False)
class FeatureVector:
    values: np.ndarray  # shape (24,), order FEATURE_NAMES
    sparse: bool = False

    def __getitem__(self, name: str) -> float:
        return float(self.values[FEATURE_NAMES.index(name)])

    def as_dict(self) -> dict[str, float]:
        return dict(zip(FEATURE_NAMES, self.values.tolist()))


def remove_gravity(trace: SensorTrace, alpha: float = 0.8) -> SensorTrace:
    """Subtract an exponential low-pass gravity estimate from the accelerometer.

    Off by default in the pipeline; note the filter state depends on samples
    before each interaction.
    """
    acc = trace.accel
    grav = np.empty_like(acc)
    g = acc[0] if len(acc) else np.zeros(3)
    for i in range(len(acc)):
        g = alpha * g + (1 - alpha) * acc[i]
        grav[i] = g
    return SensorTrace(trace.t, acc - grav, trace.gyro, trace.nominal_rate_hz)


def segment(
    trace: SensorTrace,
    seq: Sequence[Interaction],
    sampling: SamplingSpec = SamplingSpec(),
) -> list[Segment]:
    acc_mag = np.sqrt(np.einsum("ij,ij->i", trace.accel, trace.accel))
    gyr_mag = np.sqrt(np.einsum("ij,ij->i", trace.gyro, trace.gyro))
    starts = np.array([it.start for it in seq], dtype=np.int64)
    ends = np.array([it.end for it in seq], dtype=np.int64)
    lo = np.searchsorted(trace.t, starts, side="left")
    hi = np.searchsorted(trace.t, ends, side="right")
    out = []
    for it, a, b in zip(seq, lo.tolist(), hi.tolist()):
        am = acc_mag[a:b]
        gm = gyr_mag[a:b]
        out.append(Segment(it, am, gm, (b - a) < sampling.s_min))
    return out


def _stats(m: np.ndarray) -> list[float]:
    n = len(m)
    if n == 0:
        return [0.0] * len(STATS)
    mu = float(m.mean())
    med = float(np.median(m))
    d = m - mu
    ss = float(d @ d)
    var = ss / (n - 1) if n >= 2 else 0.0
    q1, q3 = np.percentile(m, [25.0, 75.0])
    sq = float(m @ m)
    energy = sq
    power = sq / n
    ac = float(d[:-1] @ d[1:]) / ss if (n >= 2 and ss > 0) else 0.0
    m2 = ss / n
    if n >= 3 and m2 > 0:
        m3 = float(np.sum(d ** 3)) / n
        g1 = m3 / m2 ** 1.5
        skew = g1 * math.sqrt(n * (n - 1)) / (n - 2)
    else:
        skew = 0.0
    if n >= 4 and m2 > 0:
        m4 = float(np.sum(d ** 4)) / n
        g2 = m4 / (m2 * m2) - 3.0
        kurt = ((n + 1) * g2 + 6.0) * (n - 1) / ((n - 2) * (n - 3))
    else:
        kurt = 0.0
    return [
        mu,
        med,
        var,
        math.sqrt(var),
        float(np.median(np.abs(m - med))),
        float(q3 - q1),
        power,
        energy,
        float(m.max() - m.min()),
        ac,
        kurt,
        skew,
    ]


def featurize(seg: Segment) -> FeatureVector:
    values = np.array(_stats(seg.accel_mag) + _stats(seg.gyro_mag), dtype=np.float64)
    return FeatureVector(values, seg.sparse)


def feature_matrix(segments: Iterable[Segment]) -> tuple[np.ndarray, np.ndarray]:
    """Featurize many segments at once; returns ``(X, sparse)``."""
    rows = []
    sparse = []
    for seg in segments:
        rows.append(_stats(seg.accel_mag) + _stats(seg.gyro_mag))
        sparse.append(seg.sparse)
    X = np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES)
    return X, np.array(sparse, dtype=bool)


# ---- feature matrix file: "label f1 ... f24 sparse_flag" ----

def serialize_feature_rows(labels: Sequence[InteractionKind], X: np.ndarray, sparse: Sequence[bool]) -> str:
    lines = []
    for label, row, sp in zip(labels, X.tolist(), sparse):
        lines.append(" ".join([label.token, *map(repr, row), "1" if sp else "0"]))
    return "".join(line + "\n" for line in lines)


def loads_feature_rows(text: str) -> tuple[list[InteractionKind], np.ndarray, np.ndarray]:
    labels, rows, sparse = [], [], []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(" ")
        if len(parts) != N_FEATURES + 2 or parts[-1] not in ("0", "1"):
            raise MalformedLine(line_no)
        try:
            labels.append(InteractionKind.from_token(parts[0]))
            rows.append([float(p) for p in parts[1:-1]])
        except (KeyError, ValueError):
            raise MalformedLine(line_no) from None
        sparse.append(parts[-1] == "1")
    return labels, np.array(rows, dtype=np.float64).reshape(-1, N_FEATURES), np.array(sparse, dtype=bool)


def write_feature_rows(path, labels, X, sparse) -> None:
    atomic_write_text(path, serialize_feature_rows(labels, X, sparse))


def parse_feature_rows(path):
    return loads_feature_rows(Path(path).read_text())
