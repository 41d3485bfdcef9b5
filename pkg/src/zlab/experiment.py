"""Full experiment: corpus, leave-one-user-out models, scenario suites,
sweeps, and the report files."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import adversary as adv
from .authenticator import AuthParams, SessionVerdict
from .classifier import (
    ForestModel,
    InsufficientClasses,
    TrainingSet,
    VoteTreeModel,
    train_forest,
    train_vote_tree,
)
from .evaluation import (
    M_GRID,
    W_GRID,
    MetricReport,
    Polarity,
    TooFewPairs,
    confusion_matrix,
    dumps_jsonl,
    format_table,
    grid_table,
    censor_value,
    mean_survival,
    roc_points,
    survival_curve,
    survived_windows,
    wilcoxon_signed_rank,
    window_rates,
    write_series,
)
from .features import segment
from .interactions import BASE_KINDS, ExtractorConfig, Hand, InteractionKind, extract_interactions
from .pipeline import Comparison, PipelineConfig, compare, training_rows
from .trace import SamplingSpec, atomic_write_text, downsample

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


DEFAULT_ATTACKERS = tuple(adv.AttackerProfile(s) for s in adv.Strategy)


@dataclass(frozen=True)
class ExperimentConfig:
    n_users: int = 20
    duration_ms: int = 600_000
    seed: int = 1
    rate_hz: float = 200.0
    upright_epochs: int = 0
    train_seed: int = 1
    n_trees: int = 100
    extractor: ExtractorConfig = ExtractorConfig()
    sampling: SamplingSpec = SamplingSpec()
    auth: AuthParams = AuthParams()
    continuous_mode: bool = False
    five_class: bool = False
    attackers: tuple[adv.AttackerProfile, ...] = DEFAULT_ATTACKERS
    desync_shifts: tuple[int, ...] = (0, 200, 500)
    downsample_rates: tuple[float, ...] = (200.0, 100.0, 50.0, 25.0)
    grace_periods: tuple[int, ...] = (1, 2)

    @property
    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(self.extractor, self.sampling, self.five_class, self.continuous_mode)

    def to_json(self) -> dict:
        d = asdict(self)
        d["extractor"]["bracelet_hand"] = self.extractor.bracelet_hand.value
        d["attackers"] = [adv.dumps_attacker_profile(a) for a in self.attackers]
        return d


def _sub(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be an object")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name}: {exc}") from None


def config_from_dict(doc: dict, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from a parsed manifest; unknown keys are errors."""
    if not isinstance(doc, dict):
        raise ConfigError("manifest must be a JSON object")
    doc = dict(doc)
    kw: dict = {}
    ext = doc.pop("extractor", None)
    if isinstance(ext, dict) and "bracelet_hand" in ext:
        ext = dict(ext)
        try:
            ext["bracelet_hand"] = Hand(ext["bracelet_hand"])
        except ValueError:
            raise ConfigError("extractor.bracelet_hand must be L or R") from None
    kw["extractor"] = _sub(ExtractorConfig, ext, "extractor")
    kw["sampling"] = _sub(SamplingSpec, doc.pop("sampling", None), "sampling")
    kw["auth"] = _sub(AuthParams, doc.pop("auth", None), "auth")
    if "attackers" in doc:
        profiles = []
        for item in doc.pop("attackers"):
            try:
                if isinstance(item, str) and "=" in item:
                    profiles.append(adv.loads_attacker_profile(item))
                elif isinstance(item, str):
                    path = Path(item) if base_dir is None else base_dir / item
                    profiles.append(adv.loads_attacker_profile(path.read_text()))
                elif isinstance(item, dict):
                    text = "".join(f"{k} = {v}\n" for k, v in item.items())
                    profiles.append(adv.loads_attacker_profile(text))
                else:
                    raise ConfigError("attackers entries must be objects, profile text or paths")
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"attacker profile: {exc}") from None
        kw["attackers"] = tuple(profiles)
    for key in ("desync_shifts", "downsample_rates", "grace_periods"):
        if key in doc:
            kw[key] = tuple(doc.pop(key))
    fields_ = ExperimentConfig.__dataclass_fields__
    for key, value in doc.items():
        if key not in fields_:
            raise ConfigError(f"unknown manifest key {key!r}")
        kw[key] = value
    try:
        cfg = ExperimentConfig(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    if cfg.n_users < 2:
        raise ConfigError("n_users must be >= 2")
    if cfg.duration_ms <= 0:
        raise ConfigError("duration_ms must be positive")
    if cfg.rate_hz <= 0:
        raise ConfigError("rate_hz must be positive")
    if cfg.n_trees < 1:
        raise ConfigError("n_trees must be >= 1")
    if any(s < 0 for s in cfg.desync_shifts):
        raise ConfigError("desync shifts must be >= 0")
    for r in cfg.downsample_rates:
        k = cfg.rate_hz / r
        if r <= 0 or abs(k - round(k)) > 1e-9:
            raise ConfigError(f"downsample rate {r} does not divide {cfg.rate_hz}")


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        doc = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p.name}: {exc}") from None
    return config_from_dict(doc, p.parent)


# ---- corpus and models ----

def build_corpus(cfg: ExperimentConfig) -> list[adv.SessionBundle]:
    users = adv.make_users(cfg.n_users, cfg.seed)
    return [
        adv.generate_session(u, cfg.duration_ms, cfg.seed + i, rate_hz=cfg.rate_hz, upright_epochs=cfg.upright_epochs)
        for i, u in enumerate(users)
    ]


def corpus_rows(bundles: Sequence[adv.SessionBundle], cfg: PipelineConfig) -> TrainingSet:
    return TrainingSet.concat(
        [training_rows(b.events, b.sensor, b.user_id, cfg, extended=b.truth) for b in bundles]
    )


@dataclass
class UserModel:
    forest: ForestModel
    vote_tree: VoteTreeModel | None


def louo_models(data: TrainingSet, cfg: ExperimentConfig, need_vote_tree: bool) -> dict[str, UserModel]:
    out = {}
    for u in sorted(set(data.users.tolist())):
        rest = data.subset(data.users != u)
        forest = train_forest(rest, cfg.train_seed, n_trees=cfg.n_trees)
        vt = None
        if need_vote_tree:
            vt = train_vote_tree(forest, rest)
        out[u] = UserModel(forest, vt)
    return out


# ---- suites ----

@dataclass
class Suite:
    name: str
    polarity: Polarity
    comparisons: list[Comparison]

    def verdicts(self, params: AuthParams) -> list[SessionVerdict]:
        return [c.verdict(params) for c in self.comparisons]


def _cmp(events, sensor, model: UserModel, pcfg: PipelineConfig) -> Comparison:
    return compare(events, sensor, model.forest, model.vote_tree, pcfg)


def legit_suite(bundles, models, pcfg) -> Suite:
    return Suite("legit", Polarity.LEGIT, [_cmp(b.events, b.sensor, models[b.user_id], pcfg) for b in bundles])


def mismatch_suite(bundles, models, pcfg) -> Suite:
    out = []
    n = len(bundles)
    for i, b in enumerate(bundles):
        other = bundles[(i + 1) % n]
        pair = adv.mismatch_pair(other, b)
        out.append(_cmp(pair.events, pair.sensor, models[b.user_id], pcfg))
    return Suite("mismatch", Polarity.WRONG, out)


def attack_suite(bundles, models, pcfg, attacker: adv.AttackerProfile, seed: int) -> Suite:
    out = []
    for i, b in enumerate(bundles):
        ev = adv.apply_attack(b, attacker, seed + i, pcfg.extractor)
        out.append(_cmp(ev, b.sensor, models[b.user_id], pcfg))
    return Suite(attacker.strategy.value, Polarity.ATTACKER, out)


def desync_suite(bundles, models, pcfg, shift_ms: int) -> Suite:
    out = []
    for b in bundles:
        d = adv.desync(b, shift_ms)
        out.append(_cmp(d.events, d.sensor, models[b.user_id], pcfg))
    return Suite(f"desync{shift_ms}", Polarity.LEGIT, out)


def grid_fail_fraction(suite: Suite, params: AuthParams) -> float:
    """Fail-window fraction averaged over the (w, m) grid."""
    rep = window_rates(suite.comparisons, Polarity.LEGIT, params)
    return rep.grid_mean()


# ---- downsampling ----

@dataclass
class RatePoint:
    rate_hz: float
    accuracy: float
    sparse_short_fraction: float
    n_short: int


def downsample_point(
    bundles: Sequence[adv.SessionBundle],
    rate_hz: float,
    cfg: ExperimentConfig,
    short_ms: int = 100,
) -> RatePoint:
    """Train on the first half of the users and test on the rest, at one rate."""
    k = int(round(cfg.rate_hz / rate_hz))
    pcfg = PipelineConfig(cfg.extractor, cfg.sampling)
    split = len(bundles) // 2
    parts = []
    short = sparse_short = 0
    for i, b in enumerate(bundles):
        sensor = downsample(b.sensor, k) if k > 1 else b.sensor
        rows = training_rows(b.events, sensor, b.user_id, pcfg)
        parts.append(rows)
        if i >= split:
            seq = extract_interactions(b.events, cfg.extractor)
            segs = segment(sensor, seq, cfg.sampling)
            for s in segs:
                if s.interaction.duration < short_ms:
                    short += 1
                    sparse_short += s.sparse
    train = TrainingSet.concat(parts[:split])
    test = TrainingSet.concat(parts[split:])
    forest = train_forest(train, cfg.train_seed, n_trees=cfg.n_trees)
    base = np.isin(test.y, [int(x) for x in BASE_KINDS])
    pred = forest.predict(test.X[base])
    acc = float(np.mean(pred == test.y[base])) if base.any() else 0.0
    return RatePoint(rate_hz, acc, sparse_short / short if short else 0.0, short)


# ---- full run ----

@dataclass
class ExperimentResult:
    config: ExperimentConfig
    suites: dict[str, Suite]
    rates: dict[str, MetricReport]
    desync: dict[int, float]
    rate_points: list[RatePoint]
    wilcoxon: dict
    confusion: object
    records: list[dict] = field(default_factory=list)


def run_experiment(cfg: ExperimentConfig, out_dir=None) -> ExperimentResult:
    validate(cfg)
    pcfg = cfg.pipeline
    log.info("generating %d sessions", cfg.n_users)
    bundles = build_corpus(cfg)
    data = corpus_rows(bundles, pcfg)
    need_vt = cfg.five_class or cfg.continuous_mode
    if need_vt and cfg.upright_epochs < 1:
        raise ConfigError("five-class and continuous runs need upright_epochs >= 1")
    log.info("training %d leave-one-user-out models", len(bundles))
    try:
        models = louo_models(data, cfg, need_vt)
    except InsufficientClasses as exc:
        raise ConfigError(f"{exc}; raise upright_epochs for five-class or continuous runs") from None

    suites = {"legit": legit_suite(bundles, models, pcfg), "mismatch": mismatch_suite(bundles, models, pcfg)}
    for i, a in enumerate(cfg.attackers):
        suites[a.strategy.value] = attack_suite(bundles, models, pcfg, a, cfg.seed * 1000 + i * 100)
    rates = {name: window_rates(s.comparisons, s.polarity, cfg.auth) for name, s in suites.items()}

    desync = {}
    for shift in cfg.desync_shifts:
        s = suites["legit"] if shift == 0 else desync_suite(bundles, models, pcfg, shift)
        desync[shift] = grid_fail_fraction(s, cfg.auth)

    rate_points = [downsample_point(bundles, r, cfg) for r in cfg.downsample_rates]

    truth, pred = [], []
    for c in suites["legit"].comparisons:
        truth += [it.kind for it in c.actual]
        pred += c.predicted
    kinds = tuple(InteractionKind) if cfg.five_class else BASE_KINDS
    confusion = confusion_matrix(truth, pred, kinds)

    wil = {}
    if "OppKeyboard" in suites and "NaiveAll" in suites:
        for g in cfg.grace_periods:
            p = replace(cfg.auth, g=g)
            opp_v = suites["OppKeyboard"].verdicts(p)
            naive_v = suites["NaiveAll"].verdicts(p)
            c = censor_value(opp_v, naive_v)
            opp = [survived_windows(v, c) for v in opp_v]
            naive = [survived_windows(v, c) for v in naive_v]
            try:
                r = wilcoxon_signed_rank(naive, opp)
                wil[g] = {"z": r.z, "p": r.p, "r": r.r, "n": r.n}
            except TooFewPairs as exc:
                wil[g] = {"error": str(exc)}

    result = ExperimentResult(cfg, suites, rates, desync, rate_points, wil, confusion)
    result.records = _records(result)
    if out_dir is not None:
        write_report(result, Path(out_dir))
    return result


def _records(res: ExperimentResult) -> list[dict]:
    cfg = res.config
    recs = []
    for name, rep in res.rates.items():
        recs.append(
            {
                "kind": "rate",
                "suite": name,
                "metric": rep.name,
                "w": cfg.auth.w,
                "m": cfg.auth.m,
                "value": None if math.isnan(rep.rate) else rep.rate,
                "sessions": rep.n_sessions,
                "windows": rep.n_windows,
            }
        )
        for (w, m), v in sorted(rep.grid.items()):
            recs.append({"kind": "grid", "suite": name, "metric": rep.name, "w": w, "m": m, "value": v})
    for g in cfg.grace_periods:
        per = {name: s.verdicts(replace(cfg.auth, g=g)) for name, s in res.suites.items()}
        c = censor_value(*per.values())
        for name, vs in per.items():
            recs.append(
                {
                    "kind": "survival",
                    "suite": name,
                    "g": g,
                    "mean_windows": mean_survival(vs, c),
                    "censor": c,
                    "deauthenticated": sum(v.deauthenticated for v in vs),
                    "sessions": len(vs),
                }
            )
    for shift, v in res.desync.items():
        recs.append({"kind": "desync", "shift_ms": shift, "fail_fraction": v})
    for p in res.rate_points:
        recs.append(
            {
                "kind": "downsample",
                "rate_hz": p.rate_hz,
                "accuracy": p.accuracy,
                "sparse_short_fraction": p.sparse_short_fraction,
                "short_segments": p.n_short,
            }
        )
    for g, w in sorted(res.wilcoxon.items()):
        recs.append({"kind": "wilcoxon", "g": g, "x": "NaiveAll", "y": "OppKeyboard", **w})
    c = res.confusion
    recs.append(
        {
            "kind": "confusion",
            "classes": [k.token for k in c.kinds],
            "counts": c.counts.tolist(),
            "precision": {k.token: v for k, v in c.precision.items()},
            "recall": {k.token: v for k, v in c.recall.items()},
        }
    )
    return recs


def summary_text(res: ExperimentResult) -> str:
    cfg = res.config
    parts = [f"w={cfg.auth.w} m={cfg.auth.m} users={cfg.n_users} duration_ms={cfg.duration_ms}\n"]
    surv: dict[tuple[str, int], float] = {}
    for g in cfg.grace_periods:
        per = {name: s.verdicts(replace(cfg.auth, g=g)) for name, s in res.suites.items()}
        c = censor_value(*per.values())
        for name, vs in per.items():
            surv[(name, g)] = mean_survival(vs, c)
    rows = []
    for name, rep in res.rates.items():
        rows.append([name, rep.name, rep.rate, rep.grid_mean(), *[surv[(name, g)] for g in cfg.grace_periods]])
    parts.append(format_table(["suite", "metric", "value", "grid_mean", *[f"surv_g{g}" for g in cfg.grace_periods]], rows))
    parts.append("\n")
    parts.append(format_table(["shift_ms", "fail_fraction"], [[s, v] for s, v in res.desync.items()]))
    parts.append("\n")
    parts.append(
        format_table(
            ["rate_hz", "accuracy", "sparse<100ms", "n<100ms"],
            [[p.rate_hz, p.accuracy, p.sparse_short_fraction, p.n_short] for p in res.rate_points],
        )
    )
    parts.append("\n")
    wrows = [[g, w.get("z", float("nan")), w.get("p", float("nan")), w.get("r", float("nan")), w.get("n", 0)] for g, w in sorted(res.wilcoxon.items())]
    parts.append(format_table(["g", "z", "p", "r", "n"], wrows))
    parts.append("\n")
    c = res.confusion
    crow = [[k.token, *c.counts[i].tolist(), c.precision[k], c.recall[k]] for i, k in enumerate(c.kinds)]
    parts.append(format_table(["truth", *[k.token for k in c.kinds], "precision", "recall"], crow))
    return "".join(parts)


def write_report(res: ExperimentResult, out: Path) -> None:
    cfg = res.config
    out.mkdir(parents=True, exist_ok=True)
    series = out / "series"
    series.mkdir(exist_ok=True)
    atomic_write_text(out / "summary.txt", summary_text(res))
    atomic_write_text(out / "records.jsonl", dumps_jsonl(res.records))
    for name, rep in res.rates.items():
        atomic_write_text(out / f"grid_{name}.txt", grid_table(rep))
    for name, s in res.suites.items():
        for g in cfg.grace_periods:
            vs = s.verdicts(replace(cfg.auth, g=g))
            write_series(series / f"survival_windows_{name}_g{g}.txt", survival_curve(vs, "windows"), "windows fraction_logged_in")
            write_series(series / f"survival_minutes_{name}_g{g}.txt", survival_curve(vs, "minutes"), "minutes fraction_logged_in")
    for name, rep in res.rates.items():
        for m in M_GRID:
            pts = [(w, rep.grid[(w, m)]) for w in W_GRID if (w, m) in rep.grid]
            write_series(series / f"rate_{name}_m{m}.txt", pts, f"w {rep.name}")
    write_series(series / "desync.txt", sorted(res.desync.items()), "shift_ms fail_fraction")
    write_series(series / "downsample.txt", [(p.rate_hz, p.accuracy, p.sparse_short_fraction) for p in res.rate_points], "rate_hz accuracy sparse_fraction")
    for name in res.suites:
        if res.suites[name].polarity is Polarity.ATTACKER:
            pts = roc_points(res.suites["legit"].comparisons, res.suites[name].comparisons, cfg.auth.w)
            write_series(series / f"roc_{name}.txt", pts, "m tpr fpr")
