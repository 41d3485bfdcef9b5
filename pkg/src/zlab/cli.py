"""zlab command line.

Exit codes: 0 ok, 2 configuration error, 3 missing or unreadable artifact,
4 internal invariant violation.  Failures end with one ``error: ...`` line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import adversary as adv
from .authenticator import AuthParams, Outcome, proximity_schedule, run_session
from .classifier import InsufficientClasses, TrainingSet, load_model, save_model, train_forest, train_vote_tree
from .experiment import ConfigError, ExperimentConfig, load_config, run_experiment, summary_text
from .interactions import Interaction, InteractionKind
from .pipeline import PipelineConfig, compare, training_rows
from .trace import MalformedLine, TraceError, atomic_write_text, parse_event_log, serialize_event_log

log = logging.getLogger("zlab")


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _missing(what: str) -> CliError:
    return CliError(3, f"missing-artifact {what}")


def _need(path: Path | None, what: str) -> Path:
    if path is None or not Path(path).exists():
        raise _missing(what)
    return Path(path)


# ---- config plumbing ----

def _experiment_config(args) -> ExperimentConfig:
    if args.config is not None:
        cfg = load_config(_need(args.config, "config"))
    else:
        cfg = ExperimentConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.continuous_mode:
        over["continuous_mode"] = True
    if args.five_class:
        over["five_class"] = True
    if (args.continuous_mode or args.five_class) and cfg.upright_epochs == 0:
        over["upright_epochs"] = 1
    cfg = replace(cfg, **over)
    return replace(cfg, auth=_auth_params(args, cfg.auth))


def _auth_params(args, base: AuthParams) -> AuthParams:
    try:
        return AuthParams(
            args.w if args.w is not None else base.w,
            args.m if args.m is not None else base.m,
            args.g if args.g is not None else base.g,
            args.f if args.f is not None else base.f,
            bool(args.strict_threshold) or base.strict_threshold,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _pipeline(args, cfg: ExperimentConfig) -> PipelineConfig:
    return PipelineConfig(cfg.extractor, cfg.sampling, cfg.five_class, cfg.continuous_mode)


# ---- labels file: "start end ACTUAL PREDICTED" ----

def dumps_labels(actual, predicted) -> str:
    lines = []
    for it, p in zip(actual, predicted):
        extra = " offside" if it.offside else ""
        lines.append(f"{it.start} {it.end} {it.kind.token} {InteractionKind(p).token}{extra}")
    return "".join(line + "\n" for line in lines)


def loads_labels(text: str):
    actual, predicted = [], []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (4, 5) or (len(parts) == 5 and parts[4] != "offside"):
            raise MalformedLine(line_no)
        try:
            actual.append(
                Interaction(InteractionKind.from_token(parts[2]), int(parts[0]), int(parts[1]), len(parts) == 5)
            )
            predicted.append(InteractionKind.from_token(parts[3]))
        except (KeyError, ValueError):
            raise MalformedLine(line_no) from None
    return actual, predicted


# ---- commands ----

def cmd_generate(args) -> str:
    cfg = _experiment_config(args)
    n = args.n_users if args.n_users is not None else cfg.n_users
    duration_ms = int(round(args.duration * 1000)) if args.duration is not None else cfg.duration_ms
    if n < 1 or duration_ms <= 0:
        raise ConfigError("n-users and duration must be positive")
    if duration_ms < 60_000:
        print("warning: duration below 60 s; interaction statistics will be noisy", file=sys.stderr)
    cfg = replace(cfg, n_users=max(n, 2), duration_ms=duration_ms)
    if args.upright_epochs is not None:
        cfg = replace(cfg, upright_epochs=args.upright_epochs)
    out = Path(args.out)
    users = adv.make_users(n, cfg.seed)
    index = []
    for i, u in enumerate(users):
        b = adv.generate_session(u, duration_ms, cfg.seed + i, rate_hz=cfg.rate_hz, upright_epochs=cfg.upright_epochs)
        adv.save_bundle(b, out / u.user_id)
        index.append({"user_id": u.user_id, "seed": cfg.seed + i})
    atomic_write_text(
        out / "corpus.json",
        json.dumps({"duration_ms": duration_ms, "rate_hz": cfg.rate_hz, "sessions": index}, indent=1, sort_keys=True) + "\n",
    )
    return f"generated {n} sessions in {out}\n"


def _session_dirs(root: Path) -> list[Path]:
    dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "sensor.txt").exists())
    if not dirs:
        raise _missing("sessions")
    return dirs


def cmd_train(args) -> str:
    cfg = _experiment_config(args)
    if args.out is None:
        raise ConfigError("train needs --out")
    root = _need(args.sessions, "sessions")
    pcfg = _pipeline(args, cfg)
    parts = []
    for d in _session_dirs(root):
        b = adv.load_bundle(d)
        if b.user_id in (args.exclude or []):
            continue
        parts.append(training_rows(b.events, b.sensor, b.user_id, pcfg, extended=b.truth))
    data = TrainingSet.concat(parts)
    try:
        forest = train_forest(data, cfg.train_seed if args.seed is None else args.seed, n_trees=cfg.n_trees)
        vt = train_vote_tree(forest, data) if (cfg.five_class or cfg.continuous_mode) else None
    except InsufficientClasses as exc:
        raise ConfigError(str(exc)) from None
    save_model(args.out, forest, vt)
    return f"trained {len(forest.trees)} trees on {len(data.usable())} rows -> {args.out}\n"


def _load_session(args):
    d = _need(args.session, "session")
    b = adv.load_bundle(d)
    events = parse_event_log(_need(args.events, "events")) if args.events else b.events
    return b, events


def _load_model(args):
    path = _need(args.model, "model")
    try:
        return load_model(path)
    except (ValueError, KeyError) as exc:
        raise CliError(3, f"bad-artifact model: {exc}") from None


def cmd_classify(args) -> str:
    cfg = _experiment_config(args)
    forest, vt = _load_model(args)
    b, events = _load_session(args)
    c = compare(events, b.sensor, forest, vt, replace(_pipeline(args, cfg), continuous_mode=False))
    text = dumps_labels(c.actual, c.predicted)
    if args.out:
        atomic_write_text(args.out, text)
        return f"classified {len(c.actual)} interactions -> {args.out}\n"
    return text


def auth_report(actual, predicted, params: AuthParams, alerts=(), threshold_at=None) -> str:
    v = run_session(actual, predicted, params, alerts=alerts, threshold_at=threshold_at)
    lines = [
        f"# w={params.w} m={params.m} g={params.g} f={params.f} strict_threshold={int(params.strict_threshold)}"
    ]
    for i, (o, frac, end, th) in enumerate(zip(v.window_outcomes, v.match_fractions, v.window_end_ms, v.thresholds), 1):
        lines.append(f"window {i} end_ms {end} match {frac:.4f} threshold {th:.4f} {o.value}")
    per_min: dict[int, list[Outcome]] = {}
    for o, end in zip(v.window_outcomes, v.window_end_ms):
        per_min.setdefault(end // 60000, []).append(o)
    for minute in sorted(per_min):
        os_ = per_min[minute]
        n_pass = sum(o is Outcome.PASS for o in os_)
        lines.append(f"minute {minute} windows {len(os_)} pass {n_pass} fail {len(os_) - n_pass}")
    if v.deauthenticated:
        lines.append(f"deauth window {v.deauth_window} time_ms {v.deauth_time_ms} minutes {v.deauth_time_ms / 60000:.3f}")
    else:
        lines.append(f"deauth none windows {v.windows_elapsed}")
    return "\n".join(lines) + "\n"


def _rssi(path: Path):
    rows = []
    for line_no, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise MalformedLine(line_no)
        try:
            rows.append((int(parts[0]), float(parts[1])))
        except ValueError:
            raise MalformedLine(line_no) from None
    return rows


def cmd_auth(args) -> str:
    cfg = _experiment_config(args)
    params = cfg.auth
    alerts: list[int] = []
    if args.labels:
        actual, predicted = loads_labels(_need(args.labels, "labels").read_text())
    else:
        forest, vt = _load_model(args)
        b, events = _load_session(args)
        c = compare(events, b.sensor, forest, vt, _pipeline(args, cfg))
        actual, predicted, alerts = c.actual, c.predicted, c.alerts
    if not actual:
        raise CliError(3, "bad-artifact session: no interactions")
    threshold_at = None
    if args.rssi:
        if args.rssi_reference is None:
            raise ConfigError("--rssi needs --rssi-reference")
        threshold_at = proximity_schedule(_rssi(_need(args.rssi, "rssi")), args.rssi_reference, params.m)
    text = auth_report(actual, predicted, params, alerts, threshold_at)
    if args.out:
        atomic_write_text(args.out, text)
    return text


def cmd_attack(args) -> str:
    cfg = _experiment_config(args)
    b = adv.load_bundle(_need(args.session, "session"))
    try:
        profile = adv.loads_attacker_profile(_need(args.profile, "profile").read_text())
    except ValueError as exc:
        raise ConfigError(f"attacker profile: {exc}") from None
    log_ = adv.apply_attack(b, profile, cfg.seed, cfg.extractor)
    text = serialize_event_log(log_)
    if args.out:
        atomic_write_text(args.out, text)
        return f"attacker events ({profile.strategy.value}) -> {args.out}\n"
    return text


def cmd_eval(args) -> str:
    cfg = _experiment_config(args)
    if args.out is None:
        raise ConfigError("eval needs --out")
    res = run_experiment(cfg, Path(args.out))
    return summary_text(res)


# ---- parser ----

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment manifest")
    p.add_argument("--seed", type=int)
    p.add_argument("--w", type=int, help="window size (interactions)")
    p.add_argument("--m", type=float, help="matching threshold")
    p.add_argument("--g", type=int, help="grace period (failed windows)")
    p.add_argument("--f", type=float, help="window overlap fraction")
    p.add_argument("--strict-threshold", action="store_true", help="pass only when matches exceed m*w")
    p.add_argument("--continuous-mode", action="store_true", help="classify terminal-idle time too")
    p.add_argument("--five-class", action="store_true", help="predict Idle/Upright via the vote tree")
    p.add_argument("--out", help="output file or directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="zlab", description="Bilateral deauthentication lab")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="synthesize per-user sessions")
    _common(p)
    p.add_argument("--n-users", type=int)
    p.add_argument("--duration", type=float, help="seconds per session")
    p.add_argument("--upright-epochs", type=int)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("train", help="train a forest on generated sessions")
    _common(p)
    p.add_argument("--sessions", type=Path, required=True)
    p.add_argument("--exclude", nargs="*", help="user ids to hold out")
    p.set_defaults(fn=cmd_train)

    for name, fn, hlp in (
        ("classify", cmd_classify, "actual and predicted sequence of a session"),
        ("auth", cmd_auth, "run the authenticator over a session"),
    ):
        p = sub.add_parser(name, help=hlp)
        _common(p)
        p.add_argument("--model", type=Path)
        p.add_argument("--session", type=Path)
        p.add_argument("--events", type=Path, help="terminal events replacing the session's own")
        if name == "auth":
            p.add_argument("--labels", type=Path, help="labels file from classify, instead of model+session")
            p.add_argument("--rssi", type=Path, help="'t_ms rssi_db' readings")
            p.add_argument("--rssi-reference", type=float)
        p.set_defaults(fn=fn)

    p = sub.add_parser("attack", help="attacker events mimicking a session")
    _common(p)
    p.add_argument("--session", type=Path, required=True)
    p.add_argument("--profile", type=Path, required=True)
    p.set_defaults(fn=cmd_attack)

    p = sub.add_parser("eval", help="run the full experiment from a manifest")
    _common(p)
    p.set_defaults(fn=cmd_eval)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        text = args.fn(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"error: config {exc}", file=sys.stderr)
        return 2
    except (TraceError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        print(f"error: io {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: io {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # noqa: BLE001 - last-resort contract
        print(f"error: internal {type(exc).__name__}: {exc}", file=sys.stderr)
        return 4
    if text:
        sys.stdout.write(text)
    return 0
