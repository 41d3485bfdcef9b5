"""Bilateral zero-effort deauthentication pipeline and a mimicry-attack lab."""

from .authenticator import AuthParams, Outcome, SessionVerdict, run_session
from .classifier import ForestModel, TrainingSet, train_forest
from .features import FEATURE_NAMES, featurize, segment
from .interactions import ExtractorConfig, Interaction, InteractionKind, extract_interactions
from .trace import EventLog, SensorTrace, TerminalEvent

__all__ = [
    "AuthParams",
    "EventLog",
    "ExtractorConfig",
    "FEATURE_NAMES",
    "ForestModel",
    "Interaction",
    "InteractionKind",
    "Outcome",
    "SensorTrace",
    "SessionVerdict",
    "TerminalEvent",
    "TrainingSet",
    "extract_interactions",
    "featurize",
    "run_session",
    "segment",
    "train_forest",
]
__version__ = "0.1.0"
