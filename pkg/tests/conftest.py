import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import pytest

from zlab.adversary import make_users, generate_session
from zlab.experiment import ExperimentConfig, corpus_rows, louo_models
from zlab.pipeline import PipelineConfig


class Lab:
    """A few short sessions with leave-one-user-out models."""

    def __init__(self, n_users=5, duration_ms=120_000, n_trees=30, upright_epochs=0):
        self.cfg = ExperimentConfig(
            n_users=n_users, duration_ms=duration_ms, n_trees=n_trees, upright_epochs=upright_epochs
        )
        self.pcfg = PipelineConfig()
        users = make_users(n_users, 1)
        self.bundles = [
            generate_session(u, duration_ms, 100 + i, upright_epochs=upright_epochs) for i, u in enumerate(users)
        ]
        self.models = louo_models(corpus_rows(self.bundles, self.pcfg), self.cfg, upright_epochs > 0)


@pytest.fixture(scope="session")
def small_lab():
    return Lab()
