import numpy as np
import pytest

from infogap.data import LabeledDataset
from infogap.harness import ExperimentConfig


def synthetic_digits(n=400, side=6, labels=3, seed=0):
    """Blurry class-specific blobs on a small grid; enough signal to train on quickly."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % labels
    protos = rng.random((labels, side, side))
    imgs = np.clip(0.7 * protos[y] + 0.3 * rng.random((n, side, side)), 0, 1)
    return LabeledDataset(imgs, y)


def small_config(**kw):
    base = dict(
        lambda_grid=[1e-3],
        seeds=[0],
        train_size=100,
        reference_size=100,
        mini_test_size=50,
        k_grid=[1, 2, 4],
        mc_samples=16,
        train_mc_samples=4,
        hidden=8,
        m=4,
        epochs=2,
        learning_rate=0.1,
        batch_size=25,
        decoder_epochs=2,
        hellinger_bank=500,
        max_translation=1,
    )
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture
def tiny_data():
    return synthetic_digits()


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(mod.RESULTS):
            terminalreporter.write_line(mod.RESULTS[key])
