"""Pytest fixtures for ncap-lab tests."""

import shutil
from pathlib import Path

import numpy as np
import pytest

from ncap_lab._toytask import TaskConfig

SMALL_TASK = {
    "alphabet_size": 5,
    "sequence_length": 4,
    "feature_dim": 8,
    "hidden_dim": 16,
    "embed_dim": 8,
    "prior_dim": 4,
    "noise_sigma_hr": 0.1,
    "noise_sigma_lr": 0.8,
    "prototype_scale": 0.5,
    "train_size": 200,
    "test_size": 100,
    "epochs": 30,
    "learning_rate": 0.5,
    "batch_size": 16,
    "seed": 3,
    "teacher_smoothing": 0.0,
}


@pytest.fixture(autouse=True)
def isolate_settings(tmp_path, monkeypatch):
    """Isolate the default output directory and settings singleton.

    Reports that would land in the platform data directory are
    redirected to tmp_path, and ``get_settings`` starts fresh.
    """
    import ncap_lab
    from ncap_lab import _settings

    runs_dir = tmp_path / "ncap-lab" / "runs"
    monkeypatch.setattr(_settings, "_DATA_DIR", runs_dir.parent)
    monkeypatch.setattr(_settings, "_RUNS_DIR", runs_dir)

    ncap_lab._settings_instance = None

    yield runs_dir

    ncap_lab._settings_instance = None


@pytest.fixture
def test_data_dir():
    """Path to test data directory."""
    return Path(__file__).parent / "test_data"


@pytest.fixture
def rng():
    """A seeded generator; tests that need several streams derive them."""
    return np.random.default_rng(20240611)


@pytest.fixture
def small_task():
    """A reduced task that trains in well under a second."""
    return TaskConfig(**SMALL_TASK)


@pytest.fixture
def clean_task():
    """The reduced task without any observation noise."""
    return TaskConfig(
        **{**SMALL_TASK, "noise_sigma_hr": 0.0, "noise_sigma_lr": 0.0}
    )


@pytest.fixture
def small_experiment_file(tmp_path, test_data_dir):
    """Create a temporary copy of small_experiment.yaml for testing."""
    target = tmp_path / "small_experiment.yaml"
    shutil.copy(test_data_dir / "small_experiment.yaml", target)
    return target
