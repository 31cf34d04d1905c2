import pytest
import toml

from compressed_bfl.harness import ExperimentConfig
from compressed_bfl.logging import configure_logging

SMALL = {
    "data": {
        "classes": 3,
        "input_dim": 4,
        "train_per_class": 20,
        "validation_per_class": 10,
        "test_per_class": 10,
        "spread": 3.0,
    },
    "network": {"devices": 3},
    "training": {
        "learning_rate": 1e-3,
        "rounds": 20,
        "burn_in": 10,
        "local_steps": 2,
        "batch_size": 4,
    },
    "compression": {"ratio": 0.2},
}


def small_settings(**sections) -> dict:
    """The small experiment with whole keys of ``sections`` replaced."""
    settings = {name: dict(values) for name, values in SMALL.items()}
    for name, values in sections.items():
        settings.setdefault(name, {}).update(values)
    return settings


@pytest.fixture
def small_config():
    def build(**sections) -> ExperimentConfig:
        return ExperimentConfig.from_dict(small_settings(**sections))

    return build


@pytest.fixture
def config_file(tmp_path):
    def write(**sections):
        path = tmp_path / "experiment.toml"
        path.write_text(toml.dumps(small_settings(**sections)), encoding="utf-8")
        return path

    return write


@pytest.fixture(autouse=True)
def quiet_logging():
    configure_logging("WARNING")
    yield
    configure_logging("WARNING")
