import json

import pytest

from physiort.config import load_acq_config, load_experiment_config


def experiment_doc(**overrides) -> str:
    doc = {
        "study_name": "teststudy",
        "conditions": [{"name": "baseline", "max_time_seconds": 10.0}],
        "timed_acquisition": True,
        "channels": [
            {"name": "ppg_finger", "kind": "PPG", "site": "finger", "adc_index": 0},
        ],
        "plot_channels": ["ppg_finger"],
        "data_dir": "",
    }
    doc.update(overrides)
    return json.dumps(doc)


def acq_doc(**overrides) -> str:
    doc = {
        "sampling_rate": 64.0,
        "baudrate": 115200,
        "adc_bits": 12,
        "vref": 3.3,
        "transport": "simulator",
        "role": "standalone",
    }
    doc.update(overrides)
    return json.dumps(doc)


@pytest.fixture
def exp_config():
    return load_experiment_config(experiment_doc())


@pytest.fixture
def acq_config():
    return load_acq_config(acq_doc())


@pytest.fixture(scope="session")
def tiny_model():
    """A barely-trained quality model; enough for plumbing tests."""
    from physiort import synth
    from physiort.sqa import train

    model, _ = train(synth.corpus(40, 0.5, seed=7), epochs=1, seed=7)
    return model
