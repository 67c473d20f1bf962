from pathlib import Path

import numpy as np
import pytest

from sou_privacy.harness.synth import SynthConfig, generate_synthetic_corpus

SCENARIO_DIR = Path(__file__).resolve().parents[1] / "src" / "sou_privacy" / "data" / "scenarios"


@pytest.fixture
def scenario_dir():
    return SCENARIO_DIR


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """Eight train / four test recordings, just long enough for three chunks each."""
    out = tmp_path_factory.mktemp("tiny_corpus")
    cfg = SynthConfig(n_train_recordings=8, n_test_recordings=4, duration_seconds=0.8, seed=3)
    return generate_synthetic_corpus(cfg, out)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        status, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {detail}")
