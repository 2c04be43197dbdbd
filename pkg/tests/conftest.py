"""Shared fixtures: models, corpora and reference runs are built once per session."""

from __future__ import annotations

import os

import pytest
from hypothesis import HealthCheck, settings

from duobot.harness.config import default_config
from duobot.harness.runner import prepare, run_scenario
from duobot.harness.scenario import load_scenario
from duobot.phonostream import CorpusSpec, generate_corpus
from duobot.wakeword.evaluate import default_models

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=400, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def models():
    return default_models()


@pytest.fixture(scope="session")
def config():
    return default_config()


@pytest.fixture(scope="session")
def small_corpus():
    """A small noisy corpus with all three labels."""
    return generate_corpus(CorpusSpec(20, 20, 20), 0.6, 5)


@pytest.fixture(scope="session")
def clean_corpus():
    return generate_corpus(CorpusSpec(10, 10, 10), 0.0, 3)


@pytest.fixture(scope="session")
def reference():
    return load_scenario("reference")


@pytest.fixture(scope="session")
def reference_prepared(reference, config, models):
    return prepare(reference, config, models)


@pytest.fixture(scope="session")
def dual_run(reference, config, models, reference_prepared):
    """(report, trace) of the reference scenario on the dual-device topology."""
    return run_scenario(reference, "dual", config, models=models, prepared=reference_prepared)


@pytest.fixture(scope="session")
def single_run(reference, config, models, reference_prepared):
    return run_scenario(reference, "single", config, models=models, prepared=reference_prepared)
