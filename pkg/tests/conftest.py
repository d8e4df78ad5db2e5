import os
import time

import pytest

from tubeloc.discovery import run_discovery
from tubeloc.model import Config
from tubeloc.synth import SynthSpec, generate_collection


@pytest.fixture(scope="session")
def default_config():
    return Config()


@pytest.fixture(scope="session")
def noise_free_bundle():
    """Default noise-free synthetic collection with its planted truth."""
    return generate_collection(SynthSpec())


@pytest.fixture(scope="session")
def noise_free_run(noise_free_bundle):
    """Full discovery run on the noise-free collection, plus its wall time."""
    collection, _planted, _truths = noise_free_bundle
    start = time.perf_counter()
    result = run_discovery(collection, Config(), threads=os.cpu_count())
    return result, time.perf_counter() - start
