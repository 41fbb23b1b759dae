import numpy as np
import pytest

from gazevol.synth import SynthSpec, generate, write_session


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def driller_case():
    return generate(SynthSpec(archetype="driller", seed=42, case="drill42"))


@pytest.fixture(scope="session")
def session_dir(tmp_path_factory, driller_case):
    out = tmp_path_factory.mktemp("session")
    files = write_session(out, driller_case)
    return out, files
