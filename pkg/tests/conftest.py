import numpy as np
import pytest

from fadekey import reconcile


@pytest.fixture(scope="session")
def code8():
    return reconcile.ldpc_generate(8, seed=8)


@pytest.fixture(scope="session")
def code400():
    return reconcile.ldpc_generate(400, seed=400)


@pytest.fixture(scope="session")
def code4096():
    # shared by the long-block decoder and system-level tests; the PEG
    # construction is the slow part, so grow it once per session
    return reconcile.ldpc_generate(4096, seed=4096)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
