import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240401)


def snr_db_to_sigma2(db: float) -> float:
    return 10.0 ** (-db / 10.0) / 2.0
