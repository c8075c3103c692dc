import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mkhnet.autodiff import Tensor

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def param(a) -> Tensor:
    return Tensor(np.array(a, dtype=float), requires_grad=True)


@pytest.fixture
def nrng():
    return np.random.default_rng(1234)
