from datetime import timedelta

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=50, deadline=timedelta(milliseconds=5000))
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
