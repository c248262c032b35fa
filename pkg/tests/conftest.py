import numpy as np
import pytest

from tacnet._kernels import available_backends, get_backend


@pytest.fixture(params=available_backends())
def kernel_backend(request):
    """Run kernel-level tests against every importable backend."""
    return get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
