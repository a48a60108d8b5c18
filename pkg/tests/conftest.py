import os
import tempfile

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

# keep the on-disk oracle cache out of the user's home during tests
os.environ.setdefault("CAPAX_CACHE_DIR", tempfile.mkdtemp(prefix="capax-test-cache-"))

settings.register_profile(
    "capax",
    deadline=None,
    max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("capax")

from capax.kernels import GramForm  # noqa: E402


@pytest.fixture
def gram2():
    return GramForm.from_matrix([[2.0, 1.0], [1.0, 2.0]])


@pytest.fixture
def mass_preserving():
    """Certified kernel whose only killing happens on the nodes ``{0, 1}``."""
    M = np.array([[2.5, -1, -0.5, -0.5], [-1, 2.5, -0.5, -0.5], [-0.5, -0.5, 2, -1], [-0.5, -0.5, -1, 2]])
    return GramForm.from_matrix(np.linalg.inv(M))
