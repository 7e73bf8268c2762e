import numpy as np
import pytest

from distaudit import kernels
from distaudit.synth import build_synthetic

BACKENDS = sorted(kernels.BACKENDS)


@pytest.fixture(scope="session")
def synthetic_manifest(tmp_path_factory):
    """Full-size synthetic dataset (4 cells x 25 subjects x 12 images)."""
    return build_synthetic(tmp_path_factory.mktemp("synthetic"), seed=0)


@pytest.fixture(scope="session")
def small_manifest(tmp_path_factory):
    """Reduced dataset for fast protocol tests."""
    return build_synthetic(tmp_path_factory.mktemp("synthetic_small"), seed=3, subjects_per_cell=6, images_per_subject=5)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
