import numpy as np
import pytest

from face6d import CameraIntrinsics, make_synthetic_face


@pytest.fixture(scope="session")
def face_mesh():
    return make_synthetic_face(0)


@pytest.fixture(scope="session")
def default_intr():
    return CameraIntrinsics(1000.0, 1000.0, 640.0, 360.0)


@pytest.fixture(scope="session")
def toy_intr():
    # small frame used by the hand-computed projection examples
    return CameraIntrinsics(100.0, 100.0, 96.0, 96.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
