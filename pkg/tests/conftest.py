import numpy as np
import pytest

from videorelight import olat
from videorelight.lighting import LightMap, build_preset_library


@pytest.fixture(scope="session")
def library():
    return list(build_preset_library().values())


@pytest.fixture(scope="session")
def small_sequence():
    spec = olat.make_scene_spec(identity=0, take=0, seed=7, n_frames=3)
    return olat.render_sequence(spec)


@pytest.fixture
def uniform_map():
    return LightMap(np.full((16, 16, 3), 0.5, dtype=np.float32))


def rng(seed=0):
    return np.random.default_rng(seed)
