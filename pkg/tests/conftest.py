import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

from anchorcache.engine import EngineConfig
from anchorcache.memory import CacheConfig
from anchorcache.rope import RopeConfig

from tests.helpers import make_schedule


@pytest.fixture
def cache_cfg() -> CacheConfig:
    return CacheConfig()


@pytest.fixture
def rope_cfg() -> RopeConfig:
    return RopeConfig()


@pytest.fixture
def engine_cfg() -> EngineConfig:
    return EngineConfig()


@pytest.fixture
def one_switch():
    """Boundary at 12, long enough for junction activation plus margin."""
    return make_schedule([12], 40)


@pytest.fixture
def no_switch():
    return make_schedule([], 30)
