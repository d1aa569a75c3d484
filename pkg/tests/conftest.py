import pytest

from wildtorus import parallel
from wildtorus.flow import build_field
from wildtorus.invariant_set import compute_external_boundary
from wildtorus.params import FlowParams, MapParams
from wildtorus.registry.models import Base

from tests.fixtures.registry import TEST_REGISTRY


@pytest.fixture(scope="session", autouse=True)
def setup_registry():
    TEST_REGISTRY.create_tables()
    yield
    TEST_REGISTRY.drop_tables()


@pytest.fixture(scope="function", autouse=True)
def registry_session():
    yield
    with TEST_REGISTRY.session() as session:
        for table in reversed(Base.metadata.sorted_tables):
            session.execute(table.delete())


@pytest.fixture(scope="function", autouse=True)
def reset_threads(monkeypatch):
    monkeypatch.delenv(parallel.THREADS_ENV, raising=False)
    yield
    parallel.set_threads(None)


@pytest.fixture(scope="session")
def planar() -> MapParams:
    return MapParams.planar(0.95)


@pytest.fixture(scope="session")
def outer_loop(planar):
    return compute_external_boundary(planar, samples=1025)


@pytest.fixture(scope="session")
def flow_field():
    return build_field(FlowParams())
