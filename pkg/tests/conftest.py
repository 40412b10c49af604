import pytest

from edsp.store import LocalStore, MemoryStore


@pytest.fixture
def mem_store():
    return MemoryStore()


@pytest.fixture
def local_store(tmp_path):
    root = tmp_path / "store"
    root.mkdir()
    return LocalStore(root)


@pytest.fixture(params=["memory", "local"])
def any_store(request, tmp_path):
    if request.param == "memory":
        return MemoryStore()
    root = tmp_path / "store"
    root.mkdir()
    return LocalStore(root)
