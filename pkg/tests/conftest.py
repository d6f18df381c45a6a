import pytest

from ergograph.fiber_family import get_family


@pytest.fixture(scope="session")
def fam():
    # one shared default family; construction is cached but cheap anyway
    return get_family(None)


@pytest.fixture(scope="session")
def domain(fam):
    return fam.domain
