import pytest

from dcpowersim import default_bundle


@pytest.fixture(scope="session")
def bundle():
    """One shared default model bundle; treated as read-only."""
    return default_bundle()
