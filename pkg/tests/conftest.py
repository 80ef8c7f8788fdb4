import pytest

from adlfusion.synthgen import generate_records


@pytest.fixture(scope="session")
def small_records():
    """10 synthetic records per activity."""
    return generate_records(n_per_class=10, seed=7)
