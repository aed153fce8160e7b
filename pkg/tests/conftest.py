import pytest

from msmt import tensor


@pytest.fixture(autouse=True)
def finite_forward_values():
    tensor.set_finite_checks(True)
    yield
    tensor.set_finite_checks(False)
