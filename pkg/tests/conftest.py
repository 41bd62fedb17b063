import numpy as np
import pytest

from layercrest.geometry import build_domain
from layercrest.weights import expression_weight

# boundary max of a at (1, 0) with zero normal derivative on the circle
BUMP5 = "2 + (x1^3 - 3*x1*x2^2)*(2.5 - 1.5*(x1^2 + x2^2)) + 5*(1 - x1^2 - x2^2)^2"
BUMP10 = "2 + (x1^3 - 3*x1*x2^2)*(2.5 - 1.5*(x1^2 + x2^2)) + 10*(1 - x1^2 - x2^2)^2"


@pytest.fixture(scope="session")
def disk():
    return build_domain({"kind": "disk"})


@pytest.fixture(scope="session")
def ellipse():
    return build_domain({"kind": "ellipse", "a": 2.0, "b": 1.0})


@pytest.fixture(scope="session")
def bump5():
    return expression_weight(BUMP5)


@pytest.fixture(scope="session")
def bump10():
    return expression_weight(BUMP10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
