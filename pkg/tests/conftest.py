import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from incstab import cases, kernels

settings.register_profile(
    "default", max_examples=60, deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture(scope="session")
def case1():
    return cases.load_case("case1")


@pytest.fixture(scope="session")
def case2():
    return cases.load_case("case2")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(mod.RESULTS, key=lambda k: [int(p) if p.isdigit() else p for p in str(k).split("/")]):
            terminalreporter.write_line(mod.RESULTS[key])
