import sys

import pytest

from envaff.dataset import CollectSpec, TestSpec, build_test_sets, collect

TINY_QUOTAS = {"push": (4, 4), "pull": (2, 6)}


@pytest.fixture(scope="session")
def tiny_train():
    return collect(CollectSpec(n_scenes=6, quotas=TINY_QUOTAS, n_out=256, seed=0))


@pytest.fixture(scope="session")
def tiny_tests():
    return build_test_sets(TestSpec(n_scenes=4, records_per_scene=4, n_out=256, seed=0))


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module and module.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(module.RESULTS):
            terminalreporter.write_line(module.RESULTS[n])
