import sys

import pytest

from advnews.cli import RunConfig, build_experiment
from advnews.fixtures import bundle_dir, load_corpus


@pytest.fixture(scope="session")
def bundle():
    return bundle_dir()


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture
def run_config(bundle):
    return RunConfig.load(bundle / "run.json")


@pytest.fixture
def experiment(run_config):
    return build_experiment(run_config)


def pytest_terminal_summary(terminalreporter):
    results = {}
    for mod in list(sys.modules.values()):
        found = getattr(mod, "__dict__", {}).get("ACCEPTANCE_RESULTS")
        if isinstance(found, dict):
            results.update(found)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        verdict, title = results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {title}")
