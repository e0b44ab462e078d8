import os
import sys

import pytest

# Same path setup as ui/app.py so tests import 'core' and 'utils' from the repo root
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run the Monte-Carlo acceptance tests")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: Monte-Carlo acceptance run, enabled with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip)
