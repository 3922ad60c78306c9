import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from uavsec.config import load_scenario, parse_scenario  # noqa: E402
from uavsec.engine import run  # noqa: E402


def variant(cfg, **changes):
    """Copy of a scenario with top-level or nested (dotted) fields replaced."""
    data = cfg.model_dump(mode="json")
    for path, value in changes.items():
        cur = data
        parts = path.split("__")
        for p in parts[:-1]:
            cur = cur[p]
        cur[parts[-1]] = value
    return parse_scenario(data)


def without_roles(cfg, *roles):
    data = cfg.model_dump(mode="json")
    data["nodes"] = [n for n in data["nodes"] if n["role"] not in roles]
    return parse_scenario(data)


@pytest.fixture(scope="session")
def scenario_a():
    return load_scenario("scenario_a")


@pytest.fixture(scope="session")
def scenario_b():
    return load_scenario("scenario_b")


@pytest.fixture(scope="session")
def run_a(scenario_a):
    return run(scenario_a)


@pytest.fixture(scope="session")
def run_b(scenario_b):
    return run(scenario_b)
