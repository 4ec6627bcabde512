from pathlib import Path

import pytest

from twingraph import (
    UnitRegistry,
    build_graph,
    build_hierarchy,
    load_sequence,
    match_ports,
    read_directory,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fixture_shells():
    return read_directory(FIXTURES / "shells")


@pytest.fixture(scope="session")
def reselect_shells():
    return read_directory(FIXTURES / "shells_reselect")


@pytest.fixture(scope="session")
def fixture_sequence():
    return load_sequence((FIXTURES / "sequence.json").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def registry():
    return UnitRegistry()


# The graphs are rebuilt per test: adaption mutates node properties.


@pytest.fixture
def fixture_graph(fixture_shells, fixture_sequence):
    hierarchy = build_hierarchy(fixture_shells, "PtX_Platform")
    return build_graph(fixture_shells, hierarchy, fixture_sequence)


@pytest.fixture
def matched(fixture_graph, registry):
    return match_ports(fixture_graph, registry)


@pytest.fixture
def reselect_graph(reselect_shells, fixture_sequence):
    hierarchy = build_hierarchy(reselect_shells, "PtX_Platform")
    return build_graph(reselect_shells, hierarchy, fixture_sequence)


@pytest.fixture
def reselect_matched(reselect_graph, registry):
    return match_ports(reselect_graph, registry)
