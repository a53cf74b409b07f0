from pathlib import Path

import pytest

import dpflow

CASE_DIR = Path(dpflow.__file__).parent / "cases"


def case_path(name):
    return CASE_DIR / name


@pytest.fixture(scope="session")
def case9():
    return dpflow.load_case(case_path("case9.m"))


@pytest.fixture(scope="session")
def case39():
    return dpflow.load_case(case_path("case39.m"))


@pytest.fixture(scope="session")
def case57():
    return dpflow.load_case(case_path("case57.m"))


@pytest.fixture(scope="session")
def case2():
    return dpflow.load_case(case_path("case2.json"))
