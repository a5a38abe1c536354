from __future__ import annotations

import pytest

from dpm import casegen
from dpm.backends import ExtractiveBackend


@pytest.fixture(scope="session")
def suite():
    return casegen.generate_suite(20260420)


@pytest.fixture(scope="session")
def large(suite):
    return casegen.large_cases(suite)


@pytest.fixture(scope="session")
def small(suite):
    return casegen.small_cases(suite)


@pytest.fixture
def extractive():
    return ExtractiveBackend()
