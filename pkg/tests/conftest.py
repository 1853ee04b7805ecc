from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from edurefine.config import default_mock_config


@pytest.fixture
def mock_config(tmp_path):
    return default_mock_config(tmp_path / "data")


@pytest.fixture
def service_state(mock_config):
    from edurefine.service import ServiceState

    return ServiceState(mock_config)
