from pathlib import Path

import pytest

from sitewatch.config import load_config

FIXTURES = Path(__file__).parent / "fixtures"
CONFIG = FIXTURES / "smartspace.conf"


@pytest.fixture
def fixture_config(tmp_path):
    def make(**overrides):
        overrides.setdefault("out_dir", tmp_path / "out")
        return load_config(CONFIG, overrides, environ={})
    return make
