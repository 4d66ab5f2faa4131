import os

import pytest

from treesink.core import TrunkScriptEntry
from treesink.synthetic import (reference_parameters, reference_zone_rules,
                                script_only_dataset)

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), "..", "fixtures")


@pytest.fixture
def params():
    return reference_parameters()


@pytest.fixture
def zones():
    return reference_zone_rules()


@pytest.fixture
def small_script():
    """6-cycle trunk script mixing scripted branch kinds."""
    return (
        TrunkScriptEntry(1, 3),
        TrunkScriptEntry(2, 4, ((4, 1),)),
        TrunkScriptEntry(3, 4, ((3, 1),)),
        TrunkScriptEntry(4, 5, ((2, 1), (4, 1))),
        TrunkScriptEntry(5, 5, ((3, 2),)),
        TrunkScriptEntry(6, 5),
    )


@pytest.fixture
def small_dataset(small_script):
    return script_only_dataset(small_script)


def fixture_path(name):
    return os.path.join(FIXTURE_DIR, name)
