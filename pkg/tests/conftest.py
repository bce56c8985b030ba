import pytest

import nisac
from nisac.scenario import with_first_bss


@pytest.fixture(scope="session")
def desk():
    return nisac.load_scenario_file(nisac.builtin_scenario_path("desk"))


@pytest.fixture(scope="session")
def desk_m1(desk):
    return with_first_bss(desk, 1)


@pytest.fixture(scope="session")
def desk_channels(desk):
    return nisac.draw_channels(desk, 1)
