import pytest

from mom.table_core import Table


@pytest.fixture
def small_table():
    return Table(["team", "points"], [["reds", 10], ["blues", 7]])
