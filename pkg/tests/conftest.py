import pytest

from blowup_forge.ansatz import AnsatzFields
from blowup_forge.modulation import solve_trajectory


@pytest.fixture(scope="session")
def fields():
    return AnsatzFields()


@pytest.fixture(scope="session")
def traj(fields):
    return solve_trajectory(fields)
