import pytest

from markov_multinomial import four_state_example


@pytest.fixture
def four_state():
    return four_state_example()


@pytest.fixture
def four_state_matrix(four_state):
    return four_state.schedule.matrices[0]
