import pytest

from outagemdp.mdp_core import MdpModel, Policy, Transition, recycling_robot


@pytest.fixture
def robot():
    return recycling_robot()


@pytest.fixture
def search_policy():
    return Policy({"low": "search", "high": "search"})


@pytest.fixture
def alt_policy():
    # alternative policy: wait when low, search when high
    return Policy({"low": "wait", "high": "search"})


def single_state(reward=0.4, discount=0.8):
    return MdpModel(
        states=("s",),
        actions=("a",),
        allowed={"s": ("a",)},
        transitions=(Transition("s", "a", "s", 1.0, reward),),
        discount=discount,
    )


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in test_acceptance.RESULTS:
        terminalreporter.write_line(line)
