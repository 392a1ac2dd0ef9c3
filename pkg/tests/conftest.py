import pytest

from osa_transfer import bernoulli_scenario, load_scenario


@pytest.fixture(scope="session")
def toy():
    # two channels, 1 s slots: A(r=1, p=0.5), B(r=0.2, p=0.95)
    return bernoulli_scenario(["1", "0.2"], ["0.5", "0.95"], slot_seconds=1, quantum="0.1", name="toy")


@pytest.fixture(scope="session")
def toy_fine():
    return bernoulli_scenario(["1", "0.2"], ["0.5", "0.95"], slot_seconds=1, name="toy")


@pytest.fixture(scope="session")
def lossy():
    return load_scenario("lossy")


@pytest.fixture(scope="session")
def gradual():
    return load_scenario("gradual")


@pytest.fixture(scope="session")
def steep():
    return load_scenario("steep")


def pytest_terminal_summary(terminalreporter):
    from reporting import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
