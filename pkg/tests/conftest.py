import pytest

from models import log_power_model, model
from recorder import ACCEPTANCE


@pytest.fixture
def regime1():
    return model(0.4, 0.8)


@pytest.fixture
def regime2():
    return model(0.5, 0.5)


@pytest.fixture
def regime3():
    return model(0.9, 0.45)


@pytest.fixture
def regime4():
    return log_power_model()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (int("".join(ch for ch in k if ch.isdigit())), k)):
        passed, summary = ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key:<3} {'PASS' if passed else 'FAIL'}  {summary}")
