import pytest

from arxdw.model import SystemSpec

ARX1 = (1.5,)
ARX2 = (-1.0, 2.0)
ARX3 = (1.0, 0.5, 0.25)
MODELS = {"arx1": ARX1, "arx2": ARX2, "arx3": ARX3}

# filled by test_acceptance, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(params=list(MODELS), ids=list(MODELS))
def model_spec(request):
    return SystemSpec(MODELS[request.param], rho=0.0, sigma2=1.0, nu2=4.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
