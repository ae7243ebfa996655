import pytest

from isolab.families import harmonic, isotonic, quartic
from isolab.harmonize import build_map


@pytest.fixture(scope="session")
def harm():
    return harmonic()


@pytest.fixture(scope="session")
def iso():
    return isotonic(0.5, 1.0)


@pytest.fixture(scope="session")
def quart():
    return quartic()


@pytest.fixture(scope="session")
def harm_map(harm):
    return build_map(harm, (0.1, 10.0))


@pytest.fixture(scope="session")
def iso_map(iso):
    return build_map(iso, (3.0, 50.0))


@pytest.fixture
def criterion(request):
    """Report one PASS/FAIL line per acceptance criterion on the terminal."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    emitted = []

    def write(line):
        if reporter is not None:
            reporter.write_line(line)
        else:
            print(line)

    def emit(label, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        emitted.append(line)
        write(line)
        assert ok, line

    yield emit
    if not emitted:
        write(f"FAIL  {request.node.name}: raised before a verdict was reached")

