import pytest

_VERDICTS = []


class Verdicts:
    """Collects one summary line per acceptance criterion."""

    def record(self, number, status, detail):
        line = f"criterion {number}: {status}  {detail}"
        _VERDICTS.append((number, line))
        print(line)


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_VERDICTS):
        terminalreporter.write_line(line)
