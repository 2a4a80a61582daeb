import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def criterion_log():
    """Append ``criterion N: PASS|FAIL ...`` lines shown in the terminal summary."""

    def log(number, ok: bool, detail: str) -> str:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
        return line

    return log


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_LINES, key=lambda s: s.split(":")[0].split()[1]):
            terminalreporter.write_line(line)
