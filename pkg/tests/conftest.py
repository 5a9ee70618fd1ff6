import pytest

_ACCEPTANCE_LINES: list[str] = []


class Recorder:
    def __call__(self, number: int, title: str, passed: bool, detail: str, seconds: float) -> bool:
        line = f"CRITERION {number} {'PASS' if passed else 'FAIL'} {title} ({seconds:.1f}s): {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed


@pytest.fixture
def report():
    return Recorder()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
