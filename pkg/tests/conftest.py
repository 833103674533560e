import pytest

_LINES = {}


class CriterionRecorder:
    """Collects named sub-checks of one acceptance criterion."""

    def __init__(self, number, title):
        self.number = number
        self.title = title
        self.checks = []

    def check(self, name, ok, detail=""):
        self.checks.append((name, bool(ok), detail))
        return ok

    @property
    def passed(self):
        return all(ok for _, ok, _ in self.checks)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        parts = [f"{n}={'ok' if ok else 'FAIL'}" + (f" ({d})" if d else "")
                 for n, ok, d in self.checks]
        return f"criterion {self.number} [{self.title}]: {status} :: " + "; ".join(parts)

    def finish(self):
        line = self.line()
        _LINES[self.number] = line
        print(line)
        failed = [f"{n} ({d})" for n, ok, d in self.checks if not ok]
        assert not failed, "failed checks: " + ", ".join(failed)


@pytest.fixture
def criterion():
    return CriterionRecorder


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_LINES):
            terminalreporter.write_line(_LINES[number])
