import pytest

ACCEPTANCE: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line; returns the condition so tests can assert on it.

    ``ok=None`` records an informational line.
    """

    def _report(label: str, ok: bool | None, detail: str) -> bool:
        tag = "INFO" if ok is None else "PASS" if ok else "FAIL"
        ACCEPTANCE.append(f"{tag}  {label}: {detail}")
        print(ACCEPTANCE[-1])
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
