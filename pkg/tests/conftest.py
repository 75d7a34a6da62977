import pytest

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def acceptance_report():
    """Register one verdict line per acceptance criterion."""

    def record(label: str, title: str, ok: bool, detail: str) -> bool:
        _ACCEPTANCE[label] = f"[{label}] {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(_ACCEPTANCE[label])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[k])
