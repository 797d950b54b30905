import pytest

_ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


@pytest.fixture
def criterion():
    """Record one check of an acceptance criterion; the test then asserts it."""

    def record(number: int, ok: bool, detail: str) -> bool:
        _ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))
        return bool(ok)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[number]
        status = "PASS" if all(ok for ok, _ in checks) else "FAIL"
        details = "; ".join(detail for _, detail in checks)
        terminalreporter.write_line(f"criterion {number}: {status} | {details}")
