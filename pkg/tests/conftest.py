"""Collects one verdict line per acceptance criterion and prints them at the end of the run."""
import pytest

_VERDICTS: dict[str, list[tuple[bool, str]]] = {}


@pytest.fixture
def acceptance():
    def record(criterion, ok: bool, detail: str):
        _VERDICTS.setdefault(str(criterion), []).append((bool(ok), detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS, key=lambda k: (int(k.split(".")[0]), k)):
        for ok, detail in _VERDICTS[key]:
            terminalreporter.write_line(f"ACCEPTANCE {key} {'PASS' if ok else 'FAIL'}: {detail}")
