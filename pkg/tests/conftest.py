import pytest

_RESULTS: dict[int, tuple[str, str, str]] = {}


class _Criterion:
    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        _RESULTS[number] = ("FAIL", title, "did not finish")

    def done(self, ok: bool, detail: str) -> None:
        _RESULTS[self.number] = ("PASS" if ok else "FAIL", self.title, detail)
        print(f"criterion {self.number}: {'PASS' if ok else 'FAIL'} - {self.title} ({detail})")


@pytest.fixture
def criterion():
    return _Criterion


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        verdict, title, detail = _RESULTS[n]
        terminalreporter.write_line(f"criterion {n}: {verdict} - {title} ({detail})")
