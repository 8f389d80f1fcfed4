import pytest

_ACCEPTANCE: dict[int, tuple[bool, str]] = {}


class Recorder:
    def __init__(self, number):
        self.number = number

    def __call__(self, passed: bool, detail: str) -> bool:
        _ACCEPTANCE[self.number] = (bool(passed), detail)
        print(f"criterion {self.number}: {'PASS' if passed else 'FAIL'} - {detail}")
        return bool(passed)


@pytest.fixture
def criterion(request):
    """``criterion(n)`` returns a recorder whose verdict shows in the terminal summary."""
    return Recorder


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        ok, detail = _ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    # an acceptance test that crashed before reaching its verdict still gets a FAIL line
    if rep.when == "call" and rep.failed and item.name.startswith("test_criterion_"):
        n = int(item.name.split("_")[2])
        if n not in _ACCEPTANCE or _ACCEPTANCE[n][0]:
            msg = str(call.excinfo.value).splitlines()[0] if call.excinfo else "error"
            _ACCEPTANCE[n] = (False, f"raised {call.excinfo.typename}: {msg[:150]}")
