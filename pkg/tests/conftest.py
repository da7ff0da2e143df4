import pytest

_CRITERIA = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_CRITERIA] = []


@pytest.fixture
def report(request):
    """Record one PASS/FAIL line per acceptance criterion."""
    lines = request.config.stash[_CRITERIA]

    def emit(criterion, checks):
        ok = all(passed for _, passed in checks)
        detail = "; ".join(f"{desc} [{'ok' if passed else 'FAILED'}]" for desc, passed in checks)
        line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} | {detail}"
        lines.append(line)
        print(line)
        return ok, [desc for desc, passed in checks if not passed]

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_CRITERIA, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
