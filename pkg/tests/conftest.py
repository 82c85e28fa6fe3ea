import pytest


def pytest_addoption(parser):
    parser.addoption(
        "--extended",
        action="store_true",
        default=False,
        help="run the long full-scale acceptance runs (minutes to hours)",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--extended"):
        return
    skip = pytest.mark.skip(reason="extended run; enable with --extended")
    for item in items:
        if "extended" in item.keywords:
            item.add_marker(skip)


_CRITERIA = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line for an acceptance criterion and print it."""

    def _report(number, title, passed, detail=""):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title}  {detail}".rstrip()
        _CRITERIA.append((number, line))
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    lines = dict(_CRITERIA)
    for rep in terminalreporter.stats.get("skipped", []):
        name = rep.nodeid.rsplit("::", 1)[-1]
        if "test_acceptance" in rep.nodeid and name.startswith("test_criterion_"):
            number = int(name.split("_")[2])
            lines.setdefault(number, f"[SKIP] criterion {number:>2}: {name[18:].replace('_', ' ')}  (extended, use --extended)")
    if lines:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
