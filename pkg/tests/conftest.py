"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    name = report.nodeid.split("::test_criterion_", 1)[1]
    if report.when == "call" or (report.when == "setup" and not report.passed):
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[name] = ("PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda s: int(s.split("_", 1)[0])):
        verdict, detail = _CRITERIA[name]
        number, label = name.split("_", 1)
        line = f"{verdict} criterion {number} ({label.replace('_', ' ')})"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
