import pytest

CRITERIA = {
    1: "1-D discrepancy levels at 2^13 and 2^19, ordering MC > Haar > greedy",
    2: "growth ratio Disc(2^19) / Disc(2^13) per strategy",
    3: "fixed-rectangle bias spot checks at n = 10^5",
    4: "unbiasedness of the output measure (200 runs, n = 1000)",
    5: "exact identity suites",
    6: "thinning contract",
    7: "determinism and table1 preset runtime",
}

_outcomes: dict[int, list[tuple[str, str]]] = {}
_details: dict[int, list[str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    failed_setup = report.when == "setup" and report.outcome != "passed"
    if report.when == "call" or failed_setup:
        _outcomes.setdefault(mark.args[0], []).append((item.name, report.outcome))
        for key, value in report.user_properties:
            if key == "detail":
                _details.setdefault(mark.args[0], []).append(value)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number, label in CRITERIA.items():
        results = _outcomes.get(number)
        if not results:
            terminalreporter.write_line(f"criterion {number}: NOT RUN  {label}")
            continue
        bad = [name for name, outcome in results if outcome != "passed"]
        status = "PASS" if not bad else "FAIL"
        extra = f"  (failed: {', '.join(bad)})" if bad else ""
        terminalreporter.write_line(
            f"criterion {number}: {status}  {label}  [{len(results) - len(bad)}/{len(results)} checks]{extra}"
        )
        for line in _details.get(number, []):
            terminalreporter.write_line(f"    {line}")
