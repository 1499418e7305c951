from collections import defaultdict

import pytest

_criteria: dict[int, list[tuple[str, str]]] = defaultdict(list)

TITLES = {
    1: "combinatorial invariants, exact",
    2: "sublevel asymptotics",
    3: "dyadic rectangle integrals",
    4: "Fourier transform of pieces, small frequencies",
    5: "Fourier transform of pieces, high-frequency decay",
    6: "multiplier uniformity in L",
    7: "operator L2 harness",
    8: "symbol condition with moments",
    9: "distribution pairing",
    10: "Riesz multiplicity-one demo",
    11: "hypothesis screen",
}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _criteria[mark.args[0]].append((item.name, rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        results = _criteria[n]
        ok = all(o == "passed" for _, o in results)
        failed = [name for name, o in results if o != "passed"]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {TITLES.get(n, '')} ({len(results)} tests)"
        if failed:
            line += "  failing: " + ", ".join(failed)
        tr.write_line(line)
