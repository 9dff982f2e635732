import pytest

CRITERIA = {
    "AC1": "quadrature vs Monte Carlo oracle",
    "AC2": "saturation and monotonicity",
    "AC3": "AWGN shaping gain over 128SP-QAM16",
    "AC4": "nonlinear-tolerance direction",
    "AC5": "reach model properties and desk-scale SSFM regression",
    "AC6": "SSFM physics",
    "AC7": "determinism",
    "AC8": "structure invariants",
}

_outcomes = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    name = marker.args[0]
    failed = report.failed or (report.when == "call" and report.skipped)
    if report.when == "call" or failed:
        _outcomes.setdefault(name, []).append(not failed)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, desc in CRITERIA.items():
        if name not in _outcomes:
            continue
        status = "PASS" if all(_outcomes[name]) else "FAIL"
        terminalreporter.write_line(f"{name} {status}  {desc}")
