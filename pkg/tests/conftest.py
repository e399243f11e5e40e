import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title in mod.TITLES.items():
        if n in mod.RESULTS:
            ok, detail = mod.RESULTS[n]
            verdict = "PASS" if ok else "FAIL"
        else:
            verdict, detail = "NOT RUN", "test did not reach a verdict"
        terminalreporter.write_line(f"criterion {n:2d} {verdict:<7} {title}: {detail}")
