def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdict lines after the run; pytest's capture
    would otherwise swallow them for passing tests."""
    from tests import test_acceptance

    if test_acceptance.VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.VERDICTS:
            terminalreporter.write_line(line)
