from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# lines appended by test_acceptance.py, one per criterion
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
