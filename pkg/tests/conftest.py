import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Experimental widths: sigma in um, kappa in 1/mm.
SIGMA_EXP = 6.25
KAPPA_EXP = 7.75

# One line per acceptance criterion, printed in the terminal summary.
ACCEPTANCE_LINES = []


def acceptance_verdict(label, ok, detail):
    line = f"ACCEPTANCE {label}: {'PASS' if ok else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
