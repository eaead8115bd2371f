"""Acceptance outcomes collected during the run, printed at the end."""

# criterion -> (passed, summary)
ACCEPTANCE = {}


def record(criterion, passed, summary):
    ACCEPTANCE[str(criterion)] = (bool(passed), summary)
    return passed
