import re

import numpy as np
import pytest

from rotforge.data import Dataset

_ACCEPT_RE = re.compile(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One PASS/FAIL line per acceptance criterion in the summary."""
    outcomes = {}
    for status, reports in terminalreporter.stats.items():
        for rep in reports:
            nodeid = getattr(rep, "nodeid", "")
            match = _ACCEPT_RE.search(nodeid)
            if not match or getattr(rep, "when", "call") != "call":
                continue
            num, name = int(match.group(1)), match.group(2)
            if status == "passed":
                outcomes[num] = (name, "PASS")
            elif status in ("failed", "error"):
                outcomes[num] = (name, "FAIL")
            elif status == "skipped":
                outcomes[num] = (name, "SKIP (optional)")
    if outcomes:
        terminalreporter.write_sep("-", "acceptance criteria")
        for num in sorted(outcomes):
            name, verdict = outcomes[num]
            terminalreporter.write_line(
                f"ACCEPTANCE CRITERION {num} ({name}): {verdict}")


def make_dataset(values, labels, n_classes=None, name="toy"):
    values = np.asarray(values, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    c = n_classes or int(labels.max()) + 1
    return Dataset(
        name=name,
        feature_names=tuple(f"att{j}" for j in range(values.shape[1])),
        values=values,
        labels=labels,
        class_names=tuple(f"c{j}" for j in range(c)),
    )


@pytest.fixture
def toy_dataset():
    """Ten cases, two attributes, two balanced classes, separable at x0=0."""
    gen = np.random.default_rng(7)
    x0 = np.concatenate([gen.uniform(-2, -0.5, 5), gen.uniform(0.5, 2, 5)])
    x1 = gen.normal(size=10)
    labels = np.array([0] * 5 + [1] * 5)
    return make_dataset(np.column_stack([x0, x1]), labels)
