import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_small():
    from lightexpr.toy import make_toy_corpus

    return make_toy_corpus(40, 64, n_subjects=5, seed=3)


@pytest.fixture(scope="session")
def toy_dir(tmp_path_factory, toy_small):
    from lightexpr.toy import write_toy_corpus

    d = tmp_path_factory.mktemp("toy")
    write_toy_corpus(d, toy_small)
    return d


# -- acceptance summary: one line per criterion at the end of the run -------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::test_criterion_" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        name = report.nodeid.split("::")[-1]
        number = int(name.split("_")[2])
        detail = dict(report.user_properties).get("detail", "")
        _CRITERIA[number] = (report.outcome, name, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        outcome, name, detail = _CRITERIA[number]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {number}: {status}  {name}"
        terminalreporter.write_line(f"{line}  [{detail}]" if detail else line)
