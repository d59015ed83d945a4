import functools
import time

import pytest

from benchforge.landscape import extract_features
from benchforge.problems import builtin_target_suite
from benchforge.solvers import SolverSpec, derive_seed

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        entry = _CRITERIA.setdefault(number, {"title": title, "failed": [], "checks": 0, "seconds": 0.0})
        entry["checks"] += 1
        entry["seconds"] += report.duration
        # an expected failure still counts against the criterion
        if not report.passed:
            entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "FAIL" if e["failed"] else "PASS"
        detail = f"  [failed: {', '.join(e['failed'])}]" if e["failed"] else ""
        terminalreporter.write_line(f"criterion {number:>2} {status}  {e['title']}  ({e['seconds']:.1f}s){detail}")


FAST_POOL = (SolverSpec("de_rand_1_bin"), SolverSpec("pso_star"), SolverSpec("random_search"))


@functools.lru_cache(maxsize=None)
def classic12_features(dim: int = 10, n: int = 250, master_seed: int = 0):
    seed = derive_seed(master_seed, "features")
    return tuple(extract_features(p, n, seed) for p in builtin_target_suite("classic12", dim))


@pytest.fixture
def stopwatch():
    start = time.monotonic()
    return lambda: time.monotonic() - start
