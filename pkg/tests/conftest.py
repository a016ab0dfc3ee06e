import math
from functools import lru_cache

import numpy as np
import pytest

from subelliptic.certify import run_pipeline
from subelliptic.distgeo import CirclePoint
from subelliptic.errors import PlanInfeasible
from subelliptic.escape import _half_plans, subdivision_count
from subelliptic.symbols import builtin

PASSING = ["quasielliptic-l2-m4", "maire-l1", "maire-l2", "maire-l3", "jt-q8"]

# half-sector widths that give N = 1..4 segments
WIDTHS = {1: (0.3, 1.4), 2: (1.7, 2.9), 3: (3.2, 4.4), 4: (4.8, 5.9)}


@lru_cache(maxsize=None)
def pipeline(name):
    """(symbol, verdict, certificate) for a builtin, computed once per session."""
    sym = builtin(name)
    verdict, cert = run_pipeline(sym)
    return sym, verdict, cert


@pytest.fixture(scope="session")
def certified():
    return pipeline


def random_half_plans(rng, N, ell):
    """Admissible broken-line plans with N ingoing segments on a random half-sector."""
    while True:
        C = rng.uniform(0, 2 * math.pi)
        w = rng.uniform(*WIDTHS[N])
        orient = int(rng.choice([-1, 1]))
        try:
            if subdivision_count(w) != N:
                continue
            end = C + orient * w
            esc = CirclePoint.from_theta(end + orient * rng.uniform(0.2, 1.3), ell)
            return _half_plans(C, end, orient, esc, ell, "rnd")
        except PlanInfeasible:
            continue


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES = []


def report_criterion(num, ok, detail, elapsed):
    line = f"criterion {num}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s]"
    ACCEPTANCE_LINES.append((num, line))
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
