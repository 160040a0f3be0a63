import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from perfpred.domain import Ball, Hypercube, Polygon2D

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def regular_polygon(k, radius=1.0, center=(0.0, 0.0)):
    ang = 2 * np.pi * np.arange(k) / k
    return Polygon2D(np.column_stack([np.cos(ang), np.sin(ang)]) * radius + np.asarray(center))


SAMPLE_DOMAINS = [
    Hypercube.unit(2),
    Hypercube([-1.0, 0.0, 2.0], [1.0, 0.5, 3.0]),
    Ball([0.0, 0.0], 1.0),
    Ball([1.0, -2.0, 0.5], 2.5),
    Polygon2D([[0, 0], [1, 0], [0, 1]]),
    regular_polygon(7, 2.0, (1.0, 1.0)),
]


def sample_in(dom, rng, n):
    """Random points of ``dom`` (projection of a padded box sample)."""
    R = dom.outer_radius
    P = np.asarray(dom.center) + rng.uniform(-R, R, (n, dom.dim))
    return np.array([dom.project(p) for p in P])


# one line per acceptance criterion in the terminal summary
_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if item.get_closest_marker("acceptance") is None:
        return
    doc = (item.obj.__doc__ or item.name).strip().splitlines()[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in rep.user_properties if k == "detail")
        # parametrized cases share one line: any failure fails it
        prev_ok, prev_detail = _ACCEPTANCE.get(doc, (True, ""))
        joined = "; ".join(d for d in (prev_detail, detail) if d)
        _ACCEPTANCE[doc] = (prev_ok and rep.passed, joined)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for doc, (ok, detail) in sorted(_ACCEPTANCE.items(),
                                        key=lambda kv: int(kv[0].split()[0][1:])):
        terminalreporter.write_line(("PASS" if ok else "FAIL") + f"  {doc}" + (f"  [{detail}]" if detail else ""))
