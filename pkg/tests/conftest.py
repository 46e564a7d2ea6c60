from __future__ import annotations

import functools

import pytest
from hypothesis import settings

from primeorbit.potentials import constant, coboundary, sample_potential
from primeorbit.sphere import lattes_f0
from primeorbit.tiles import build_catalog, curve_from_spec

# shared fixtures are built lazily inside examples
settings.register_profile("primeorbit", deadline=None)
settings.load_profile("primeorbit")


@functools.lru_cache(maxsize=None)
def f0():
    return lattes_f0()


@functools.lru_cache(maxsize=None)
def catalog():
    return build_catalog(f0(), curve_from_spec({"kind": "extended_real_line"}))


@functools.lru_cache(maxsize=None)
def sample():
    return sample_potential(0.2)


@functools.lru_cache(maxsize=None)
def cobound():
    return coboundary(f0(), 1.0, 0.2)


@functools.lru_cache(maxsize=None)
def one():
    return constant(1.0)


@functools.lru_cache(maxsize=None)
def store():
    from primeorbit.orbits import OrbitStore

    return OrbitStore(catalog(), 8, sample())


@functools.lru_cache(maxsize=None)
def thermo(m_grid=6):
    from primeorbit.thermo import build_thermo

    return build_thermo(catalog(), sample(), m_grid=m_grid)


@pytest.fixture(scope="session")
def cat():
    return catalog()


@pytest.fixture(scope="session")
def f():
    return f0()


@pytest.fixture
def detail(request):
    def put(text):
        request.node.criterion_detail = text

    return put


# ---------------------------------------------------------------------------
# acceptance report
# ---------------------------------------------------------------------------

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, title): acceptance criterion k")
    config.addinivalue_line("markers", "slow: takes more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    k, title = mark.args
    entry = _RESULTS.setdefault(k, {"title": title, "ok": True, "seconds": 0.0, "detail": ""})
    entry["seconds"] += rep.duration
    if rep.failed:
        entry["ok"] = False
        entry["detail"] = str(rep.longrepr).strip().splitlines()[-1][:160]
    if rep.when == "call":
        detail = getattr(item, "criterion_detail", "")
        if detail and entry["ok"]:
            entry["detail"] = detail


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_RESULTS):
        e = _RESULTS[k]
        status = "PASS" if e["ok"] else "FAIL"
        terminalreporter.write_line(f"criterion {k:2d} {status}  {e['title']}  ({e['seconds']:.1f} s)  {e['detail']}")
