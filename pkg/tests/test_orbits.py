from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import catalog, cobound, one, sample, store
from primeorbit.orbits import (
    EdgeSystem,
    birkhoff_sum,
    eventual_positivity,
    locate_periodic_point,
    moebius_mu,
    necklace_count,
    periodic_residual,
    periodic_word_array,
    primitive_orbits,
    trace_count,
    weighted_length,
)
from primeorbit.potentials import constant
from primeorbit.sphere import chordal_dist
from primeorbit.tiles import PreconditionViolated


def mu_oracle(n):
    """Moebius function by trial factorization."""
    primes = [p for p in range(2, n + 1) if n % p == 0 and all(p % q for q in range(2, int(p**0.5) + 1))]
    for p in primes:
        if n % (p * p) == 0:
            return 0
    return (-1) ** len(primes)


@given(st.integers(1, 2000))
def test_moebius(n):
    assert moebius_mu(n) == mu_oracle(n)


@given(st.integers(2, 6), st.integers(1, 12))
def test_necklace_counts_full_shift(k, n):
    # primitive cycles of the full k-shift, by brute force over rotations for small n
    if k**n > 5000:
        return
    seen, count = set(), 0
    for w in range(k**n):
        digits = tuple((w // k**i) % k for i in range(n))
        rots = {digits[i:] + digits[:i] for i in range(n)}
        if len(rots) == n and digits not in seen:
            count += 1
        seen |= rots
    assert necklace_count(lambda m: k**m, n) == count


def test_trace_counts(cat):
    for n in range(1, 9):
        assert trace_count(cat, n) == 4**n
        if n <= 6:
            assert len(periodic_word_array(cat, n)) == 4**n


@pytest.mark.slow
def test_store_census():
    st_ = store()
    assert not st_.failures
    for n, lv in st_.levels.items():
        # 4^n + 1 fixed points of f^n: 4^n finite roots plus infinity
        assert lv.count == 4**n + 1
        assert int(lv.multiplicity.sum()) == trace_count(st_.cat, n)
        assert lv.residual.max() < 1e-10
        assert len(st_.primitive(n)) == necklace_count(lambda m: 4**m + 1, n)


def test_orbits_close_up():
    f = catalog().map
    for o in store().primitive():
        if o.period > 5:
            continue
        pts = np.array(o.points)
        assert chordal_dist(f(pts[-1]), pts[0]) < 1e-9
        assert np.all(chordal_dist(f(pts[:-1]), pts[1:]) < 1e-9)
        assert o.degree_weight == 1
        assert o.birkhoff == pytest.approx(birkhoff_sum(sample(), o.representative, o.period, f), abs=1e-9)
        assert weighted_length(o, sample(), f) == pytest.approx(o.birkhoff, abs=1e-9)


def test_with_potential_constant():
    st1 = store().with_potential(constant(2.0))
    for o in st1.primitive():
        assert o.birkhoff == pytest.approx(2.0 * o.period)


def test_coboundary_orbit_averages():
    stc = store().with_potential(cobound())
    avg = np.array([o.birkhoff / o.period for o in stc.primitive()])
    assert np.ptp(avg) < 1e-9
    assert avg.mean() == pytest.approx(1.0)


def test_single_word(cat):
    w = periodic_word_array(cat, 3)[5]
    x = locate_periodic_point(cat, w)
    assert periodic_residual(cat.map, x, 3) < 1e-10
    a, b = np.argwhere(cat.transition == 0)[0]
    with pytest.raises(PreconditionViolated):
        locate_periodic_point(cat, [int(a), int(b)])


def test_edge_system(cat):
    es = EdgeSystem(cat)
    assert len(es.one) == 8
    for n in range(1, 5):
        # f restricted to the curve is a degree-2 covering: 2^n fixed points of f^n there
        z, words = es.periodic_points(n)
        assert len(words) == int(np.trace(np.linalg.matrix_power(es.B, n)))
        assert np.all(cat.curve.distance(z) < 1e-9)
        assert np.all(periodic_residual(cat.map, z, n) < 1e-10)


def test_primitive_orbits_cut(cat):
    cert = eventual_positivity(cat, sample())
    assert cert.ok and cert.N == 1 and cert.margin > 0.8
    orbs = primitive_orbits(cat, 3, sample(), t_cut=2.0, certificate=cert)
    assert orbs and all(o.birkhoff <= 2.0 for o in orbs)
    with pytest.raises(PreconditionViolated):
        primitive_orbits(cat, 2, sample(), t_cut=2.0)


def test_positivity_fails_for_negative(cat):
    cert = eventual_positivity(cat, constant(-1.0))
    assert not cert.ok
    assert eventual_positivity(cat, one()).margin == pytest.approx(1.0)
