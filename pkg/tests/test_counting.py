from __future__ import annotations

import math
import xml.etree.ElementTree as ET

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import catalog, sample, store
from primeorbit.counting import (
    CompletenessError,
    certified_t,
    li,
    li_exp,
    oscillation_swing,
    pi_count,
    pot_report,
    required_nmax,
    svg_plot,
)
from primeorbit.orbits import PositivityCertificate, eventual_positivity


def li_oracle(y):
    # li(y) - li(2) from the exponential integral
    mpmath.mp.dps = 30
    return float(mpmath.li(y) - mpmath.li(2))


def test_li_special_values():
    assert li(2) == 0.0
    assert li(10) == pytest.approx(5.12043572466980, abs=1e-12)
    with pytest.raises(ValueError):
        li(1.5)
    with pytest.raises(ValueError):
        li_exp(0.5)


@settings(max_examples=60, deadline=None)
@given(st.floats(2.0, 1e12))
def test_li_matches_oracle(y):
    assert li(y) == pytest.approx(li_oracle(y), rel=1e-11, abs=1e-12)


@given(st.floats(1.0, 50.0))
def test_li_exp(x):
    assert li_exp(x) == pytest.approx(li_oracle(math.exp(x)), rel=1e-11, abs=1e-12)


def test_li_exp_large():
    mpmath.mp.dps = 30
    x = 700.0
    oracle = float(mpmath.li(mpmath.exp(x)) - mpmath.li(2))
    assert li_exp(x) == pytest.approx(oracle, rel=1e-10)
    with pytest.raises(OverflowError):
        li_exp(800.0)


def test_required_nmax():
    c1 = PositivityCertificate(True, 1, 0.9, 5)
    assert required_nmax(8.0, c1) == 8
    assert required_nmax(8.1, c1) == 9
    assert certified_t(8, c1) == pytest.approx(8.1)
    c2 = PositivityCertificate(True, 2, 0.5, 5)
    assert required_nmax(1.0, c2) == 2 * (2 + 2)
    with pytest.raises(CompletenessError):
        required_nmax(1.0, PositivityCertificate(False, None, -1.0, 5))


def test_pi_count():
    st_ = store()
    lengths = np.sort([o.birkhoff for o in st_.primitive()])
    cert = eventual_positivity(catalog(), sample())
    for T in (1.0, 3.0, 6.5):
        assert pi_count(st_, T, cert) == int(np.sum(lengths <= T))
    with pytest.raises(CompletenessError) as e:
        pi_count(st_, 20.0, cert)
    assert e.value.required_nmax > 8


def test_pot_report_shapes():
    st_ = store()
    cert = eventual_positivity(catalog(), sample())
    grid = np.linspace(1.0, 6.0, 11)
    rep = pot_report(st_, 1.39, grid, cert)
    rows = list(rep.rows())
    assert len(rows) == 11
    assert all(r[1] <= rows[i + 1][1] for i, r in enumerate(rows[:-1]))
    assert rep.swing == pytest.approx(oscillation_swing(rep.ratio))
    assert not rep.lattice
    with pytest.raises(ValueError):
        pot_report(st_, 1.39, [0.1], cert)
    with pytest.raises(CompletenessError):
        pot_report(st_, 1.39, [20.0], cert)


def test_svg_is_well_formed():
    svg = svg_plot([1, 2, 3], [0.9, 1.1, 1.0], title="a < b & c")
    root = ET.fromstring(svg)
    assert root.tag.endswith("svg")
    assert "http" not in svg.replace('xmlns="http://www.w3.org/2000/svg"', "")
    assert svg_plot([1], [1.0])
