from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import catalog, one, sample, thermo
from primeorbit.potentials import constant
from primeorbit.thermo import (
    DiscreteRuelle,
    PressureCurve,
    TileFunction,
    cesaro_eigenfunction,
    gibbs_weights,
    l2_decay_probe,
    pressure,
    pressure_spread,
    shared_tree,
    solve_s0,
    tile_index,
    transfer_value,
)
from primeorbit.tiles import PreconditionViolated

LOG4 = math.log(4)


@given(st.floats(0.1, 3), st.floats(0, 3))
def test_constant_pressure(c, a):
    assert pressure(catalog(), constant(c), a) == pytest.approx(LOG4 - a * c, abs=1e-12)


def test_transfer_value_oracle(cat):
    # sum over f^-m(y) of exp(S_m psi), brute force by the tree
    phi = sample()
    tree = shared_tree(cat, 3)
    S = tree.birkhoff(phi, 3)[3][tree.root[3] == 0]
    assert transfer_value(cat, phi, 3) == pytest.approx(np.exp(S).sum(), rel=1e-12)
    assert transfer_value(cat, None, 5) == 4**5
    assert transfer_value(cat, constant(0.5), 2) == pytest.approx(16 * math.e)


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2.5), st.floats(0.01, 0.5))
def test_pressure_decreasing_convex(a, h):
    curve = PressureCurve(catalog(), sample(), 6)
    p0, p1, p2 = curve(a), curve(a + h), curve(a + 2 * h)
    # phi > 0.9 forces a slope below -0.9
    assert p1 - p0 <= -0.9 * h + 1e-12
    assert p0 - 2 * p1 + p2 >= -1e-12


def test_pressure_depth_and_base_point(cat):
    vals = [pressure(cat, sample(), 1.0, m) for m in (6, 7, 8)]
    assert abs(vals[2] - vals[1]) < abs(vals[1] - vals[0])
    assert pressure_spread(cat, sample(), 1.0, 6) < 1e-3


def test_s0(cat):
    r = solve_s0(cat, sample())
    assert r.residual < 1e-7
    assert abs(pressure(cat, sample(), r.s0)) < 1e-7
    # 0.8 <= phi <= 1.2 brackets s0 between log 4 / 1.2 and log 4 / 0.8
    assert LOG4 / 1.2 < r.s0 < LOG4 / 0.8
    with pytest.raises(PreconditionViolated):
        solve_s0(cat, constant(-1.0))


def test_perron_data_dense_oracle(cat):
    R = DiscreteRuelle(cat, sample(), m=3)
    a = 1.3
    lam, u, nu = R.eigen(a)
    M = R.matrix(-a * R.phi_child).toarray()
    ev = np.linalg.eigvals(M)
    assert lam == pytest.approx(np.max(np.abs(ev)), rel=1e-10)
    assert np.allclose(M @ u, lam * u, rtol=1e-10)
    assert np.allclose(nu @ M, lam * nu, rtol=1e-10)
    assert np.all(u > 0) and np.all(nu > 0)
    assert nu.sum() == pytest.approx(1) and nu @ u == pytest.approx(1)


def test_constant_potential_ruelle(cat):
    R = DiscreteRuelle(cat, constant(1.0), m=3)
    lam, u, _ = R.eigen(1.0)
    assert lam == pytest.approx(4 / math.e, rel=1e-12)
    assert np.ptp(u) < 1e-10


def test_solution_diagnostics():
    sol = thermo()
    d = sol.diagnostics
    assert d["normalization_error"] < 1e-6
    assert d["monotone_margin"] > 0
    assert d["eigen_residual"] < 1e-8
    # level-6 discretization vs the depth-8 pressure at s0
    assert abs(d["log_lambda_grid"]) < 1e-3
    mu = sol.equilibrium
    assert np.all(mu > 0) and mu.sum() == pytest.approx(1)
    # the equilibrium weights are invariant under the dual of the normalized operator
    L = sol._op(sol.s0)
    assert np.allclose(L.T.dot(mu), mu, atol=1e-14)
    assert sol.gibbs.sum() == pytest.approx(1)


def test_normalized_potential_sums():
    # sum over the d preimages of exp(phi_tilde) is 1 up to the grid error
    from primeorbit.tiles import pull_back_all

    sol = thermo()
    cat = sol.cat
    rng = np.random.default_rng(3)
    y = cat.frame.from_disc(0.9 * np.sqrt(rng.uniform(size=16)) * np.exp(2j * np.pi * rng.uniform(size=16)), np.zeros(16, int))
    kids = pull_back_all(cat, y, 0)
    vals = np.exp(sol.normalized_potential(kids.ravel())).reshape(16, 4).sum(axis=1)
    assert np.max(np.abs(vals - 1)) < 0.05


def test_tile_function():
    sol = thermo()
    rng = np.random.default_rng(1)
    u = sol.tile_function(rng.normal(size=sol.ruelle.n))
    back = TileFunction.from_pair(u.level, u.sides, *u.pair)
    assert np.array_equal(back.values, u.values)
    assert u.sup() == np.max(np.abs(u.values))
    with pytest.raises(ValueError):
        sol.tile_function(np.full(sol.ruelle.n, np.nan))
    with pytest.raises(ValueError):
        sol.tile_function(np.ones(3))


def test_tile_index(cat):
    tree = shared_tree(cat, 4)
    assert np.array_equal(tile_index(cat, tree.points[4], 4), np.arange(tree.size(4)))
    with pytest.raises(PreconditionViolated):
        tile_index(cat, [0.5], 2)


def test_split_blocks_match_full_operator():
    sol = thermo()
    rng = np.random.default_rng(2)
    s = sol.s0 + 4j
    u = rng.normal(size=sol.ruelle.n) + 1j * rng.normal(size=sol.ruelle.n)
    full = sol._op(s).dot(u)
    tf = sol.tile_function(u)
    b, w = sol.split_apply(s, tf.pair)
    assert np.allclose(b, full[sol.sides == 0]) and np.allclose(w, full[sol.sides == 1])
    pb, pw = sol.split_apply(s, tf.pair, 2, method="paths")
    mb, mw = sol.split_apply(s, tf.pair, 2)
    assert np.allclose(pb, mb, rtol=1e-12) and np.allclose(pw, mw, rtol=1e-12)


def test_gibbs_and_cesaro(cat):
    phi = sample()
    P = pressure(cat, phi, 1.0)
    w, ratio = gibbs_weights(cat, phi, 5, 1.0, P)
    assert w.sum() == pytest.approx(1) and np.all(w > 0)
    assert 1 < ratio < 10
    res = [cesaro_eigenfunction(cat, phi, 3, J, 1.0, P)[1] for J in (1, 3, 5)]
    assert res[0] > res[1] > res[2]


def test_l2_decay_off_the_real_axis():
    sol = thermo()
    rep = l2_decay_probe(sol, sol.s0 + 20j)
    assert rep.ratio < 1
    # on the real axis the normalized operator fixes 1
    rep0 = l2_decay_probe(sol, sol.s0)
    assert np.allclose(rep0.norms, 1, atol=1e-6)


def test_constant_solution():
    from primeorbit.thermo import build_thermo

    sol = build_thermo(catalog(), one(), m_grid=4)
    assert sol.s0 == pytest.approx(LOG4, abs=1e-12)
    assert sol.diagnostics["normalization_error"] < 1e-12
