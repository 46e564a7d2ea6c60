from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import catalog, f0
from primeorbit.sphere import INF, chordal_dist
from primeorbit.tiles import (
    CurveError,
    InvariantCurve,
    PreconditionViolated,
    PullbackTree,
    check_joins_opposite_sides,
    choose_iterate,
    curve_from_spec,
    enumerate_tiles,
    estimate_expansion,
    inverse_branch,
    is_admissible,
    level_diameters,
    mixing_power,
    pull_back_all,
    pull_words,
    realize_tile,
    word_array,
    word_count,
)


def disc_points(color, u):
    cat = catalog()
    return cat.frame.from_disc(np.asarray(u), np.full(np.shape(u), color))


@st.composite
def admissible_words(draw, max_len=5):
    cat = catalog()
    n = draw(st.integers(1, max_len))
    last = draw(st.integers(0, 7))
    word = [last]
    for _ in range(n - 1):
        # the letter before X must have color side(X)
        options = cat.color_groups[cat.sides[word[0]]]
        word.insert(0, int(options[draw(st.integers(0, len(options) - 1))]))
    return word


disc = st.builds(lambda r, t: 0.95 * r * np.exp(2j * np.pi * t), st.floats(0, 1), st.floats(0, 1))


def test_curve_is_invariant(cat, f):
    assert cat.curve.check(f) < 1e-12
    assert cat.curve.side(0.5j) == 0 and cat.curve.side(-0.5j) == 1
    assert cat.curve.side(2.0) == -1 and cat.curve.side(INF) == -1


@given(st.floats(-3.1, 3.1))
def test_curve_theta_roundtrip(t):
    for curve in (InvariantCurve(), InvariantCurve("circle", 1 + 1j, 2.0)):
        z = curve.point(t)
        assert curve.distance(z) < 1e-12
        assert curve.theta(z) == pytest.approx(t, abs=1e-9)


def test_circle_sides():
    c = curve_from_spec({"kind": "circle", "center": [1, 1], "radius": 2})
    assert c.side(1 + 1j) == 0
    assert c.side(10) == 1
    assert c.distance(3 + 1j) < 1e-12


def test_bad_curves():
    with pytest.raises(CurveError):
        InvariantCurve("ellipse")
    with pytest.raises(CurveError):
        InvariantCurve("circle", 0, -1)
    with pytest.raises(CurveError):
        InvariantCurve("circle", 5, 1).check(f0())


def test_catalog_structure(cat):
    assert cat.degree == 4 and len(cat.one_tiles) == 8
    assert np.all(cat.transition.sum(axis=0) == 4)
    assert sorted(np.bincount(cat.colors)) == [4, 4]
    assert sorted(np.bincount(cat.sides)) == [4, 4]
    assert mixing_power(cat.transition) is not None
    joins, _ = check_joins_opposite_sides(cat)
    assert not joins
    n, _ = choose_iterate(f0())
    assert n == 1


def test_iterate_catalog():
    cat2 = choose_iterate(f0(), max_iterate=3)[1]
    assert cat2.n_iterate == 1
    from primeorbit.tiles import build_catalog

    c2 = build_catalog(f0(), n_iterate=2)
    assert c2.degree == 16 and len(c2.one_tiles) == 32
    assert word_count(c2, 1) == 32


@pytest.mark.parametrize("n", range(1, 7))
def test_word_counts(cat, n):
    w = word_array(cat, n)
    assert len(w) == word_count(cat, n) == 2 * 4**n
    assert all(is_admissible(cat, row) for row in w[:: max(1, len(w) // 200)])


def test_enumerate_matches_array(cat):
    words = [t.letters for t in enumerate_tiles(cat, 3)]
    assert words == [tuple(int(x) for x in row) for row in word_array(cat, 3)]


def test_pull_back_all_matches_preimages(cat, f):
    rng = np.random.default_rng(0)
    for color in (0, 1):
        z = disc_points(color, 0.9 * rng.uniform(size=5) * np.exp(2j * np.pi * rng.uniform(size=5)))
        x = pull_back_all(cat, z, color)
        for zi, row in zip(z, x):
            oracle = np.array([p for p, _ in f.preimages(zi)])
            d = chordal_dist(row[:, None], oracle[None, :])
            assert np.max(np.min(d, axis=1)) < 1e-10
            assert np.max(np.min(d, axis=0)) < 1e-10
            # one preimage per one-tile of that color, each on the tile's side
            assert list(cat.curve.side(row)) == list(cat.sides[cat.color_groups[color]])


def test_inverse_branch_preconditions(cat):
    with pytest.raises(PreconditionViolated):
        inverse_branch(cat, 0, 0.5)  # on the curve
    black = int(cat.color_groups[0][0])
    with pytest.raises(PreconditionViolated):
        inverse_branch(cat, black, -1j)
    x = inverse_branch(cat, black, 1j * 0.5)
    assert chordal_dist(f0()(x), 0.5j) < 1e-12


@settings(max_examples=40, deadline=None)
@given(admissible_words(), disc)
def test_pull_words_chain(word, u):
    cat = catalog()
    f = cat.map
    color = int(cat.colors[word[-1]])
    z = disc_points(color, u)
    x, chain = pull_words(cat, np.array([word]), np.array([[z]]))
    # forward iteration retraces the chain, and f^i(x) sits on the side of letter i
    cur = x[0, 0]
    for i, letter in enumerate(word):
        assert chordal_dist(cur, chain[i][0, 0]) < 1e-9
        s = cat.curve.side(cur)
        assert s in (-1, cat.sides[letter])
        cur = f(cur)
    assert chordal_dist(cur, z) < 1e-9


def test_tiles_are_distinct(cat):
    w = word_array(cat, 3)
    pts = np.array([realize_tile(cat, row)[0] for row in w])
    d = chordal_dist(pts[:, None], pts[None, :]) + np.eye(len(pts)) * 10
    assert d.min() > 1e-4
    a, b = np.argwhere(cat.transition == 0)[0]
    with pytest.raises(PreconditionViolated):
        realize_tile(cat, [int(a), int(b)])
    with pytest.raises(PreconditionViolated):
        realize_tile(cat, [])


def test_diameters_shrink(cat):
    med = [np.median(level_diameters(cat, n)[1]) for n in (1, 2, 3, 4)]
    assert all(b < a for a, b in zip(med, med[1:]))
    assert 1.5 < estimate_expansion(cat) < 2.5


def test_pullback_tree(cat):
    tree = PullbackTree(cat, 4)
    for k in range(5):
        assert tree.size(k) == 2 * 4**k
    assert np.array_equal(tree.words(4), word_array(cat, 4))
    # the prefix of a level-k word is a level-(k-1) word
    for k in (2, 3, 4):
        assert np.array_equal(tree.words(k - 1)[tree.prefix(k)], tree.words(k)[:, :-1])
    # children map to their parents
    x = tree.points[3]
    assert np.max(chordal_dist(cat.map(x), tree.points[2][tree.tail[3]])) < 1e-10
    S = tree.birkhoff(lambda z: np.ones(np.shape(z)))
    assert np.all(S[3] == 3)
