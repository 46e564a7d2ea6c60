"""Tile decompositions of the sphere for a rational map and an invariant curve."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from .continuation import BLACK, WHITE, BranchAmbiguity, DiscFrame, mobius_homog, residual, track
from .sphere import (
    INF,
    TAU_CLUSTER,
    TAU_ROOT,
    RationalMap,
    chordal_dist,
    sphere_coords,
)

TAU_BRANCH = 1e-6
TAU_CURVE = 1e-8
COLOR_NAMES = ("black", "white")


class CurveError(Exception):
    pass


class CatalogError(Exception):
    pass


class PreconditionViolated(ValueError):
    pass


class BudgetExceeded(Exception):
    pass


# ---------------------------------------------------------------------------
# invariant curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class InvariantCurve:
    """A circle on the sphere with a black/white side classifier.

    ``kind`` is ``"extended_real_line"`` (black = upper half-plane) or
    ``"circle"`` (black = inside of ``|z - center| = radius``).
    """

    kind: str = "extended_real_line"
    center: complex = 0j
    radius: float = 1.0
    tau_curve: float = TAU_CURVE

    def __post_init__(self):
        if self.kind not in ("extended_real_line", "circle"):
            raise CurveError(f"unknown curve kind {self.kind!r}")
        if self.kind == "circle" and not self.radius > 0:
            raise CurveError("circle radius must be positive")

    @cached_property
    def m(self) -> np.ndarray:
        """Mobius matrix sending the curve to the extended real line, black side up."""
        if self.kind == "extended_real_line":
            return np.eye(2, dtype=complex)
        c, r = complex(self.center), float(self.radius)
        aff = np.array([[1 / r, -c / r], [0, 1]], dtype=complex)
        cayley = np.array([[1j, 1j], [-1, 1]], dtype=complex)
        # real shift keeps both base points finite
        shift = np.array([[1, 1], [0, 1]], dtype=complex)
        return shift @ cayley @ aff

    @cached_property
    def m_inv(self) -> np.ndarray:
        return np.linalg.inv(self.m)

    @cached_property
    def frame(self) -> DiscFrame:
        return DiscFrame(self.m)

    @cached_property
    def _plane(self):
        pts = sphere_coords(np.array([self.point(t) for t in (-2.0, 0.5, 2.5)]))
        n = np.cross(pts[1] - pts[0], pts[2] - pts[0])
        n /= np.linalg.norm(n)
        return n, float(n @ pts[0])

    def side(self, z):
        """0 for black, 1 for white, -1 within ``tau_curve`` of the curve."""
        num, den = mobius_homog(self.m, z)
        im = (num * np.conj(den)).imag
        out = np.where(im > 0, BLACK, WHITE).astype(np.int8)
        out = np.where(self.distance(z) < self.tau_curve, -1, out)
        return out if out.ndim else int(out)

    def distance(self, z):
        """Chordal distance from ``z`` to the curve."""
        x = sphere_coords(z)
        n, h = self._plane
        t = np.clip(x @ n, -1, 1)
        d2 = (t - h) ** 2 + (np.sqrt(1 - t * t) - np.sqrt(max(1 - h * h, 0))) ** 2
        d = np.sqrt(np.maximum(d2, 0))
        return d if d.ndim else float(d)

    def theta(self, z):
        """Curve parameter in (-pi, pi]; meaningful for points on the curve."""
        num, den = mobius_homog(self.m, z)
        small = np.abs(num) <= np.abs(den)
        with np.errstate(all="ignore"):
            r = (num * np.conj(den)).real / np.abs(den) ** 2
            q = (den * np.conj(num)).real / np.abs(num) ** 2
            # 2 atan(r) = sign(r) pi - 2 atan(1/r)
            out = np.where(small, 2 * np.arctan(r), np.where(q >= 0, np.pi, -np.pi) - 2 * np.arctan(q))
        out = np.where(out <= -np.pi, out + 2 * np.pi, out)
        return out if out.ndim else float(out)

    def point(self, theta):
        theta = np.asarray(theta, dtype=float)
        c, s = np.cos(theta / 2), np.sin(theta / 2)
        # homogeneous real point [s : c] pushed back through m^{-1}
        (a, b), (cc, d) = self.m_inv
        num, den = a * s + b * c, cc * s + d * c
        small = np.abs(num) <= np.abs(den)
        with np.errstate(all="ignore"):
            out = np.where(small, num / np.where(small, den, 1), 1 / np.where(small, 1, den / np.where(small, 1, num)))
        out = np.where(~small & (np.abs(den) == 0), INF, out)
        return out if out.ndim else complex(out)

    def sample(self, n: int = 256, offset: float = 0.123):
        return self.point(-np.pi + 2 * np.pi * (np.arange(n) + offset) / n)

    def check(self, f: RationalMap, n: int = 256, post=None):
        """Verify post f on the curve and f(C) inside C on ``n`` samples."""
        post = f.postcritical_set() if post is None else post
        dp = [self.distance(p) for p in post]
        if max(dp) > self.tau_curve * 10:
            raise CurveError(f"postcritical point off the curve (distance {max(dp):.3g})")
        pts = self.sample(n)
        img = f(pts)
        dmax = float(np.max(self.distance(img)))
        if dmax > 1e-7:
            raise CurveError(f"curve is not invariant: max distance of f(C) from C is {dmax:.3g}")
        return dmax

    def to_dict(self):
        if self.kind == "circle":
            return {"kind": "circle", "center": [self.center.real, self.center.imag], "radius": self.radius}
        return {"kind": self.kind}


def curve_from_spec(spec) -> InvariantCurve:
    if spec is None:
        return InvariantCurve()
    kind = spec.get("kind", "extended_real_line")
    if kind == "circle":
        c = spec.get("center", 0)
        if isinstance(c, (list, tuple)):
            c = complex(c[0], c[1])
        return InvariantCurve("circle", complex(c), float(spec.get("radius", 1.0)))
    return InvariantCurve(kind)


# ---------------------------------------------------------------------------
# catalog
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OneTile:
    id: int
    side: int
    color: int
    sample_point: complex


@dataclass(frozen=True)
class TileWord:
    """Admissible word of one-tile ids; ``root`` names the 0-tile when empty."""

    letters: tuple
    root: int | None = None

    def __len__(self):
        return len(self.letters)

    def __iter__(self):
        return iter(self.letters)

    def __str__(self):
        if not self.letters:
            return COLOR_NAMES[self.root]
        return "-".join(str(x) for x in self.letters)


@dataclass(frozen=True, eq=False)
class TileCatalog:
    map: RationalMap
    curve: InvariantCurve
    one_tiles: tuple
    transition: np.ndarray
    base_map: RationalMap | None = None
    n_iterate: int = 1
    metric_exponent: float = 1.0
    post: tuple = field(default=(), repr=False)

    @property
    def degree(self) -> int:
        return self.map.degree

    @property
    def frame(self) -> DiscFrame:
        return self.curve.frame

    @property
    def base_points(self):
        return self.frame.base

    @cached_property
    def sides(self) -> np.ndarray:
        return np.array([t.side for t in self.one_tiles], dtype=np.int8)

    @cached_property
    def colors(self) -> np.ndarray:
        return np.array([t.color for t in self.one_tiles], dtype=np.int8)

    @cached_property
    def sample_points(self) -> np.ndarray:
        return np.array([t.sample_point for t in self.one_tiles], dtype=complex)

    @cached_property
    def color_groups(self) -> np.ndarray:
        """``color_groups[c]`` lists the tile ids of color c (length deg f)."""
        return np.stack([np.nonzero(self.colors == c)[0] for c in (BLACK, WHITE)])

    @cached_property
    def rank_in_color(self) -> np.ndarray:
        r = np.empty(len(self.one_tiles), dtype=np.int64)
        for c in (BLACK, WHITE):
            r[self.color_groups[c]] = np.arange(self.degree)
        return r

    @cached_property
    def expansion_estimate(self) -> float:
        return estimate_expansion(self)

    @cached_property
    def joins_opposite_sides(self) -> bool:
        return check_joins_opposite_sides(self)[0]


def build_catalog(f: RationalMap, curve: InvariantCurve | None = None, *, n_iterate: int = 1) -> TileCatalog:
    """Level-1 tiles of ``F = f^n_iterate`` for the invariant curve."""
    curve = InvariantCurve() if curve is None else curve
    post = tuple(f.check_supported())
    F = f.iterate(n_iterate) if n_iterate > 1 else f
    curve.check(F, post=post)
    frame = curve.frame
    rows = []
    for c in (BLACK, WHITE):
        y = frame.base[c]
        pre = F.preimages(y)
        if any(k > 1 for _, k in pre):
            raise CatalogError(f"base point {y} is a critical value")
        for x, _ in pre:
            dist = curve.distance(x)
            if dist < 10 * curve.tau_curve:
                raise CatalogError(f"sample point {x} lies within {dist:.2g} of the curve")
            s = curve.side(x)
            key = tuple(np.round(sphere_coords(x), 9))
            rows.append((c, s, key, complex(x)))
    rows.sort(key=lambda r: (r[0], r[1], r[2]))
    tiles = tuple(OneTile(i, int(s), int(c), x) for i, (c, s, _, x) in enumerate(rows))
    d = F.degree
    if len(tiles) != 2 * d:
        raise CatalogError("wrong number of one-tiles")
    sides = np.array([t.side for t in tiles])
    colors = np.array([t.color for t in tiles])
    if np.sum(colors == BLACK) != d:
        raise CatalogError("color census does not match the degree")
    # f(sample) must lie on the side given by the color
    img_side = curve.side(F(np.array([t.sample_point for t in tiles])))
    if np.any(img_side != colors):
        raise CatalogError("sample point images are on the wrong side")
    A = (sides[None, :] == colors[:, None]).astype(np.int64)
    cat = TileCatalog(F, curve, tiles, A, base_map=f, n_iterate=n_iterate, post=post)
    check_catalog(cat)
    return cat


def check_catalog(cat: TileCatalog):
    A = cat.transition
    d = cat.degree
    if np.any(A.sum(axis=0) != d):
        raise CatalogError("column sums of the transition matrix differ from deg f")
    P = np.eye(len(A), dtype=np.int64)
    for _ in range(2 * d):
        P = np.minimum(P @ A, 1)
        if np.all(P > 0):
            return
    raise CatalogError("transition matrix is not mixing within 2 deg f steps")


def transition_matrix(cat: TileCatalog) -> np.ndarray:
    return cat.transition.copy()


def mixing_power(A) -> int | None:
    P = np.eye(len(A), dtype=np.int64)
    for k in range(1, 2 * len(A) + 1):
        P = np.minimum(P @ A, 1)
        if np.all(P > 0):
            return k
    return None


# ---------------------------------------------------------------------------
# words
# ---------------------------------------------------------------------------


def word_count(cat: TileCatalog, n: int) -> int:
    return 2 if n == 0 else 2 * cat.degree**n


def enumerate_tiles(cat: TileCatalog, n: int, budget: int = 2_000_000) -> Iterator[TileWord]:
    """All admissible words of length n (2 synthetic roots for n = 0)."""
    if n < 0:
        raise ValueError("n must be >= 0")
    if word_count(cat, n) > budget:
        raise BudgetExceeded(f"{word_count(cat, n)} words exceed the budget {budget}")
    if n == 0:
        yield TileWord((), BLACK)
        yield TileWord((), WHITE)
        return
    for row in word_array(cat, n):
        yield TileWord(tuple(int(x) for x in row))


def word_array(cat: TileCatalog, n: int) -> np.ndarray:
    """Admissible words of length n in tree order, as an (N, n) int8 array."""
    words = np.zeros((2, 0), dtype=np.int8)
    sides = np.array([BLACK, WHITE], dtype=np.int8)
    d = cat.degree
    for _ in range(n):
        kids = cat.color_groups[sides]  # (N, d)
        first = kids.ravel().astype(np.int8)
        words = np.concatenate([first[:, None], np.repeat(words, d, axis=0)], axis=1)
        sides = cat.sides[first]
    return words


def is_admissible(cat: TileCatalog, word: Sequence[int]) -> bool:
    A = cat.transition
    return all(A[word[i], word[i + 1]] for i in range(len(word) - 1))


# ---------------------------------------------------------------------------
# inverse branches
# ---------------------------------------------------------------------------


def pull_back(cat: TileCatalog, tiles, z, *, koebe=0.25):
    """Apply the inverse branch of each tile in ``tiles`` to the matching point of ``z``.

    ``z[i]`` must lie in the open 0-tile ``color(tiles[i])``.
    """
    tiles = np.asarray(tiles)
    z = np.asarray(z, dtype=complex)
    tiles, z = np.broadcast_arrays(tiles, z)
    shape = z.shape
    tiles = tiles.ravel()
    z = z.ravel()
    col = cat.colors[tiles]
    u1 = cat.frame.to_disc(z, col)
    x, ok = track(cat.map, cat.frame, cat.sample_points[tiles], 0.0, u1, col, koebe=koebe)
    return x.reshape(shape), ok.reshape(shape)


def pull_back_all(cat: TileCatalog, z, color, *, validate=True):
    """All deg f inverse branches at points ``z`` lying in 0-tile ``color``.

    Returns an (N, d) array ordered as ``cat.color_groups[color]``.
    """
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    color = np.broadcast_to(np.asarray(color), z.shape)
    tiles = cat.color_groups[color]
    zz = np.repeat(z[:, None], cat.degree, axis=1)
    x, ok = pull_back(cat, tiles, zz)
    if validate:
        bad = _invalid_rows(cat, x, ok, tiles, zz)
        if np.any(bad):
            x2, ok2 = pull_back(cat, tiles[bad], zz[bad], koebe=0.05)
            x[bad], ok[bad] = x2, ok2
            still = _invalid_rows(cat, x, ok, tiles, zz)
            if np.any(still):
                i = int(np.nonzero(still)[0][0])
                raise BranchAmbiguity(f"inverse branches at {z[i]} could not be separated")
    return x


def _invalid_rows(cat, x, ok, tiles, z):
    F = cat.map
    d = x.shape[1]
    bad = ~np.all(ok, axis=1)
    xi = x.ravel()
    zi = z.ravel()
    z1, z2 = mobius_homog(np.eye(2, dtype=complex), zi)
    res = residual(F, xi, z1, z2).reshape(x.shape)
    bad |= ~np.all(res < TAU_ROOT, axis=1)
    if d > 1:
        dd = chordal_dist(x[:, :, None], x[:, None, :])
        dd = dd + np.eye(d)[None] * 10
        bad |= np.min(dd.reshape(len(x), -1), axis=1) <= TAU_CLUSTER
    s = cat.curve.side(xi).reshape(x.shape)
    bad |= np.any((s >= 0) & (s != cat.sides[tiles]), axis=1)
    return bad


def inverse_branch(cat: TileCatalog, tile, z):
    """The preimage of ``z`` inside the one-tile ``tile``."""
    tid = tile.id if isinstance(tile, OneTile) else int(tile)
    c = int(cat.colors[tid])
    z = complex(z)
    if cat.curve.distance(z) < TAU_BRANCH:
        raise PreconditionViolated(f"{z} lies within {TAU_BRANCH} of the curve")
    if cat.curve.side(z) != c:
        raise PreconditionViolated(f"{z} is not in the {COLOR_NAMES[c]} 0-tile")
    x = pull_back_all(cat, [z], c)[0]
    return complex(x[cat.rank_in_color[tid]])


def pull_words(cat: TileCatalog, words, z):
    """Pull points back along words: returns ``g_{X_0} o ... o g_{X_{n-1}}(z)``.

    ``words`` has shape (W, n); ``z`` has shape (W, P) and lies in the 0-tile
    of color ``color(X_{n-1})``. Returns the final points and the full chain,
    ``chain[i]`` being the image under ``f^i``.
    """
    words = np.atleast_2d(np.asarray(words))
    z = np.asarray(z, dtype=complex)
    if z.ndim == 1:
        z = z[:, None]
    W, n = words.shape
    chain = [None] * (n + 1)
    chain[n] = z
    cur = z
    for i in range(n - 1, -1, -1):
        tiles = np.repeat(words[:, i : i + 1], cur.shape[1], axis=1)
        cur, ok = pull_back(cat, tiles, cur)
        if not np.all(ok):
            cur2, ok2 = pull_back(cat, tiles[~ok], chain[i + 1][~ok], koebe=0.05)
            cur[~ok] = cur2
            if not np.all(ok2):
                raise BranchAmbiguity("branch tracking failed along a word")
        chain[i] = cur
    return cur, chain


def ring_probes(cat: TileCatalog, color: int, n_probes: int = 8, radius: float = 0.98):
    u = radius * np.exp(2j * np.pi * (np.arange(n_probes) + 0.5) / n_probes)
    return np.concatenate([[cat.base_points[color]], cat.frame.from_disc(u, np.full(n_probes, color))])


def realize_tile(cat: TileCatalog, word, n_probes: int = 8):
    """Collocation point and probe diameter of the tile named by ``word``."""
    letters = list(word.letters if isinstance(word, TileWord) else word)
    if not letters:
        raise PreconditionViolated("empty word")
    if not is_admissible(cat, letters):
        raise PreconditionViolated(f"word {letters} is not admissible")
    c = int(cat.colors[letters[-1]])
    probes = ring_probes(cat, c, n_probes)
    pts, _ = pull_words(cat, np.array([letters]), probes[None, :])
    pts = pts[0]
    diam = float(np.max(chordal_dist(pts[:, None], pts[None, :])))
    return complex(pts[0]), diam


def realize_tiles(cat: TileCatalog, words, n_probes: int = 8, chunk: int = 4096):
    """Vectorized ``realize_tile`` over an (N, n) word array."""
    words = np.atleast_2d(np.asarray(words))
    pts_out = np.empty(len(words), dtype=complex)
    diam_out = np.empty(len(words))
    probes = np.stack([ring_probes(cat, c, n_probes) for c in (BLACK, WHITE)])
    for s in range(0, len(words), chunk):
        w = words[s : s + chunk]
        z = probes[cat.colors[w[:, -1]]]
        pts, _ = pull_words(cat, w, z)
        pts_out[s : s + chunk] = pts[:, 0]
        diam_out[s : s + chunk] = np.max(chordal_dist(pts[:, :, None], pts[:, None, :]).reshape(len(w), -1), axis=1)
    return pts_out, diam_out


# ---------------------------------------------------------------------------
# pullback tree
# ---------------------------------------------------------------------------


class PullbackTree:
    """All pullbacks of root points to a fixed depth, indexed level by level.

    A level-k node ``i`` is the pullback of its parent ``tail[k][i]`` (a
    level-(k-1) node) through the one-tile ``first[k][i]``; its word is
    ``first`` followed by the parent's word.
    """

    def __init__(self, cat: TileCatalog, depth: int, roots=None, root_colors=None):
        self.cat = cat
        if roots is None:
            roots = np.array(cat.base_points, dtype=complex)
            root_colors = np.array([BLACK, WHITE])
        roots = np.atleast_1d(np.asarray(roots, dtype=complex))
        if root_colors is None:
            root_colors = cat.curve.side(roots)
        root_colors = np.atleast_1d(np.asarray(root_colors, dtype=np.int8))
        if np.any(root_colors < 0):
            raise PreconditionViolated("root point on the curve")
        self.points = [roots]
        self.side = [root_colors]
        self.first = [np.full(len(roots), -1, dtype=np.int8)]
        self.tail = [np.full(len(roots), -1, dtype=np.int64)]
        self.root = [np.arange(len(roots))]
        self.root_color = root_colors
        self.depth = 0
        self.extend(depth)

    @property
    def standard(self) -> bool:
        return len(self.points[0]) == 2 and list(self.root_color) == [BLACK, WHITE]

    def extend(self, depth: int):
        cat = self.cat
        d = cat.degree
        while self.depth < depth:
            px = self.points[-1]
            ps = self.side[-1]
            kids = pull_back_all(cat, px, ps)  # (N, d)
            first = cat.color_groups[ps].ravel().astype(np.int8)
            self.points.append(kids.ravel())
            self.first.append(first)
            self.side.append(cat.sides[first])
            self.tail.append(np.repeat(np.arange(len(px)), d))
            self.root.append(np.repeat(self.root[-1], d))
            self.depth += 1
        return self

    def size(self, k: int) -> int:
        return len(self.points[k])

    def color(self, k: int) -> np.ndarray:
        """Color of the 0-tile onto which ``f^k`` maps the node's tile."""
        return self.root_color[self.root[k]]

    @cached_property
    def _words(self):
        return {0: np.zeros((len(self.points[0]), 0), dtype=np.int8)}

    def words(self, k: int) -> np.ndarray:
        if k not in self._words:
            prev = self.words(k - 1)
            self._words[k] = np.concatenate([self.first[k][:, None], prev[self.tail[k]]], axis=1)
        return self._words[k]

    def child_by_tile(self, k: int) -> np.ndarray:
        """(N_{k-1}, 2d) table: level-k node reached from a parent through a tile, or -1."""
        cat = self.cat
        d = cat.degree
        n = self.size(k - 1)
        out = np.full((n, 2 * d), -1, dtype=np.int64)
        ps = self.side[k - 1]
        base = np.arange(n) * d
        for c in (BLACK, WHITE):
            rows = np.nonzero(ps == c)[0]
            for r, t in enumerate(cat.color_groups[c]):
                out[rows, t] = base[rows] + r
        return out

    @cached_property
    def _prefix(self):
        return {}

    def prefix(self, k: int) -> np.ndarray:
        """Level-(k-1) node whose word is the length-(k-1) prefix (standard roots only)."""
        if not self.standard:
            raise PreconditionViolated("prefix tables need the two base points as roots")
        if k not in self._prefix:
            if k == 1:
                self._prefix[1] = self.side[1].astype(np.int64)
            else:
                inner = self.prefix(k - 1)[self.tail[k]]
                self._prefix[k] = self.child_by_tile(k - 1)[inner, self.first[k]]
        return self._prefix[k]

    def birkhoff(self, phi, k: int | None = None):
        """``S[j][i] = S_j phi`` at level-j nodes, accumulated along the chain."""
        k = self.depth if k is None else k
        S = [np.zeros(self.size(0))]
        for j in range(1, k + 1):
            S.append(phi(self.points[j]) + S[j - 1][self.tail[j]])
        return S


# ---------------------------------------------------------------------------
# diagnostics
# ---------------------------------------------------------------------------


def level_diameters(cat: TileCatalog, n: int, n_probes: int = 8):
    """Probe diameters of all level-n tiles, in ``word_array`` order."""
    probes = np.concatenate([ring_probes(cat, c, n_probes) for c in (BLACK, WHITE)])
    colors = np.repeat([BLACK, WHITE], n_probes + 1)
    tree = PullbackTree(cat, n, probes, colors)
    P = n_probes + 1
    pts = tree.points[n].reshape(2, P, -1)  # (color, probe, node-in-color)
    # node order inside each probe root is identical to word_array order for that color
    pts = np.concatenate([pts[0], pts[1]], axis=1)  # (probe, N)
    diam = np.zeros(pts.shape[1])
    for a in range(P):
        diam = np.maximum(diam, np.max(chordal_dist(pts[a][None, :], pts), axis=0))
    centers = pts[0]
    return centers, diam


def estimate_expansion(cat: TileCatalog, levels=(1, 2, 3, 4)) -> float:
    med = [np.median(level_diameters(cat, n)[1]) for n in levels]
    slope = np.polyfit(np.array(levels, float), np.log(med), 1)[0]
    return float(np.exp(-slope))


def zero_edges(cat: TileCatalog):
    """Curve-parameter intervals of the 0-edges, sorted, last one wrapping."""
    th = np.sort(np.array([cat.curve.theta(p) for p in cat.post]))
    ends = np.append(th[1:], th[0] + 2 * np.pi)
    return np.stack([th, ends], axis=1)


def edges_met(cat: TileCatalog, thetas, slack=1e-6):
    edges = zero_edges(cat)
    met = set()
    for t in np.atleast_1d(thetas):
        for k, (a, b) in enumerate(edges):
            tt = t
            while tt < a - slack:
                tt += 2 * np.pi
            if tt <= b + slack:
                met.add(k)
    return met


def check_joins_opposite_sides(cat: TileCatalog, n_samples: int = 1024, eps: float = 1e-7):
    """Heuristic test whether some 1-tile joins opposite sides of the curve.

    Returns ``(joins, edges_per_tile)``.
    """
    P = len(cat.post)
    u = (1 - eps) * np.exp(2j * np.pi * (np.arange(n_samples) + 0.5) / n_samples)
    per_tile = []
    for t in cat.one_tiles:
        z = cat.frame.from_disc(u, np.full(n_samples, t.color))
        x, _ = pull_back(cat, np.full(n_samples, t.id), z)
        on = x[cat.curve.distance(x) < 1e-4]
        per_tile.append(edges_met(cat, cat.curve.theta(on)))
    joins = False
    for met in per_tile:
        if P >= 4:
            for a in met:
                for b in met:
                    if (a - b) % P not in (0, 1, P - 1):
                        joins = True
        elif P == 3 and len(met) == 3:
            joins = True
    return joins, per_tile


def choose_iterate(f: RationalMap, curve: InvariantCurve | None = None, max_iterate: int = 3):
    """Smallest iterate whose 1-tiles do not join opposite sides."""
    for n in range(1, max_iterate + 1):
        cat = build_catalog(f, curve, n_iterate=n)
        if not cat.joins_opposite_sides:
            return n, cat
    return max_iterate, cat
