"""Periodic points and primitive periodic orbits from tile words."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .continuation import chain_eval, from_chart, to_chart, track
from .potentials import Potential
from .sphere import chordal_dist, sphere_coords
from .tiles import (
    BudgetExceeded,
    PreconditionViolated,
    PullbackTree,
    TileCatalog,
    TileWord,
    is_admissible,
    pull_words,
    word_array,
)

TAU_DEDUPE = 1e-8
TAU_BOUNDARY = 1e-9


class RefinementError(Exception):
    def __init__(self, message, last=None):
        super().__init__(message)
        self.last = last


@dataclass
class PeriodicOrbit:
    period: int
    representative: complex
    points: list
    primitive: bool
    birkhoff: float
    degree_weight: int
    word: TileWord | None
    boundary: bool = False


def n_threads() -> int:
    try:
        return max(1, int(os.environ.get("ORBIT_THREADS", "1")))
    except ValueError:
        return 1


def birkhoff_sum(phi, x, n: int, f) -> float:
    """``sum_{j<n} phi(f^j x)``; zero for n = 0."""
    s = 0.0
    z = complex(x)
    for _ in range(n):
        s += float(phi(z))
        z = complex(f(z))
    return s


def weighted_length(orbit: PeriodicOrbit, phi, f=None) -> float:
    if f is None:
        return orbit.birkhoff
    return birkhoff_sum(phi, orbit.representative, orbit.period, f)


# ---------------------------------------------------------------------------
# periodic words
# ---------------------------------------------------------------------------


def periodic_word_array(cat: TileCatalog, n: int, budget: int = 4_000_000) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    if 2 * cat.degree**n > budget:
        raise BudgetExceeded(f"level {n} exceeds the word budget {budget}")
    w = word_array(cat, n)
    keep = cat.transition[w[:, -1], w[:, 0]] == 1
    return w[keep]


def periodic_words(cat: TileCatalog, n: int, budget: int = 4_000_000):
    for row in periodic_word_array(cat, n, budget):
        yield TileWord(tuple(int(x) for x in row))


def trace_count(cat: TileCatalog, n: int) -> int:
    return int(np.trace(np.linalg.matrix_power(cat.transition, n)))


# ---------------------------------------------------------------------------
# Newton polish on f^n(z) = z
# ---------------------------------------------------------------------------


def newton_periodic(f, x, n, steps=5, tol=1e-15):
    """Newton on ``f^n(z) - z`` in the chart of the current iterate."""
    x = np.asarray(x, dtype=complex).copy()
    for _ in range(steps):
        xi, src = to_chart(x)
        val, dst, der = chain_eval(f, xi, src, n)
        same = dst == src
        with np.errstate(all="ignore"):
            # bring f^n(x) into the source chart when charts differ
            img = np.where(same, val, 1 / val)
            dimg = np.where(same, der, -der / val**2)
            step = (img - xi) / (dimg - 1)
        step = np.where(np.isfinite(step), step, 0)
        x = from_chart(xi - step, src)
        if np.all(np.abs(step) <= tol * (1 + np.abs(xi))):
            break
    return x


def periodic_residual(f, x, n):
    xi, src = to_chart(x)
    val, dst, _ = chain_eval(f, xi, src, n)
    return chordal_dist(from_chart(val, dst), x)


# ---------------------------------------------------------------------------
# interior periodic points by inverse-branch chain iteration
# ---------------------------------------------------------------------------


def _locate_chunk(cat: TileCatalog, words: np.ndarray, max_iter: int, tol: float):
    W, n = words.shape
    frame = cat.frame
    c_last = cat.colors[words[:, -1]]
    y = np.array(cat.base_points)[c_last]
    _, chain = pull_words(cat, words, y[:, None])
    chain = [np.array(c[:, 0]) for c in chain]
    active = np.ones(W, dtype=bool)
    boundary = np.zeros(W, dtype=bool)
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if len(idx) == 0:
            break
        new = [None] * (n + 1)
        new[n] = chain[0][idx]
        ok_all = np.ones(len(idx), dtype=bool)
        for i in range(n - 1, -1, -1):
            tiles = words[idx, i]
            col = cat.colors[tiles]
            u0 = frame.to_disc(chain[i + 1][idx], col)
            u1 = frame.to_disc(new[i + 1], col)
            xi, ok = track(cat.map, frame, chain[i][idx], u0, u1, col)
            new[i] = xi
            ok_all &= ok
        incr = chordal_dist(new[0], chain[0][idx])
        for i in range(n + 1):
            chain[i][idx] = new[i]
        near = cat.curve.distance(new[0]) < TAU_BOUNDARY
        boundary[idx[near | ~ok_all]] = True
        active[idx[(incr < tol) | near | ~ok_all]] = False
    return chain, boundary


def locate_periodic_points(cat: TileCatalog, words, max_iter: int = 60, tol: float = 1e-12, chunk: int = 8192):
    """Refine the periodic point of each cyclically admissible word.

    Returns ``(points, residuals, boundary, chain)`` where
    ``chain`` holds the inverse-branch chain ``chain[i] ~ f^i(x)``.
    """
    words = np.atleast_2d(np.asarray(words))
    W, n = words.shape
    if np.any(cat.transition[words[:, -1], words[:, 0]] == 0):
        raise PreconditionViolated("word is not cyclically admissible")
    chunks = [words[s : s + chunk] for s in range(0, W, chunk)]
    nt = min(n_threads(), len(chunks))
    if nt > 1:
        with ThreadPoolExecutor(nt) as ex:
            parts = list(ex.map(lambda w: _locate_chunk(cat, w, max_iter, tol), chunks))
    else:
        parts = [_locate_chunk(cat, w, max_iter, tol) for w in chunks]
    chain = [np.concatenate([p[0][i] for p in parts]) for i in range(n + 1)]
    boundary = np.concatenate([p[1] for p in parts])
    x = newton_periodic(cat.map, chain[0], n)
    res = periodic_residual(cat.map, x, n)
    return x, res, boundary, chain


def locate_periodic_point(cat: TileCatalog, word) -> complex:
    letters = list(word.letters if isinstance(word, TileWord) else word)
    if not letters or not is_admissible(cat, letters) or cat.transition[letters[-1], letters[0]] == 0:
        raise PreconditionViolated(f"word {letters} is not periodic-admissible")
    x, res, _, _ = locate_periodic_points(cat, np.array([letters]))
    if not res[0] < 1e-10:
        raise RefinementError(f"Newton did not converge for word {letters}", last=complex(x[0]))
    return complex(x[0])


# ---------------------------------------------------------------------------
# boundary periodic points from the curve dynamics
# ---------------------------------------------------------------------------


class EdgeSystem:
    """The restriction of f to the invariant curve, cut at the 1-vertices."""

    def __init__(self, cat: TileCatalog):
        self.cat = cat
        curve = cat.curve
        F = cat.map
        post_th = np.sort(np.array([curve.theta(p) for p in cat.post]))
        self.zero = np.stack([post_th, np.append(post_th[1:], post_th[0] + 2 * np.pi)], axis=1)
        verts = []
        for p in cat.post:
            for x, _ in F.preimages(p):
                if curve.distance(x) < 1e-7:
                    verts.append(curve.theta(x))
        v = np.unique(np.round(np.sort(np.array(verts)), 14))
        self.one = np.stack([v, np.append(v[1:], v[0] + 2 * np.pi)], axis=1)
        mid = self.one.mean(axis=1)
        self.side = self._zero_edge_of(mid)
        self.image = self._zero_edge_of(curve.theta(F(curve.point(mid))))
        s_lo = self._sigma(np.arange(len(self.one)), np.full(len(self.one), 0.25))
        s_hi = self._sigma(np.arange(len(self.one)), np.full(len(self.one), 0.75))
        self.increasing = s_hi > s_lo
        self.B = (self.side[None, :] == self.image[:, None]).astype(np.int64)

    def _zero_edge_of(self, th):
        th = np.atleast_1d(th)
        out = np.full(len(th), -1)
        for k, (a, b) in enumerate(self.zero):
            t = a + np.mod(th - a, 2 * np.pi)
            out[(t >= a) & (t <= b) & (out < 0)] = k
        return out

    def _local(self, k, th):
        a, b = self.zero[k, 0], self.zero[k, 1]
        t = a + np.mod(th - a + 1e-12, 2 * np.pi) - 1e-12
        return (t - a) / (b - a)

    def _sigma(self, e, s):
        """Local parameter in the image 0-edge of the point at parameter s of 1-edge e."""
        a, b = self.one[e, 0], self.one[e, 1]
        z = self.cat.curve.point(a + s * (b - a))
        th = self.cat.curve.theta(self.cat.map(z))
        return self._local(self.image[e], th)

    def inverse(self, e, target_theta, steps=48):
        """Bisection inverse of f on 1-edges ``e`` at curve parameters ``target_theta``."""
        sig = np.clip(self._local(self.image[e], target_theta), 0, 1)
        lo = np.zeros(len(e))
        hi = np.ones(len(e))
        inc = self.increasing[e]
        for _ in range(steps):
            mid = 0.5 * (lo + hi)
            val = self._sigma(e, mid)
            below = np.where(inc, val < sig, val > sig)
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        s = 0.5 * (lo + hi)
        a, b = self.one[e, 0], self.one[e, 1]
        return a + s * (b - a)

    def periodic_words(self, n):
        B = self.B
        words = np.arange(len(B))[:, None]
        for _ in range(n - 1):
            rows = []
            for j in range(len(B)):
                sel = words[B[words[:, -1], j] == 1]
                if len(sel):
                    rows.append(np.concatenate([sel, np.full((len(sel), 1), j)], axis=1))
            words = np.concatenate(rows) if rows else np.zeros((0, words.shape[1] + 1), int)
        return words[B[words[:, -1], words[:, 0]] == 1]

    def periodic_points(self, n, max_iter=None, tol=1e-10):
        words = self.periodic_words(n)
        if len(words) == 0:
            return np.zeros(0, complex), words
        k0 = self.side[words[:, 0]]
        th = self.zero[k0].mean(axis=1)
        # each cycle contracts by about 2^-n; Newton finishes the job
        max_iter = max_iter or (36 // n + 2)
        for _ in range(max_iter):
            t = th
            for i in range(n - 1, -1, -1):
                t = self.inverse(words[:, i], t)
            done = np.abs(np.mod(t - th + np.pi, 2 * np.pi) - np.pi) < tol
            th = t
            if np.all(done):
                break
        z = self.cat.curve.point(th)
        z = newton_periodic(self.cat.map, z, n)
        return z, words


# ---------------------------------------------------------------------------
# orbit store
# ---------------------------------------------------------------------------


@dataclass
class PeriodicLevel:
    """All fixed points of ``f^n`` with word multiplicities."""

    n: int
    points: np.ndarray
    multiplicity: np.ndarray
    boundary: np.ndarray
    words: list
    residual: np.ndarray
    min_period: np.ndarray
    word_points: np.ndarray = field(repr=False, default=None)
    word_chain_sums: np.ndarray = field(repr=False, default=None)
    word_index: np.ndarray = field(repr=False, default=None)
    failures: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.points)


def _dedupe(points, tol=None):
    """Group points closer than ``tol`` (chordal); returns (labels, representatives)."""
    tol = TAU_DEDUPE if tol is None else tol
    X = sphere_coords(points)
    tree = cKDTree(X)
    pairs = tree.query_pairs(tol, output_type="ndarray")
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in pairs:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    roots = np.array([find(i) for i in range(len(points))], dtype=np.int64)
    uniq, labels = np.unique(roots, return_inverse=True)
    return labels, uniq


def _divisors(n):
    return [k for k in range(1, n) if n % k == 0]


def build_level(cat: TileCatalog, n: int, phi: Potential | None = None, _edges: EdgeSystem | None = None):
    F = cat.map
    words = periodic_word_array(cat, n)
    x, res, bnd, chain = locate_periodic_points(cat, words)
    chain_sums = None
    if phi is not None:
        chain_sums = np.zeros(len(words))
        for i in range(n):
            pts = x if i == 0 else chain[i]
            chain_sums = chain_sums + phi(pts)
    edges = _edges if _edges is not None else EdgeSystem(cat)
    ez, _ = edges.periodic_points(n)
    post = np.array(cat.post, dtype=complex)
    postper = []
    for p in post:
        z = p
        for _ in range(n):
            z = F(z)
        if chordal_dist(z, p) < TAU_DEDUPE:
            postper.append(p)
    postper = np.array(postper, dtype=complex)
    failures = []
    good = res < 1e-10
    for i in np.nonzero(~good)[0]:
        failures.append((tuple(int(t) for t in words[i]), complex(x[i]), float(res[i])))
    # word points first, so every word gets a label
    allpts = np.concatenate([x, ez, postper])
    labels, reps = _dedupe(allpts)
    P = len(reps)
    points = allpts[reps]
    mult = np.bincount(labels[: len(x)][good], minlength=P)
    boundary = np.zeros(P, dtype=bool)
    boundary[labels[len(x):]] = True
    boundary |= cat.curve.distance(points) < 1e-7
    # keep only points that actually solve f^n(z) = z
    r = periodic_residual(F, points, n)
    keep = r < 1e-10
    remap = -np.ones(P, dtype=np.int64)
    remap[keep] = np.arange(int(keep.sum()))
    wlist = [[] for _ in range(int(keep.sum()))]
    word_index = remap[labels[: len(x)]]
    word_index[~good] = -1
    for i in np.nonzero(word_index >= 0)[0]:
        wlist[word_index[i]].append(tuple(int(t) for t in words[i]))
    points = points[keep]
    minp = np.full(len(points), n)
    # smallest divisor wins
    for k in sorted(_divisors(n), reverse=True):
        rk = periodic_residual(F, points, k)
        minp = np.where(rk < 1e-8, k, minp)
    return PeriodicLevel(
        n=n,
        points=points,
        multiplicity=mult[keep],
        boundary=boundary[keep],
        words=wlist,
        residual=r[keep],
        min_period=minp,
        word_points=x,
        word_chain_sums=chain_sums,
        word_index=word_index,
        failures=failures,
    )


class OrbitStore:
    """Fixed points of ``f^n`` for ``n <= N_max`` and the primitive orbits they form."""

    def __init__(self, cat: TileCatalog, n_max: int, phi: Potential | None = None):
        if n_max < 1:
            raise ValueError("N_max must be >= 1")
        self.cat = cat
        self.n_max = n_max
        self.phi = phi
        edges = EdgeSystem(cat)
        self.edges = edges
        self.levels = {n: build_level(cat, n, phi, edges) for n in range(1, n_max + 1)}
        self.orbits = self._assemble()
        self._sums = {}

    @property
    def failures(self):
        return [f for lv in self.levels.values() for f in lv.failures]

    def _assemble(self):
        F = self.cat.map
        out = []
        for n, lv in self.levels.items():
            prim = np.nonzero(lv.min_period == n)[0]
            if len(prim) == 0:
                continue
            pts = lv.points[prim]
            tree = cKDTree(sphere_coords(pts))
            img = np.asarray(F(pts), dtype=complex)
            dist, nxt = tree.query(sphere_coords(img))
            succ = np.where(dist < 1e-7, nxt, -1)
            seen = np.zeros(len(prim), dtype=bool)
            for i in range(len(prim)):
                if seen[i]:
                    continue
                cyc = [i]
                seen[i] = True
                j = succ[i]
                while j >= 0 and j != i and len(cyc) <= n:
                    cyc.append(j)
                    seen[j] = True
                    j = succ[j]
                if j != i or len(cyc) != n:
                    # orbit closure failed; keep the point as its own record
                    pass
                members = [prim[k] for k in cyc]
                wmin = None
                rep_pos = 0
                for pos, m in enumerate(members):
                    for w in lv.words[m]:
                        if wmin is None or w < wmin:
                            wmin, rep_pos = w, pos
                if wmin is None:
                    key = [tuple(np.round(sphere_coords(lv.points[m]), 12)) for m in members]
                    rep_pos = int(min(range(len(members)), key=lambda p: key[p]))
                order = members[rep_pos:] + members[:rep_pos]
                cyc_pts = [complex(lv.points[m]) for m in order]
                bsum = float(np.sum(self.phi(np.array(cyc_pts)))) if self.phi is not None else float("nan")
                dw = int(np.prod(F.local_degree(np.array(cyc_pts))))
                out.append(
                    PeriodicOrbit(
                        period=n,
                        representative=cyc_pts[0],
                        points=cyc_pts,
                        primitive=len(cyc) == n and j == i,
                        birkhoff=bsum,
                        degree_weight=dw,
                        word=TileWord(wmin) if wmin is not None else None,
                        boundary=bool(np.any(lv.boundary[order])),
                    )
                )
        return out

    def fixed_point_sums(self, n: int) -> np.ndarray:
        """``S_n phi`` at every point of ``P_{1,f^n}`` by forward iteration."""
        if n not in self.levels:
            raise KeyError(f"period {n} not in store (N_max = {self.n_max})")
        if n not in self._sums:
            F = self.cat.map
            z = self.levels[n].points.copy()
            s = np.zeros(len(z))
            for _ in range(n):
                s += self.phi(z)
                z = np.asarray(F(z), dtype=complex)
            self._sums[n] = s
        return self._sums[n]

    def primitive(self, n: int | None = None):
        return [o for o in self.orbits if o.primitive and (n is None or o.period == n)]

    def with_potential(self, phi: Potential) -> "OrbitStore":
        new = object.__new__(OrbitStore)
        new.cat, new.n_max, new.phi, new.edges = self.cat, self.n_max, phi, self.edges
        new.levels = {}
        for n, lv in self.levels.items():
            sums = None
            if lv.word_points is not None:
                # chain sums need the chain; recompute from forward orbits of the word points
                z = lv.word_points.copy()
                sums = np.zeros(len(z))
                for _ in range(n):
                    sums += phi(z)
                    z = np.asarray(self.cat.map(z), dtype=complex)
            new.levels[n] = PeriodicLevel(**{**lv.__dict__, "word_chain_sums": sums})
        new.orbits = []
        for o in self.orbits:
            new.orbits.append(PeriodicOrbit(**{**o.__dict__, "birkhoff": float(np.sum(phi(np.array(o.points))))}))
        new._sums = {}
        return new


def primitive_orbits(cat: TileCatalog, n_max: int, phi: Potential, t_cut: float | None = None, certificate=None):
    """Primitive periodic orbits of period at most ``n_max``."""
    store = OrbitStore(cat, n_max, phi)
    orbits = store.primitive()
    if t_cut is not None:
        if certificate is None or not certificate.ok:
            raise PreconditionViolated("pruning by T_cut needs an eventual-positivity certificate")
        orbits = [o for o in orbits if o.birkhoff <= t_cut]
    return orbits


def moebius_mu(n: int) -> int:
    if n == 1:
        return 1
    res, k, m = 1, 2, n
    while k * k <= m:
        if m % k == 0:
            m //= k
            if m % k == 0:
                return 0
            res = -res
        k += 1
    if m > 1:
        res = -res
    return res


def necklace_count(trace_fn, n: int) -> int:
    """``(1/n) sum_{d|n} mu(d) trace(n/d)``: primitive cycles from fixed-point counts."""
    tot = sum(moebius_mu(d) * trace_fn(n // d) for d in range(1, n + 1) if n % d == 0)
    if tot % n:
        raise ValueError("necklace count is not an integer")
    return tot // n


# ---------------------------------------------------------------------------
# eventual positivity
# ---------------------------------------------------------------------------


@dataclass
class PositivityCertificate:
    ok: bool
    N: int | None
    margin: float
    level: int


def eventual_positivity(cat: TileCatalog, phi: Potential, n_probe: int = 8, level: int = 5) -> PositivityCertificate:
    """Smallest N with min S_N phi > 0 over level-``level`` collocation points."""
    tree = PullbackTree(cat, level)
    pts = np.concatenate([tree.points[k] for k in range(level + 1)])
    F = cat.map
    s = np.zeros(len(pts))
    z = pts.copy()
    last = float("-inf")
    for N in range(1, n_probe + 1):
        s = s + phi(z)
        z = np.asarray(F(z), dtype=complex)
        last = float(np.min(s))
        if last > 0:
            return PositivityCertificate(True, N, last, level)
    return PositivityCertificate(False, None, last, level)
