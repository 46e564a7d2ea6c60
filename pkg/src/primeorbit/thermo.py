"""Transfer operators: pressure, s0, eigenfunctions, Gibbs weights, split operators."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.special import logsumexp

from .continuation import BLACK, WHITE
from .orbits import PositivityCertificate, eventual_positivity
from .potentials import Potential
from .sphere import chordal_dist
from .tiles import BudgetExceeded, PreconditionViolated, PullbackTree, TileCatalog, pull_back_all, ring_probes

TAU_PRESSURE = 1e-7
MAX_TREE_DEPTH = 10


class NumericFailure(Exception):
    pass


_TREES: dict = {}


def shared_tree(cat: TileCatalog, depth: int) -> PullbackTree:
    """Standard-root pullback tree, cached per catalog and extended on demand."""
    if depth > MAX_TREE_DEPTH:
        raise BudgetExceeded(f"tree depth {depth} exceeds {MAX_TREE_DEPTH}")
    key = id(cat)
    entry = _TREES.get(key)
    if entry is None or entry[0] is not cat:
        entry = (cat, PullbackTree(cat, depth))
        _TREES[key] = entry
    return entry[1].extend(depth)


# ---------------------------------------------------------------------------
# tile functions
# ---------------------------------------------------------------------------


@dataclass
class TileFunction:
    """Piecewise-constant function on level-m tiles, in pullback-tree order."""

    level: int
    values: np.ndarray
    sides: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.sides.shape:
            raise ValueError("one value per level-m tile is required")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("tile function has non-finite entries")

    @property
    def black(self):
        return self.values[self.sides == BLACK]

    @property
    def white(self):
        return self.values[self.sides == WHITE]

    @property
    def pair(self):
        return self.black, self.white

    @classmethod
    def from_pair(cls, level, sides, ub, uw):
        vals = np.zeros(len(sides), dtype=np.result_type(ub, uw))
        vals[sides == BLACK] = ub
        vals[sides == WHITE] = uw
        return cls(level, vals, sides)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


# ---------------------------------------------------------------------------
# exact preimage-tree sums
# ---------------------------------------------------------------------------


def _log_transfer_at(cat, psi, m, y):
    y = complex(y)
    for attempt in range(3):
        side = int(cat.curve.side(y))
        if side >= 0 and cat.curve.distance(y) > 1e-6:
            break
        y = y * np.exp(1e-3j) + 1e-3j
    else:
        raise PreconditionViolated("base point lies on the curve")
    tree = PullbackTree(cat, m, [y], [side])
    S = tree.birkhoff(psi, m)[m]
    return float(logsumexp(S))


def transfer_value(cat: TileCatalog, psi: Potential | None, m: int, y=None) -> float:
    """``sum over f^-m(y)`` of ``exp(S_m psi)``; ``psi=None`` means zero."""
    if m < 0:
        raise ValueError("m must be >= 0")
    d = cat.degree
    if m == 0:
        return 1.0
    if psi is None or (psi.constant is not None and psi.constant == 0):
        return float(d**m)
    if psi.constant is not None:
        return float(d**m) * math.exp(m * psi.constant)
    y = cat.base_points[BLACK] if y is None else y
    return math.exp(_log_transfer_at(cat, psi, m, y))


class PressureCurve:
    """``a -> (1/m) log sum exp(-a S_m phi)`` over the depth-m preimages of ``y``."""

    def __init__(self, cat: TileCatalog, phi: Potential, m: int = 8, y=None):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.cat, self.phi, self.m = cat, phi, m
        self.logd = math.log(cat.degree)
        self.y = cat.base_points[BLACK] if y is None else complex(y)
        self.S = None
        if phi.constant is None:
            if y is None:
                tree = shared_tree(cat, m)
                S = tree.birkhoff(phi, m)[m]
                self.S = S[tree.root[m] == BLACK]
            else:
                tree = PullbackTree(cat, m, [self.y], [int(cat.curve.side(self.y))])
                self.S = tree.birkhoff(phi, m)[m]

    def __call__(self, a: float) -> float:
        if self.S is None:
            return self.logd - a * self.phi.constant
        if a == 0:
            return self.logd
        return float(logsumexp(-a * self.S)) / self.m


def pressure(cat: TileCatalog, phi: Potential, a: float, m: int = 8, y=None) -> float:
    return PressureCurve(cat, phi, m, y)(a)


def pressure_spread(cat: TileCatalog, phi: Potential, a: float, m: int = 8) -> float:
    """Spread of the estimator over three base points."""
    ys = [cat.base_points[BLACK], cat.base_points[WHITE], ring_probes(cat, BLACK, 3, 0.5)[1]]
    vals = [PressureCurve(cat, phi, m, y)(a) for y in ys]
    return float(max(vals) - min(vals))


@dataclass
class S0Result:
    s0: float
    residual: float
    bracket: tuple
    certificate: PositivityCertificate
    m: int


def solve_s0(cat: TileCatalog, phi: Potential, m: int = 8, certificate: PositivityCertificate | None = None, curve=None):
    """Zero of the pressure estimator in ``a``."""
    if certificate is None:
        certificate = eventual_positivity(cat, phi)
    if not certificate.ok:
        raise PreconditionViolated("potential is not eventually positive on the probe set")
    curve = curve or PressureCurve(cat, phi, m)
    lo = 1e-6
    hi = certificate.N * curve.logd / certificate.margin + 1
    plo, phi_ = curve(lo), curve(hi)
    if not (plo > 0 > phi_):
        raise NumericFailure(f"no sign change of the pressure on [{lo}, {hi}]: {plo}, {phi_}")
    s0 = brentq(curve, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    res = abs(curve(s0))
    if res >= TAU_PRESSURE:
        raise NumericFailure(f"pressure residual {res} at s0 = {s0}")
    return S0Result(float(s0), float(res), (lo, hi), certificate, m)


# ---------------------------------------------------------------------------
# discretized Ruelle operator on level-m tiles
# ---------------------------------------------------------------------------


def _power(apply, n, tol=1e-15, maxiter=5000):
    v = np.ones(n)
    lam = 0.0
    for _ in range(maxiter):
        w = apply(v)
        lam_new = float(np.max(w))
        w = w / lam_new
        if np.max(np.abs(w - v)) < tol * 10 and abs(lam_new - lam) <= tol * lam_new:
            return lam_new, w
        v, lam = w, lam_new
    raise NumericFailure("power iteration did not converge")


class DiscreteRuelle:
    """Ruelle operators of ``-s phi`` acting on level-m tile functions.

    Entry ``(tail(y), prefix(y))`` for each level-(m+1) node ``y`` carries
    ``exp(-s phi(y))``: the pullback of a level-m collocation point through a
    one-tile reads its argument on the length-m prefix of the longer word.
    """

    def __init__(self, cat: TileCatalog, phi: Potential, m: int = 6):
        if m < 1:
            raise ValueError("m must be >= 1")
        self.cat, self.phi, self.m = cat, phi, m
        tree = shared_tree(cat, m + 1)
        self.tree = tree
        self.rows = tree.tail[m + 1]
        self.cols = tree.prefix(m + 1)
        self.phi_child = np.asarray(phi(tree.points[m + 1]), dtype=float)
        self.sides = tree.side[m].astype(np.int64)
        self.n = tree.size(m)
        self._eig = {}

    def matrix(self, logw) -> sparse.csr_matrix:
        return sparse.csr_matrix((np.exp(logw), (self.rows, self.cols)), shape=(self.n, self.n))

    def eigen(self, a: float):
        """Perron data ``(lambda, u, nu)`` of ``L_{-a phi}``; ``sum nu = 1``, ``nu . u = 1``."""
        a = float(a)
        if a not in self._eig:
            M = self.matrix(-a * self.phi_child)
            MT = M.T.tocsr()
            lam, u = _power(M.dot, self.n)
            lam2, nu = _power(MT.dot, self.n)
            nu = nu / nu.sum()
            u = u / float(nu @ u)
            self._eig[a] = (lam, u, nu, abs(lam - lam2) / lam)
        return self._eig[a][:3]

    def log_lambda(self, a: float) -> float:
        return math.log(self.eigen(a)[0])

    def normalized_logw(self, s: complex):
        """Log entries of the normalized operator for ``-s phi``, normalized with ``a = Re s``."""
        lam, u, _ = self.eigen(float(np.real(s)))
        lw = -s * self.phi_child - math.log(lam) + np.log(u[self.cols]) - np.log(u[self.rows])
        return lw if np.iscomplexobj(lw) and np.any(np.imag(lw)) else np.real(lw)

    def normalized(self, s: complex) -> sparse.csr_matrix:
        return self.matrix(self.normalized_logw(s))

    def equilibrium(self, a: float) -> np.ndarray:
        _, u, nu = self.eigen(a)
        mu = nu * u
        return mu / mu.sum()


# ---------------------------------------------------------------------------
# thermodynamic solution
# ---------------------------------------------------------------------------


@dataclass
class ThermoSolution:
    """Thermodynamic data for ``-s0 phi``; operators act on level-m tile functions."""

    cat: TileCatalog
    phi: Potential
    m: int
    s0: float
    s0_residual: float
    pressure_samples: list
    ruelle: DiscreteRuelle
    eigenfunction: TileFunction
    gibbs: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def sides(self):
        return self.ruelle.sides

    @property
    def equilibrium(self) -> np.ndarray:
        return self.ruelle.equilibrium(self.s0)

    def tile_function(self, values) -> TileFunction:
        return TileFunction(self.m, np.asarray(values), self.sides)

    def normalized_apply(self, u: TileFunction, s: complex | None = None) -> TileFunction:
        s = self.s0 if s is None else s
        L = self._op(s)
        return self.tile_function(L.dot(u.values))

    def _op(self, s):
        key = complex(s)
        cache = self.diagnostics.setdefault("_ops", {})
        if key not in cache:
            cache[key] = self.ruelle.normalized(s)
        return cache[key]

    def split_blocks(self, s: complex):
        """``{(c, c'): L^(1)_{c,c'}}``: one-tiles of color c on side c'."""
        L = self._op(s)
        sd = self.sides
        out = {}
        for c in (BLACK, WHITE):
            for c2 in (BLACK, WHITE):
                out[(c, c2)] = L[sd == c][:, sd == c2]
        return out

    def split_apply(self, s: complex, pair, n: int = 1, method: str = "matvec"):
        """``n``-fold split operator of ``-s phi`` (normalized) on ``(u_b, u_w)``."""
        ub, uw = (np.asarray(p, dtype=complex) for p in pair)
        if method == "paths":
            u = TileFunction.from_pair(self.m, self.sides, ub, uw).values
            v = self._paths_apply(s, u, n)
            return v[self.sides == BLACK], v[self.sides == WHITE]
        B = self.split_blocks(s)
        for _ in range(n):
            ub, uw = B[(BLACK, BLACK)] @ ub + B[(BLACK, WHITE)] @ uw, B[(WHITE, BLACK)] @ ub + B[(WHITE, WHITE)] @ uw
        return ub, uw

    def _paths_apply(self, s, u, n):
        """Explicit sum over n-step pullback paths with their summed log weights."""
        d = self.cat.degree
        lw = self.ruelle.normalized_logw(s)
        cols = self.ruelle.cols
        end = np.arange(self.ruelle.n)[:, None]
        acc = np.zeros((self.ruelle.n, 1), dtype=complex)
        for _ in range(n):
            kids = end[:, :, None] * d + np.arange(d)[None, None, :]
            acc = (acc[:, :, None] + lw[kids]).reshape(len(end), -1)
            end = cols[kids].reshape(len(end), -1)
        return np.sum(np.exp(acc) * u[end], axis=1)

    def normalized_potential(self, z):
        """``-s0 phi - log lambda + log u - log u o f`` with u read on level-m tiles."""
        lam, u, _ = self.ruelle.eigen(self.s0)
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        fz = np.asarray(self.cat.map(z), dtype=complex)
        i0 = tile_index(self.cat, z, self.m)
        i1 = tile_index(self.cat, fz, self.m)
        return -self.s0 * self.phi(z) - math.log(lam) + np.log(u[i0]) - np.log(u[i1])


def tile_index(cat: TileCatalog, z, m: int) -> np.ndarray:
    """Tree index of the level-m tile containing each point, by forward coding."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    d = cat.degree
    orbit = [z]
    for _ in range(m):
        orbit.append(np.asarray(cat.map(orbit[-1]), dtype=complex))
    sides = [cat.curve.side(p) for p in orbit]
    if any(np.any(s < 0) for s in sides):
        raise PreconditionViolated("point on the curve has no unique tile")
    idx = None
    for i in range(m - 1, -1, -1):
        c = sides[i + 1]
        kids = pull_back_all(cat, orbit[i + 1], c)
        r = np.argmin(chordal_dist(kids, orbit[i][:, None]), axis=1)
        idx = c * d + r if idx is None else idx * d + r
    return idx


def gibbs_weights(cat: TileCatalog, phi: Potential, m: int, a: float = 1.0, P: float | None = None):
    """Weights ``exp(-a S_m phi(x_X) - m P)`` over level-m tiles, normalized; plus max parent/child ratio."""
    tree = shared_tree(cat, m + 1)
    S = tree.birkhoff(phi, m + 1)
    if P is None:
        P = PressureCurve(cat, phi, m)(a)
    w = [np.exp(-a * S[k] - k * P) for k in (m, m + 1)]
    w = [x / x.sum() for x in w]
    parent = tree.prefix(m + 1)
    ratio = float(np.max(w[0][parent] / w[1]))
    return w[0], ratio


def cesaro_eigenfunction(cat: TileCatalog, phi: Potential, m: int, J: int, a: float, P: float):
    """``(1/J) sum_{j<J} Lbar^j(1)`` at level-m points by exact preimage trees; returns (u, residual)."""
    if m + J > MAX_TREE_DEPTH:
        raise BudgetExceeded(f"depth m + J = {m + J} exceeds {MAX_TREE_DEPTH}")
    d = cat.degree
    tree = shared_tree(cat, m + J)
    ew = [None] + [np.exp(-a * np.asarray(phi(tree.points[k])) - P) for k in range(1, m + J + 1)]

    def step(vals, k):
        # level-k values to level-(k-1) values
        return (ew[k] * vals).reshape(-1, d).sum(axis=1)

    total = np.zeros(tree.size(m))
    cur = {k: np.ones(tree.size(k)) for k in range(m, m + J + 1)}
    for j in range(J):
        total += cur[m]
        cur = {k: step(cur[k + 1], k + 1) for k in range(m, m + J - j)}
    u = total / J
    # residual of Lbar u - u with u read through prefixes
    Lu = (ew[m + 1] * u[tree.prefix(m + 1)]).reshape(-1, d).sum(axis=1)
    return u, float(np.max(np.abs(Lu - u)))


def build_thermo(
    cat: TileCatalog,
    phi: Potential,
    m_grid: int = 6,
    m_pressure: int = 8,
    certificate: PositivityCertificate | None = None,
    grid_step: float = 0.05,
) -> ThermoSolution:
    curve = PressureCurve(cat, phi, m_pressure)
    sres = solve_s0(cat, phi, m_pressure, certificate, curve)
    s0 = sres.s0
    ruelle = DiscreteRuelle(cat, phi, m_grid)
    lam, u, nu = ruelle.eigen(s0)
    eig = TileFunction(m_grid, u, ruelle.sides)
    grid = np.arange(0, 2 * s0 + grid_step / 2, grid_step)
    samples = [(float(a), m_pressure, curve(a)) for a in grid]
    pv = np.array([p for _, _, p in samples])
    margin = float(np.min(-np.diff(pv))) if len(pv) > 1 else float("nan")
    gibbs, ratio = gibbs_weights(cat, phi, m_grid, s0, curve(s0))
    L = ruelle.normalized(s0)
    diag = {
        "s0_residual": sres.residual,
        "s0_bracket": sres.bracket,
        "certificate": (sres.certificate.N, sres.certificate.margin),
        "log_lambda_grid": math.log(lam),
        "eigen_asymmetry": ruelle._eig[float(s0)][3],
        "eigen_residual": float(np.max(np.abs(ruelle.matrix(-s0 * ruelle.phi_child).dot(u) - lam * u))),
        "normalization_error": float(np.max(np.abs(L.dot(np.ones(ruelle.n)) - 1))),
        "monotone_margin": margin,
        "gibbs_parent_child_ratio": ratio,
        "pressure_spread": pressure_spread(cat, phi, s0, m_pressure) if phi.constant is None else 0.0,
    }
    return ThermoSolution(cat, phi, m_grid, s0, sres.residual, samples, ruelle, eig, gibbs, diag)


# ---------------------------------------------------------------------------
# decay probes
# ---------------------------------------------------------------------------


@dataclass
class DecayReport:
    norms: np.ndarray
    ratio: float
    envelope_ok: bool


def fit_ratio(norms) -> float:
    norms = np.asarray(norms, dtype=float)
    good = norms > 1e-300
    if good.sum() < 2:
        return 0.0
    n = np.arange(1, len(norms) + 1)[good]
    return float(np.exp(np.polyfit(n, np.log(norms[good]), 1)[0]))


def _report(norms):
    norms = np.asarray(norms)
    h = len(norms) // 2
    env = bool(np.max(norms[h:]) < np.max(norms[:h])) if h else True
    return DecayReport(norms, fit_ratio(norms), env)


def mean_zero(sol: ThermoSolution, values) -> np.ndarray:
    v = np.asarray(values)
    return v - sol.equilibrium @ v


def spectral_decay_probe(sol: ThermoSolution, u, n_max: int = 8) -> DecayReport:
    """Sup norms of ``Ltilde^n(u - mean)`` for ``n = 1..n_max``."""
    v = mean_zero(sol, u.values if isinstance(u, TileFunction) else u)
    L = sol._op(sol.s0)
    norms = []
    for _ in range(n_max):
        v = L.dot(v)
        norms.append(float(np.max(np.abs(v))))
    return _report(norms)


def l2_decay_probe(sol: ThermoSolution, s: complex, n_max: int = 8) -> DecayReport:
    """``L^2(mu)`` norms of iterates of the normalized operator of ``-s phi`` on the pair (1, 1)."""
    mu = sol.equilibrium
    L = sol._op(s)
    v = np.ones(sol.ruelle.n, dtype=complex)
    norms = []
    for _ in range(n_max):
        v = L.dot(v)
        norms.append(float(np.sqrt(mu @ np.abs(v) ** 2)))
    return _report(norms)
