"""Temporal distance and non-integrability probes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .continuation import BLACK, WHITE
from .orbits import OrbitStore
from .potentials import Potential
from .sphere import chordal_dist
from .tiles import TAU_BRANCH, PreconditionViolated, TileCatalog, pull_words


@dataclass(frozen=True)
class BranchSequence:
    """One-tiles ``(xi_0, xi_-1, ..., xi_-K)``; each ``xi_-(i+1)`` maps onto the 0-tile holding ``xi_-i``."""

    letters: tuple

    def __len__(self):
        return len(self.letters)

    def check(self, cat: TileCatalog):
        for a, b in zip(self.letters, self.letters[1:]):
            if cat.colors[b] != cat.sides[a]:
                raise PreconditionViolated(f"branch sequence is not backward admissible at ({a}, {b})")
        return self


def random_branch_sequence(cat: TileCatalog, color: int, K: int, rng) -> BranchSequence:
    """Uniform backward-admissible sequence whose first tile maps onto the given 0-tile."""
    groups = cat.color_groups
    cur = int(rng.choice(groups[color]))
    out = [cur]
    for _ in range(K):
        cur = int(rng.choice(groups[cat.sides[cur]]))
        out.append(cur)
    return BranchSequence(tuple(out))


def _chain(cat, xi: BranchSequence, z, K):
    """Points ``g_i(z)`` for i = 0..K, g_i the composed branch through xi_0..xi_-i."""
    letters = np.array(xi.letters[: K + 1])
    # pull_words pulls along X_0..X_{n-1} from the right; reversing gives every prefix of the branch
    words = letters[::-1][None, :]
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    _, chain = pull_words(cat, words, z[None, :])
    # chain[K + 1 - i - 1] is the image of depth i+1
    return [chain[K - i][0] for i in range(K + 1)]


def _check_points(cat, xi, pts):
    c = int(cat.colors[xi.letters[0]])
    pts = np.atleast_1d(np.asarray(pts, dtype=complex))
    if np.any(cat.curve.side(pts) != c) or np.any(cat.curve.distance(pts) < TAU_BRANCH):
        raise PreconditionViolated("points must lie inside the 0-tile covered by the first branch tile")


def delta_terms(cat: TileCatalog, phi: Potential, xi: BranchSequence, x, y, K: int):
    """Series terms ``phi(g_i x) - phi(g_i y)`` for i = 0..K, vectorized over point arrays."""
    if K + 1 > len(xi):
        raise ValueError("branch sequence shorter than the requested depth")
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    y = np.atleast_1d(np.asarray(y, dtype=complex))
    _check_points(cat, xi, np.concatenate([x, y]))
    ch = _chain(cat, xi, np.concatenate([x, y]), K)
    n = len(x)
    return np.array([phi(c[:n]) - phi(c[n:]) for c in ch])  # (K+1, n)


def _envelope_fit(terms, floor=0.5):
    """Line ``log env_i <= c + i log r`` dominating the monotone envelope of |terms|."""
    t = np.abs(np.atleast_2d(terms))
    env = np.maximum.accumulate(t[::-1], axis=0)[::-1]
    K = len(t)
    # the envelope jumps near postcritical points, so the whole sequence is used
    i = np.arange(K)
    logs = np.log(np.maximum(env, 1e-300))
    slope = np.polyfit(i, logs, 1)[0] if len(i) >= 2 else np.zeros(t.shape[1])
    r = np.clip(np.exp(slope), floor, 0.95)
    c = np.max(logs - i[:, None] * np.log(r), axis=0)
    return c, r


def decay_rate(terms, floor=0.5) -> np.ndarray:
    """Fitted geometric decay of the term envelope, clipped to [floor, 0.95]."""
    return _envelope_fit(terms, floor)[1]


def rate_floor(cat: TileCatalog, phi: Potential) -> float:
    """``deg^(-alpha/2)``: the slowest contraction of branch differences for the catalog maps."""
    return float(cat.degree ** (-phi.holder_exponent / 2))


def tail_bound(terms, floor=0.5) -> np.ndarray:
    """Sum of the dominating geometric envelope beyond the last term, with a factor 2 slack."""
    c, r = _envelope_fit(terms, floor)
    K = len(np.atleast_2d(terms))
    return 2 * np.exp(c + K * np.log(r)) / (1 - r)


def temporal_delta(cat: TileCatalog, phi: Potential, xi: BranchSequence, x, y, K: int):
    """Truncated series and its tail bound; scalars in, scalars out."""
    scalar = np.ndim(x) == 0 and np.ndim(y) == 0
    T = delta_terms(cat, phi, xi, x, y, K)
    val = T.sum(axis=0)
    tb = tail_bound(T, rate_floor(cat, phi))
    if scalar:
        return float(val[0]), float(tb[0])
    return val, tb


def temporal_distance(cat: TileCatalog, phi: Potential, xi: BranchSequence, eta: BranchSequence, x, y, K: int):
    if cat.colors[xi.letters[0]] != cat.colors[eta.letters[0]]:
        raise PreconditionViolated("branch sequences start over different 0-tiles")
    a, _ = temporal_delta(cat, phi, xi, x, y, K)
    b, _ = temporal_delta(cat, phi, eta, x, y, K)
    return a - b


# ---------------------------------------------------------------------------
# strong non-integrability probe
# ---------------------------------------------------------------------------


@dataclass
class SNIReport:
    epsilon_estimate: float
    M: int
    N: int
    samples: list
    label: str = "epsilon_estimate (empirical)"
    inconclusive: bool = False


def _random_word(cat, n, last_color, rng):
    """Admissible word of length n whose last letter has the given color."""
    groups = cat.color_groups
    out = [int(rng.choice(groups[last_color]))]
    for _ in range(n - 1):
        out.append(int(rng.choice(groups[cat.sides[out[-1]]])))
    return out[::-1]


def sni_probe(cat: TileCatalog, phi: Potential, M: int = 2, N: int = 8, n_samples: int = 8, n_pairs: int = 8, seed: int = 0, sep: float = 0.2) -> SNIReport:
    """Min over sampled M-tiles of the max over branch pairs of the SNI ratio."""
    rng = np.random.default_rng(seed)
    alpha = phi.holder_exponent
    frame = cat.frame
    colors = np.array([(BLACK, WHITE)[k % 2] for k in range(n_samples)])
    words = np.array([_random_word(cat, M, c, rng) for c in colors])
    ang = rng.uniform(0, 2 * np.pi, n_samples)
    # candidate points: disc radius 0.5 on opposite sides, plus a probe ring for the diameter
    u = np.concatenate([0.5 * np.exp(1j * (ang[:, None] + np.array([0, np.pi]))), np.broadcast_to(0.98 * np.exp(2j * np.pi * np.arange(8) / 8), (n_samples, 8))], axis=1)
    z = frame.from_disc(u, np.repeat(colors[:, None], 10, axis=1))
    pts, _ = pull_words(cat, words, z)
    d12 = chordal_dist(pts[:, 0], pts[:, 1])
    ring = pts[:, 2:]
    diam = np.max(chordal_dist(ring[:, :, None], ring[:, None, :]).reshape(n_samples, -1), axis=1)
    keep = np.nonzero(d12 >= sep * diam)[0]
    if len(keep) == 0:
        raise PreconditionViolated("no well-separated point pairs were found")
    branch = []
    for k in keep:
        s_side = int(cat.sides[words[k, 0]])
        for _ in range(n_pairs):
            for _ in range(2):
                branch.append(_random_word(cat, N, s_side, rng) + list(words[k]))
    branch = np.array(branch)
    zz = np.repeat(z[keep, :2], 2 * n_pairs, axis=0)
    _, ch = pull_words(cat, branch, zz)
    S = sum(np.asarray(phi(ch[i])) for i in range(N)).reshape(len(keep), n_pairs, 2, 2)
    q = np.abs(S[:, :, 0, 0] - S[:, :, 1, 0] - S[:, :, 0, 1] + S[:, :, 1, 1]) / d12[keep, None] ** alpha
    same = np.all(branch[0::2] == branch[1::2], axis=1).reshape(len(keep), n_pairs)
    q = np.where(same, 0.0, q)
    best = q.max(axis=1)
    rows = [{"word": [int(t) for t in words[k]], "d12": float(d12[k]), "diam": float(diam[k]), "max_ratio": float(b)} for k, b in zip(keep, best)]
    eps = float(best.min())
    return SNIReport(eps, M, N, rows, inconclusive=eps <= 0)


# ---------------------------------------------------------------------------
# cohomology probe
# ---------------------------------------------------------------------------


@dataclass
class CohomologyReport:
    spread: float
    averages: np.ndarray
    periods: np.ndarray


def cohomology_probe(store: OrbitStore, phi: Potential | None = None) -> CohomologyReport:
    """Spread of the orbit averages ``l(tau)/period``."""
    if phi is not None and phi is not store.phi:
        store = store.with_potential(phi)
    orbits = store.primitive()
    avg = np.array([o.birkhoff / o.period for o in orbits])
    per = np.array([o.period for o in orbits])
    return CohomologyReport(float(np.ptp(avg)) if len(avg) else 0.0, avg, per)
