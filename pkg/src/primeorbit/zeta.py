"""Orbit sums Z^(n)(s), truncated zeta functions, Dirichlet series and Euler products."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .orbits import OrbitStore, periodic_word_array

CONVENTIONS = ("geometric", "symbolic")


class IncompleteStore(Exception):
    pass


class DivergenceError(Exception):
    pass


@dataclass
class ZetaEvaluation:
    s: complex
    N: int
    log_sum: complex
    euler_log: complex | None
    tail_estimate: float
    per_n: list = field(default_factory=list)
    divergence_region: bool = False

    @property
    def zeta(self) -> complex:
        return complex(np.exp(self.log_sum))


def _check(store: OrbitStore, n: int):
    missing = [k for k in range(1, n + 1) if k not in store.levels]
    if missing:
        raise IncompleteStore(f"orbit store is missing periods {missing}")


def z_n(store: OrbitStore, s: complex, n: int, convention: str = "geometric") -> complex:
    """``sum over fixed points x of f^n`` of ``exp(-s S_n phi(x))``.

    ``geometric`` counts each point once; ``symbolic`` weights each point by the
    number of periodic tile words refining to it.
    """
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    _check(store, n)
    S = store.fixed_point_sums(n)
    w = np.ones(len(S)) if convention == "geometric" else store.levels[n].multiplicity
    return complex(np.sum(w * np.exp(-s * S)))


def tile_sum_zn(store: OrbitStore, s: complex, n: int) -> complex:
    """Sum over periodic n-tiles of ``exp(-s S_n phi)`` at each tile's fixed point.

    Birkhoff sums are taken along the inverse-branch chain of each word, not
    by forward iteration.
    """
    _check(store, n)
    lv = store.levels[n]
    if lv.word_chain_sums is None:
        raise ValueError("orbit store was built without a potential")
    good = lv.word_index >= 0
    return complex(np.sum(np.exp(-s * lv.word_chain_sums[good])))


def degree_weights(store: OrbitStore, n: int) -> np.ndarray:
    F = store.cat.map
    z = store.levels[n].points.copy()
    w = np.ones(len(z), dtype=np.int64)
    for _ in range(n):
        w *= F.local_degree(z)
        z = np.asarray(F(z), dtype=complex)
    return w


def _tail(per_n, N):
    if N < 2:
        return math.inf if N == 1 else 0.0
    a, b = abs(per_n[-1]), abs(per_n[-2])
    if b == 0:
        return 0.0 if a == 0 else math.inf
    r = a / b * (N - 1) / N
    if r >= 1:
        return math.inf
    return a / N * r / (1 - r)


def log_zeta_partial(store: OrbitStore, s: complex, N: int, s0: float | None = None, convention: str = "geometric", with_euler: bool = True):
    """``sum_{n<=N} Z^(n)(s)/n`` with a last-ratio tail estimate."""
    if N < 0:
        raise ValueError("N must be >= 0")
    per_n = [z_n(store, s, n, convention) for n in range(1, N + 1)]
    log_sum = complex(sum(z / n for n, z in enumerate(per_n, start=1)))
    euler = None
    if with_euler and N >= 1:
        try:
            euler = euler_product_partial(store, s, N)
        except DivergenceError:
            euler = None
    div = s0 is not None and np.real(s) <= s0
    return ZetaEvaluation(complex(s), N, log_sum, euler, float(_tail(per_n, N)), per_n, bool(div))


def dirichlet_partial(store: OrbitStore, s: complex, N: int) -> complex:
    """Degree-weighted partial log-sum."""
    tot = 0j
    for n in range(1, N + 1):
        _check(store, n)
        S = store.fixed_point_sums(n)
        tot += complex(np.sum(degree_weights(store, n) * np.exp(-s * S))) / n
    return tot


def euler_product_partial(store: OrbitStore, s: complex, N: int) -> complex:
    """``sum over primitive orbits of period <= N`` of ``-log(1 - exp(-s l(tau)))``."""
    _check(store, N)
    tot = 0j
    for o in store.primitive():
        if o.period > N:
            continue
        q = np.exp(-s * o.birkhoff)
        if abs(q) >= 1:
            raise DivergenceError(f"factor modulus {abs(q):.3g} >= 1 for a period-{o.period} orbit")
        tot += -np.log1p(-q)
    return complex(tot)


def word_census(store: OrbitStore, n: int) -> dict:
    """Points, words and boundary multiplicities at period n."""
    lv = store.levels[n]
    return {
        "points": int(lv.count),
        "words": int(len(periodic_word_array(store.cat, n))),
        "boundary_points": int(lv.boundary.sum()),
        "boundary_words": int(lv.multiplicity[lv.boundary].sum()),
        "unworded_points": int(np.sum(lv.multiplicity == 0)),
    }
